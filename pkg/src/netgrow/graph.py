"""Undirected simple graphs, neighborhood queries and the JSON-lines record format."""

from __future__ import annotations

import json
from collections import deque
from typing import Iterable, Iterator, Sequence

import numpy as np


class GraphError(ValueError):
    """Structural problem: self-loop, bad label, malformed record."""


class Graph:
    """Immutable undirected simple graph on nodes ``0..n-1``.

    Build one with :class:`GraphBuilder` or :meth:`Graph.from_edges`. Edges are
    stored canonically as ``(u, v)`` with ``u < v`` in lexicographic order, and
    each node keeps a sorted neighbor tuple.
    """

    __slots__ = ("n", "edges", "adjacency")

    def __init__(self, n: int, edges: Sequence[tuple[int, int]], adjacency: Sequence[tuple[int, ...]]):
        self.n = n
        self.edges = tuple(edges)
        self.adjacency = tuple(adjacency)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[Sequence[int]]) -> Graph:
        builder = GraphBuilder(n)
        for u, v in edges:
            builder.add_edge(int(u), int(v))
        return builder.freeze()

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adjacency[v]

    def has_edge(self, u: int, v: int) -> bool:
        if u > v:
            u, v = v, u
        nbrs = self.adjacency[u]
        i = int(np.searchsorted(nbrs, v)) if nbrs else 0
        return i < len(nbrs) and nbrs[i] == v

    def degrees(self) -> np.ndarray:
        return np.fromiter((len(a) for a in self.adjacency), dtype=np.int64, count=self.n)

    def edge_array(self) -> np.ndarray:
        """Edges as an ``(|E|, 2)`` int array."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return np.asarray(self.edges, dtype=np.int64)

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        return len(k_hop_nodes(self, [0], self.n)) == self.n

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Graph):
            return NotImplemented
        return self.n == other.n and self.edges == other.edges

    def __hash__(self) -> int:
        return hash((self.n, self.edges))

    def __repr__(self) -> str:
        return f"Graph(n={self.n}, |E|={len(self.edges)})"


class GraphBuilder:
    """Mutable adjacency-set graph used while growing a network."""

    def __init__(self, n: int = 0, edges: Iterable[Sequence[int]] = ()):
        if n < 0:
            raise GraphError(f"negative node count {n}")
        self.adj: list[set[int]] = [set() for _ in range(n)]
        self.num_edges = 0
        for u, v in edges:
            self.add_edge(u, v)

    @classmethod
    def from_graph(cls, g: Graph) -> GraphBuilder:
        b = cls(0)
        b.adj = [set(a) for a in g.adjacency]
        b.num_edges = g.num_edges
        return b

    @property
    def n(self) -> int:
        return len(self.adj)

    def add_node(self) -> int:
        self.adj.append(set())
        return len(self.adj) - 1

    def pop_node(self) -> None:
        """Remove the most recently added node, which must be isolated."""
        if self.adj[-1]:
            raise GraphError("cannot pop a node that still has edges")
        self.adj.pop()

    def _check(self, u: int, v: int) -> None:
        n = len(self.adj)
        if u == v:
            raise GraphError(f"self-loop at node {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge ({u}, {v}) out of range for n={n}")

    def add_edge(self, u: int, v: int) -> bool:
        """Add ``{u, v}``; returns False if the edge was already present."""
        self._check(u, v)
        if v in self.adj[u]:
            return False
        self.adj[u].add(v)
        self.adj[v].add(u)
        self.num_edges += 1
        return True

    def remove_edge(self, u: int, v: int) -> bool:
        self._check(u, v)
        if v not in self.adj[u]:
            return False
        self.adj[u].discard(v)
        self.adj[v].discard(u)
        self.num_edges -= 1
        return True

    def has_edge(self, u: int, v: int) -> bool:
        return v in self.adj[u]

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def freeze(self) -> Graph:
        adjacency = [tuple(sorted(a)) for a in self.adj]
        edges = [(u, v) for u, nbrs in enumerate(adjacency) for v in nbrs if u < v]
        return Graph(len(adjacency), edges, adjacency)


def add_edge(g: Graph, u: int, v: int) -> tuple[Graph, bool]:
    """Return ``(g', changed)`` with ``{u, v}`` added to ``g``."""
    b = GraphBuilder.from_graph(g)
    changed = b.add_edge(u, v)
    return (b.freeze() if changed else g), changed


def degrees(g: Graph) -> np.ndarray:
    return g.degrees()


def _validate_nodes(g: Graph, nodes: Iterable[int]) -> list[int]:
    out = []
    for v in nodes:
        v = int(v)
        if not 0 <= v < g.n:
            raise GraphError(f"node {v} out of range for n={g.n}")
        out.append(v)
    return out


def k_hop_nodes(g: Graph, seeds: Iterable[int], k: int) -> list[int]:
    """Sorted nodes within shortest-path distance ``k`` of any seed."""
    seeds = _validate_nodes(g, seeds)
    if not seeds:
        raise GraphError("seed set is empty")
    if k < 0:
        raise GraphError(f"negative radius {k}")
    dist = {s: 0 for s in seeds}
    queue = deque(seeds)
    while queue:
        u = queue.popleft()
        d = dist[u]
        if d == k:
            continue
        for w in g.adjacency[u]:
            if w not in dist:
                dist[w] = d + 1
                queue.append(w)
    return sorted(dist)


def receptive_field(g: Graph, v: int, k: int) -> list[int]:
    """Nodes that can interact with ``v`` under a ``k``-localized growth rule."""
    return k_hop_nodes(g, [v], 2 * k + 1)


def induced_subgraph(g: Graph, nodes: Iterable[int]) -> tuple[Graph, list[int]]:
    """Compact relabeled subgraph plus ``label_map[new] = old``."""
    label_map = sorted(set(_validate_nodes(g, nodes)))
    index = {old: new for new, old in enumerate(label_map)}
    edges = [
        (index[u], index[v])
        for u in label_map
        for v in g.adjacency[u]
        if u < v and v in index
    ]
    return Graph.from_edges(len(label_map), edges), label_map


def disjoint_union(graphs: Sequence[Graph]) -> Graph:
    edges = []
    offset = 0
    for g in graphs:
        edges.extend((u + offset, v + offset) for u, v in g.edges)
        offset += g.n
    return Graph.from_edges(offset, edges)


def relabel(g: Graph, perm: Sequence[int]) -> Graph:
    """Graph with node ``v`` renamed to ``perm[v]``."""
    return Graph.from_edges(g.n, ((perm[u], perm[v]) for u, v in g.edges))


# -- JSON-lines records -------------------------------------------------------


def to_record(g: Graph, theta: Sequence[float] | None = None) -> dict:
    rec: dict = {"n": g.n, "edges": [[u, v] for u, v in g.edges]}
    if theta is not None:
        rec["theta"] = [float(t) for t in theta]
    return rec


def serialize(g: Graph, theta: Sequence[float] | None = None) -> str:
    """Canonical one-line JSON record (no trailing newline)."""
    return json.dumps(to_record(g, theta), separators=(",", ":"))


def from_record(rec: object, line: int | None = None) -> tuple[Graph, list[float] | None]:
    where = f" (line {line})" if line is not None else ""
    if not isinstance(rec, dict) or "n" not in rec or "edges" not in rec:
        raise GraphError(f"record must be an object with 'n' and 'edges'{where}")
    n = rec["n"]
    if not isinstance(n, int) or isinstance(n, bool) or n < 0:
        raise GraphError(f"invalid node count {n!r}{where}")
    edges = rec["edges"]
    if not isinstance(edges, list):
        raise GraphError(f"'edges' must be a list{where}")
    b = GraphBuilder(n)
    prev = None
    for e in edges:
        if not (isinstance(e, list) and len(e) == 2 and all(isinstance(x, int) and not isinstance(x, bool) for x in e)):
            raise GraphError(f"malformed edge {e!r}{where}")
        u, v = e
        if u >= v:
            raise GraphError(f"edge {e} is not ordered u < v{where}")
        if prev is not None and (u, v) <= prev:
            kind = "duplicate" if (u, v) == prev else "unsorted"
            raise GraphError(f"{kind} edge {e}{where}")
        try:
            b.add_edge(u, v)
        except GraphError as exc:
            raise GraphError(f"{exc}{where}") from None
        prev = (u, v)
    theta = rec.get("theta")
    if theta is not None:
        if not isinstance(theta, list) or not all(isinstance(t, (int, float)) for t in theta):
            raise GraphError(f"'theta' must be a list of numbers{where}")
        theta = [float(t) for t in theta]
    return b.freeze(), theta


def parse(text: str, line: int | None = None) -> tuple[Graph, list[float] | None]:
    try:
        rec = json.loads(text)
    except json.JSONDecodeError as exc:
        where = f" (line {line})" if line is not None else ""
        raise GraphError(f"invalid JSON{where}: {exc.msg}") from None
    return from_record(rec, line)


def write_jsonl(path, records: Iterable[tuple[Graph, Sequence[float] | None]]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for g, theta in records:
            fh.write(serialize(g, theta))
            fh.write("\n")
            count += 1
    return count


def iter_jsonl(path) -> Iterator[tuple[Graph, list[float] | None]]:
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            if line.strip():
                yield parse(line, line=i)


def read_jsonl(path) -> list[tuple[Graph, list[float] | None]]:
    return list(iter_jsonl(path))
