"""Growing network models: priors, seeded simulation and growth histories."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autodiff import special
from .graph import Graph, GraphBuilder

THETA_CLAMP = 1e-12


class ConfigurationError(ValueError):
    """Invalid model name, parameter vector or target size."""


@dataclass(frozen=True)
class Step:
    """One growth step.

    ``source`` is the node that receives the new edges (the new node for
    growth steps), ``seeds`` the nodes whose neighborhoods were explored.
    """

    source: int
    seeds: tuple[int, ...]
    added: tuple[tuple[int, int], ...]
    removed: tuple[tuple[int, int], ...] = ()
    new_node: bool = True


@dataclass
class History:
    initial: Graph
    steps: list[Step] = field(default_factory=list)

    def replay(self, upto: int | None = None) -> Graph:
        return replay(self, upto)

    def __len__(self) -> int:
        return len(self.steps)


def replay(history: History, upto: int | None = None) -> Graph:
    """Apply the first ``upto`` steps (all by default) to the initial graph."""
    b = GraphBuilder.from_graph(history.initial)
    for step in history.steps[:upto]:
        if step.new_node:
            if step.source != b.n:
                raise ConfigurationError(f"step adds node {step.source} but graph has {b.n} nodes")
            b.add_node()
        for u, v in step.removed:
            b.remove_edge(u, v)
        for u, v in step.added:
            b.add_edge(u, v)
    return b.freeze()


@dataclass(frozen=True)
class ModelSpec:
    name: str
    p: int
    k: int | None
    prior: tuple[tuple[float, float], ...]
    min_nodes: int
    simulator: Callable = field(repr=False, compare=False)
    constants: dict = field(default_factory=dict, compare=False)
    monotonic: bool = True

    @property
    def receptive_field(self) -> int | None:
        return None if self.k is None else 2 * self.k + 1


# -- priors -------------------------------------------------------------------


def sample_prior(spec: ModelSpec, rng: np.random.Generator) -> np.ndarray:
    theta = np.array([rng.beta(a, b) for a, b in spec.prior])
    return np.clip(theta, THETA_CLAMP, 1.0 - THETA_CLAMP)


def prior_log_density(spec: ModelSpec, theta: Sequence[float]) -> float:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.p,):
        raise ConfigurationError(f"{spec.name} expects {spec.p} parameters, got {theta.shape}")
    if np.any((theta <= 0) | (theta >= 1)):
        return -math.inf
    a = np.array([c[0] for c in spec.prior])
    b = np.array([c[1] for c in spec.prior])
    logp = (a - 1) * np.log(theta) + (b - 1) * np.log1p(-theta) - special.betaln(a, b)
    return float(np.sum(logp))


def prior_entropy(spec: ModelSpec) -> float:
    """Differential entropy of the product-beta prior in nats."""
    return float(sum(special.beta_entropy(a, b) for a, b in spec.prior))


# -- simulators ---------------------------------------------------------------
# Each simulator grows a graph of exactly n nodes; new nodes are labeled in
# arrival order.


def _ring(n: int, z: int) -> list[tuple[int, int]]:
    return [(i, (i + j) % n) for i in range(n) for j in range(1, z // 2 + 1)]


def _choice(rng: np.random.Generator, items: Sequence[int]) -> int:
    return items[int(rng.integers(len(items)))]


def _redirection(theta, n, rng, constants):
    (t,) = theta
    b = GraphBuilder(1)
    hist = History(b.freeze())
    while b.n < n:
        s = int(rng.integers(b.n))
        redirect = rng.random() < t
        target = s
        if redirect and b.adj[s]:
            target = _choice(rng, sorted(b.adj[s]))
        new = b.add_node()
        b.add_edge(new, target)
        hist.steps.append(Step(new, (s,), ((target, new),)))
    return b, hist


def _duplication_mutation(theta, n, rng, constants):
    t1, t2 = theta
    b = GraphBuilder(2, [(0, 1)])
    hist = History(b.freeze())
    while b.n < n:
        size = b.n
        s = int(rng.integers(size))
        nbrs = sorted(b.adj[s])
        kept = [u for u, x in zip(nbrs, rng.random(len(nbrs))) if x < t1]
        if not kept:
            continue  # isolated duplicate is dropped; retry the step
        new = b.add_node()
        added = []
        for u in kept:
            b.add_edge(new, u)
            added.append((u, new))
        z = int(rng.binomial(size, t2 / size))
        if z:
            for w in rng.choice(size, size=z, replace=False):
                if b.add_edge(new, int(w)):
                    added.append((int(w), new))
        hist.steps.append(Step(new, (s,), tuple(added)))
    return b, hist


def _copying(theta, n, rng, constants):
    (t,) = theta
    b = GraphBuilder(1)
    hist = History(b.freeze())
    while b.n < n:
        s = int(rng.integers(b.n))
        nbrs = sorted(b.adj[s])
        copied = [u for u, x in zip(nbrs, rng.random(len(nbrs))) if x < t]
        new = b.add_node()
        added = []
        for u in [s, *copied]:
            b.add_edge(new, u)
            added.append((u, new))
        hist.steps.append(Step(new, (s,), tuple(added)))
    return b, hist


def _random_fresh_pair(b: GraphBuilder, rng: np.random.Generator) -> tuple[int, int]:
    size = b.n
    if b.num_edges >= size * (size - 1) // 2:
        raise ConfigurationError("graph is complete; no fresh edge to add")
    while True:
        u, v = (int(x) for x in rng.integers(size, size=2))
        if u != v and v not in b.adj[u]:
            return (u, v) if u < v else (v, u)


def _random_connection(theta, n, rng, constants):
    (t,) = theta
    b = GraphBuilder(1)
    hist = History(b.freeze())
    while b.n < n:
        new = b.add_node()
        added = ()
        seeds = ()
        if rng.random() < t:
            u, v = _random_fresh_pair(b, rng)
            b.add_edge(u, v)
            added = ((u, v),)
            seeds = (u, v)
        hist.steps.append(Step(new, seeds, added))
    return b, hist


def _connected_small_world(theta, n, rng, constants):
    (t,) = theta
    z = constants["z"]
    b = GraphBuilder(n, _ring(n, z))
    hist = History(b.freeze())
    for u, _ in _ring(n, z):
        if rng.random() < t:
            e = _random_fresh_pair(b, rng)
            b.add_edge(*e)
            hist.steps.append(Step(u, e, (e,), new_node=False))
    return b, hist


def _growing_tree(theta, n, rng, constants):
    (t,) = theta
    b = GraphBuilder(2, [(0, 1)])
    hist = History(b.freeze())
    deg = np.zeros(n, dtype=np.float64)
    deg[:2] = 1.0
    while b.n < n:
        size = b.n
        assert deg[:size].min() >= 1.0  # 0**theta never arises in a tree grown from an edge
        cum = np.cumsum(deg[:size] ** t)
        s = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        s = min(s, size - 1)
        new = b.add_node()
        b.add_edge(new, s)
        deg[s] += 1.0
        deg[new] = 1.0
        hist.steps.append(Step(new, (s,), ((s, new),)))
    return b, hist


def _duplication_complementation(theta, n, rng, constants):
    t1, t2 = theta
    b = GraphBuilder(2, [(0, 1)])
    hist = History(b.freeze())
    while b.n < n:
        size = b.n
        s = int(rng.integers(size))
        targets = []
        removed = []
        for u in sorted(b.adj[s]):
            if rng.random() < 0.5:
                if rng.random() < t1:
                    targets.append(u)
            elif rng.random() < 1.0 - t1:
                removed.append((min(s, u), max(s, u)))
        if rng.random() < t2:
            targets.append(s)
        if not targets:
            continue  # isolated duplicate is dropped together with its deletions
        new = size
        for u, v in removed:
            b.remove_edge(u, v)
        b.add_node()
        for u in targets:
            b.add_edge(new, u)
        hist.steps.append(Step(new, (s,), tuple((u, new) for u in targets), tuple(removed)))
    return b, hist


def _jackson_rogers(theta, n, rng, constants):
    t_rnd, t_nbr = theta
    m_rnd, m_nbr = constants["m_rnd"], constants["m_nbr"]
    n0 = m_rnd + m_nbr + 1
    b = GraphBuilder(n0, [(i, j) for i in range(n0) for j in range(i + 1, n0)])
    hist = History(b.freeze())
    while b.n < n:
        size = b.n
        seeds = sorted(int(x) for x in rng.choice(size, size=m_rnd, replace=False))
        pool = sorted(set().union(*(b.adj[s] for s in seeds)))
        new = b.add_node()
        added = []
        for s, x in zip(seeds, rng.random(m_rnd)):
            if x < t_rnd:
                b.add_edge(new, s)
                added.append((s, new))
        c = min(m_nbr, len(pool))
        if c:
            chosen = rng.choice(len(pool), size=c, replace=False)
            for idx, x in zip(chosen, rng.random(c)):
                w = pool[int(idx)]
                if x < t_nbr and b.add_edge(new, w):
                    added.append((w, new))
        hist.steps.append(Step(new, tuple(seeds), tuple(added)))
    return b, hist


def _watts_strogatz(theta, n, rng, constants):
    (t,) = theta
    z = constants["z"]
    b = GraphBuilder(n, _ring(n, z))
    hist = History(b.freeze())
    for u, v in _ring(n, z):
        if rng.random() >= t:
            continue
        if len(b.adj[u]) >= n - 1:
            continue  # no valid new endpoint; keep the edge
        while True:
            w = int(rng.integers(n))
            if w != u and w not in b.adj[u]:
                break
        b.remove_edge(u, v)
        b.add_edge(u, w)
        hist.steps.append(
            Step(u, (v,), ((min(u, w), max(u, w)),), ((min(u, v), max(u, v)),), new_node=False)
        )
    return b, hist


# -- registry -----------------------------------------------------------------

_BETA22 = (2.0, 2.0)
_FLAT = (1.0, 1.0)

MODELS: dict[str, ModelSpec] = {
    spec.name: spec
    for spec in [
        ModelSpec("redirection", 1, 1, ((2.0, 1.0),), 1, _redirection),
        ModelSpec("duplication_mutation", 2, 1, (_BETA22, _BETA22), 2, _duplication_mutation),
        ModelSpec("copying", 1, 1, (_BETA22,), 1, _copying),
        ModelSpec("random_connection", 1, 0, (_FLAT,), 1, _random_connection),
        ModelSpec("connected_small_world", 1, 0, (_FLAT,), 9, _connected_small_world, {"z": 4}),
        ModelSpec("growing_tree", 1, None, (_FLAT,), 2, _growing_tree),
        ModelSpec(
            "duplication_complementation", 2, None, (_BETA22, _BETA22), 2,
            _duplication_complementation, monotonic=False,
        ),
        ModelSpec(
            "jackson_rogers", 2, None, (_FLAT, _FLAT), 21, _jackson_rogers, {"m_rnd": 10, "m_nbr": 10}
        ),
        ModelSpec("watts_strogatz", 1, None, (_FLAT,), 5, _watts_strogatz, {"z": 4}, monotonic=False),
    ]
}

MODEL_NAMES = tuple(MODELS)


def registry(name: str) -> ModelSpec:
    try:
        return MODELS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown model {name!r}; choose one of: {', '.join(MODEL_NAMES)}"
        ) from None


def simulate(spec: ModelSpec | str, theta: Sequence[float], n: int, rng: np.random.Generator) -> tuple[Graph, History]:
    """Grow a graph with ``n`` nodes; deterministic given the generator state."""
    if isinstance(spec, str):
        spec = registry(spec)
    theta = np.asarray(theta, dtype=np.float64).reshape(-1)
    if theta.shape != (spec.p,):
        raise ConfigurationError(f"{spec.name} expects {spec.p} parameters, got {theta.size}")
    if np.any((theta < 0) | (theta > 1)):
        raise ConfigurationError(f"parameters must lie in [0, 1], got {theta.tolist()}")
    if n < spec.min_nodes:
        raise ConfigurationError(f"{spec.name} needs n >= {spec.min_nodes}, got {n}")
    builder, history = spec.simulator(tuple(float(x) for x in theta), n, rng, spec.constants)
    return builder.freeze(), history


def sample_prior_predictive(spec: ModelSpec, n: int, rng: np.random.Generator) -> tuple[np.ndarray, Graph]:
    theta = sample_prior(spec, rng)
    g, _ = simulate(spec, theta, n, rng)
    return theta, g
