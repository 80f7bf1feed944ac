"""Neural density estimator: GIN layers, mean pooling, dense residual layers
and an independent-beta head."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import ParamStore, Tape, Tensor
from .graph import Graph

THETA_CLAMP = 1e-12
CONCENTRATION_FLOOR = 1e-6


@dataclass(frozen=True)
class NDEConfig:
    """Architecture shape.

    ``gin_layers`` GIN layers are followed by ``depth - gin_layers`` dense
    residual layers, so the parameter count does not depend on the split.
    """

    p: int
    gin_layers: int = 1
    depth: int = 5
    width: int = 8
    hidden: int = 8

    def __post_init__(self):
        if not 0 <= self.gin_layers <= self.depth:
            raise ValueError(f"need 0 <= gin_layers <= depth, got {self.gin_layers} and {self.depth}")
        if self.width < 1 or self.hidden < 1 or self.p < 1:
            raise ValueError("width, hidden and p must be positive")

    @property
    def dense_layers(self) -> int:
        return self.depth - self.gin_layers

    def layer_prefixes(self) -> list[str]:
        return [f"gin{i}" for i in range(self.gin_layers)] + [f"dense{i}" for i in range(self.dense_layers)]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> NDEConfig:
        return cls(**data)


def _layer_shapes(fan_in: int, config: NDEConfig) -> dict[str, tuple[int, int]]:
    return {
        "gamma": (1, 1),
        "w1": (fan_in, config.hidden),
        "b1": (1, config.hidden),
        "w2": (config.hidden, config.width),
        "b2": (1, config.width),
    }


def parameter_shapes(config: NDEConfig) -> dict[str, tuple[int, int]]:
    """Shapes of every trainable array, in a stable order.

    The first layer of the stack sees the width-1 ones-features (or their
    pooled mean when there are no GIN layers); every later layer sees width
    ``config.width``.
    """
    shapes: dict[str, tuple[int, int]] = {}
    for i, prefix in enumerate(config.layer_prefixes()):
        fan_in = 1 if i == 0 else config.width
        for key, shape in _layer_shapes(fan_in, config).items():
            shapes[f"{prefix}.{key}"] = shape
    head_in = config.width if config.depth > 0 else 1
    shapes["head.w"] = (head_in, 2 * config.p)
    shapes["head.b"] = (1, 2 * config.p)
    return shapes


def count_parameters(config: NDEConfig) -> int:
    return sum(r * c for r, c in parameter_shapes(config).values())


def init_params(config: NDEConfig, rng: np.random.Generator) -> ParamStore:
    """Shortcut scales 1, Glorot-uniform weights, zero biases."""
    store = ParamStore()
    for name, (r, c) in parameter_shapes(config).items():
        key = name.rsplit(".", 1)[1]
        if key == "gamma":
            value = np.ones((1, 1))
        elif key.startswith("w"):
            limit = math.sqrt(6.0 / (r + c))
            value = rng.uniform(-limit, limit, size=(r, c))
        else:
            value = np.zeros((r, c))
        store.add(name, value)
    return store


# -- batching -----------------------------------------------------------------


class GraphBatch:
    """Disjoint union of graphs: self-loop augmented block adjacency plus sizes.

    The adjacency is built on first use, so depth-0 networks never pay for it.
    """

    def __init__(
        self,
        adjacency: sp.csr_matrix | None,
        counts: np.ndarray,
        edges: np.ndarray | None = None,
        csr_parts: tuple[Sequence[np.ndarray], Sequence[np.ndarray]] | None = None,
    ):
        self._adjacency = adjacency
        self._edges = edges
        self._parts = csr_parts
        self.counts = np.asarray(counts, dtype=np.int64)

    @property
    def adjacency(self) -> sp.csr_matrix:
        if self._adjacency is None and self._parts is not None:
            indptrs, indices = self._parts
            node_off = np.concatenate(([0], np.cumsum(self.counts)[:-1]))
            nnz = np.array([len(ix) for ix in indices], dtype=np.int64)
            nnz_off = np.concatenate(([0], np.cumsum(nnz)[:-1]))
            ptr = np.concatenate([[0]] + [ip[1:] + off for ip, off in zip(indptrs, nnz_off)])
            idx = np.concatenate([ix + off for ix, off in zip(indices, node_off)])
            total = self.num_nodes
            self._adjacency = sp.csr_matrix((np.ones(len(idx)), idx, ptr), shape=(total, total))
        elif self._adjacency is None:
            total = self.num_nodes
            diag = np.arange(total)
            rows = np.concatenate((self._edges[:, 0], self._edges[:, 1], diag))
            cols = np.concatenate((self._edges[:, 1], self._edges[:, 0], diag))
            self._adjacency = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(total, total))
        return self._adjacency

    @property
    def num_graphs(self) -> int:
        return len(self.counts)

    @property
    def num_nodes(self) -> int:
        return int(self.counts.sum())

    def membership(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_graphs), self.counts)

    @classmethod
    def from_edge_arrays(cls, sizes: Sequence[int], edge_arrays: Sequence[np.ndarray]) -> GraphBatch:
        sizes = np.asarray(sizes, dtype=np.int64)
        if len(sizes) == 0:
            raise ValueError("cannot batch zero graphs")
        if np.any(sizes <= 0):
            raise ValueError("graphs must have at least one node")
        offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        shifted = [e + off for e, off in zip(edge_arrays, offsets) if len(e)]
        edges = np.concatenate(shifted) if shifted else np.zeros((0, 2), dtype=np.int64)
        return cls(None, sizes, edges)

    @classmethod
    def from_csr_parts(
        cls, sizes: Sequence[int], indptrs: Sequence[np.ndarray], indices: Sequence[np.ndarray]
    ) -> GraphBatch:
        """Batch from per-graph self-loop augmented CSR arrays (see :func:`csr_parts`)."""
        sizes = np.asarray(sizes, dtype=np.int64)
        if len(sizes) == 0:
            raise ValueError("cannot batch zero graphs")
        return cls(None, sizes, csr_parts=(indptrs, indices))

    @classmethod
    def from_graphs(cls, graphs: Sequence[Graph]) -> GraphBatch:
        return cls.from_edge_arrays([g.n for g in graphs], [g.edge_array() for g in graphs])


def csr_parts(g: Graph) -> tuple[np.ndarray, np.ndarray]:
    """``(indptr, indices)`` of ``A + I`` for one graph."""
    rows = [sorted(nbrs + (v,)) for v, nbrs in enumerate(g.adjacency)]
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(r) for r in rows])
    indices = np.fromiter((u for r in rows for u in r), dtype=np.int64, count=int(indptr[-1]))
    return indptr, indices


def batch(graphs: Sequence[Graph]) -> GraphBatch:
    return GraphBatch.from_graphs(graphs)


# -- layers -------------------------------------------------------------------


def mlp(X: Tensor, P: dict[str, Tensor], prefix: str) -> Tensor:
    """Row-wise ``b2 + tanh(b1 + X W1) W2``."""
    hidden = ad.tanh(ad.add_bias_row(ad.matmul(X, P[f"{prefix}.w1"]), P[f"{prefix}.b1"]))
    return ad.add_bias_row(ad.matmul(hidden, P[f"{prefix}.w2"]), P[f"{prefix}.b2"])


def gin_layer(H: Tensor, adjacency: sp.spmatrix, P: dict[str, Tensor], prefix: str) -> Tensor:
    """``γ H + φ(Ã H)``; a width-1 ``H`` is broadcast across the output columns."""
    aggregated = ad.sparse_aggregate(adjacency, H, symmetric=True)
    return ad.add(ad.scale(H, P[f"{prefix}.gamma"]), mlp(aggregated, P, prefix))


def mean_pool(H: Tensor, counts: Sequence[int]) -> Tensor:
    return ad.segment_mean(H, counts)


def dense_residual(xi: Tensor, P: dict[str, Tensor], prefix: str) -> Tensor:
    return ad.add(ad.scale(xi, P[f"{prefix}.gamma"]), mlp(xi, P, prefix))


def beta_head(xi: Tensor, P: dict[str, Tensor], p: int) -> tuple[Tensor, Tensor]:
    """Concentrations ``softplus(b3 + ξ W3)`` ordered ``(α1, β1, ..., αp, βp)``.

    Returns the ``(graphs, p)`` alpha and beta tensors.
    """
    raw = ad.add_bias_row(ad.matmul(xi, P["head.w"]), P["head.b"])
    conc = ad.add(ad.softplus(raw), CONCENTRATION_FLOOR)
    return ad.take_columns(conc, range(0, 2 * p, 2)), ad.take_columns(conc, range(1, 2 * p, 2))


def bind(tape: Tape, store: ParamStore, grad: bool = True) -> dict[str, Tensor]:
    if grad:
        return {name: tape.param(store, name) for name in store.names()}
    return {name: tape.constant(store[name]) for name in store.names()}


def pooled_features(P: dict[str, Tensor], tape: Tape, gb: GraphBatch, config: NDEConfig) -> Tensor:
    H = tape.constant(np.ones((gb.num_nodes, 1)))
    for i in range(config.gin_layers):
        H = gin_layer(H, gb.adjacency, P, f"gin{i}")
    return mean_pool(H, gb.counts)


def forward(
    store: ParamStore, gb: GraphBatch, config: NDEConfig, tape: Tape | None = None, grad: bool = True
) -> tuple[Tensor, Tensor]:
    """Beta concentrations for every graph in the batch."""
    tape = tape or Tape()
    P = bind(tape, store, grad)
    xi = pooled_features(P, tape, gb, config)
    for i in range(config.dense_layers):
        xi = dense_residual(xi, P, f"dense{i}")
    return beta_head(xi, P, config.p)


def log_prob(theta, alpha: Tensor, beta: Tensor) -> Tensor:
    """Per-graph ``log f(θ | G)`` as a ``(graphs, 1)`` tensor."""
    theta = np.asarray(theta, dtype=np.float64).reshape(alpha.shape)
    theta = np.clip(theta, THETA_CLAMP, 1.0 - THETA_CLAMP)
    norm = ad.sub(ad.lgamma(ad.add(alpha, beta)), ad.add(ad.lgamma(alpha), ad.lgamma(beta)))
    terms = ad.add(norm, ad.add(ad.mul(ad.sub(alpha, 1.0), np.log(theta)), ad.mul(ad.sub(beta, 1.0), np.log1p(-theta))))
    return ad.matmul(terms, np.ones((terms.shape[1], 1)))


def nll_loss(
    store: ParamStore, gb: GraphBatch, theta, config: NDEConfig, tape: Tape | None = None, grad: bool = True
) -> Tensor:
    """Mean negative log-probability of the true parameters over the batch."""
    tape = tape or Tape()
    alpha, beta = forward(store, gb, config, tape, grad)
    return ad.mul(ad.mean(log_prob(theta, alpha, beta)), -1.0)


def predict(store: ParamStore, gb: GraphBatch, config: NDEConfig) -> tuple[np.ndarray, np.ndarray]:
    alpha, beta = forward(store, gb, config, grad=False)
    return alpha.value, beta.value


def per_graph_log_prob(store: ParamStore, gb: GraphBatch, theta, config: NDEConfig) -> np.ndarray:
    alpha, beta = forward(store, gb, config, grad=False)
    return log_prob(theta, alpha, beta).value.reshape(-1)


# -- hand-assigned weights ----------------------------------------------------


def _softplus_inverse_gap(x: np.ndarray) -> np.ndarray:
    """``softplus⁻¹(x) − x``, which vanishes like ``−e^{−x}`` for large ``x``."""
    return np.log(-np.expm1(-np.asarray(x, dtype=np.float64)))


def small_world_construction(
    n: int,
    z: int = 4,
    eps: float = 1e-4,
    gin_layers: int = 1,
    depth: int = 5,
    hidden: int = 8,
    correct_softplus: bool = True,
    steepness: float = 20.0,
) -> tuple[NDEConfig, ParamStore]:
    """Width-1 weights whose output is the exact connected-small-world posterior.

    The first GIN layer maps every node to ``tanh(ε(d+1))/ε − 1 ≈ d``; pooling
    yields the mean degree and a linear head turns it into the shortcut count
    plus one for α and the missing-shortcut count plus one for β. Remaining
    GIN layers are identities.

    Softplus only behaves like the identity for large inputs, so with
    ``correct_softplus`` the dense layers add step functions (steep tanh
    units) that swap ``c`` for ``softplus⁻¹(c)`` when either concentration is
    a small integer. Without it the dense layers are identities too.
    """
    if gin_layers < 1:
        raise ValueError("the construction needs at least one GIN layer to read degrees")
    config = NDEConfig(p=1, gin_layers=gin_layers, depth=depth, width=1, hidden=hidden)
    if correct_softplus and config.dense_layers == 0:
        raise ValueError("the softplus correction needs at least one dense layer")
    store = ParamStore()
    for name, shape in parameter_shapes(config).items():
        store.add(name, np.zeros(shape))
    for prefix in config.layer_prefixes():
        store[f"{prefix}.gamma"][...] = 1.0

    store["gin0.gamma"][...] = 0.0
    store["gin0.w1"][0, 0] = eps
    store["gin0.w2"][0, 0] = 1.0 / eps
    store["gin0.b2"][...] = -1.0

    half = n / 2.0
    ring = n * z / 2.0
    store["head.w"][0] = [half, -half]
    store["head.b"][0] = [1.0 - ring, 1.0 + n * z]

    if correct_softplus:
        # the shortcut count s = half·(ξ − z); both ends of [0, ring] need fixing
        per_end = hidden if config.dense_layers >= 2 else hidden // 2
        gap = _softplus_inverse_gap(np.arange(1, per_end + 2))
        jumps = gap[:-1] - gap[1:]
        slope = steepness * half
        ends = [("dense0", 0)] + ([("dense1", 0)] if config.dense_layers >= 2 else [("dense0", per_end)])
        for side, (prefix, offset) in enumerate(ends):
            for j, jump in enumerate(jumps):
                unit = offset + j
                if side == 0:
                    # α end: step on when s < j + ½, moving ξ (and α) by jump / half
                    threshold = j + 0.5
                    amount = jump / half
                    sign = -1.0
                else:
                    # β end: step on when s > ring − j − ½, moving ξ the other way
                    threshold = ring - j - 0.5
                    amount = -jump / half
                    sign = 1.0
                store[f"{prefix}.w1"][0, unit] = slope
                store[f"{prefix}.b1"][0, unit] = -steepness * (ring + threshold)
                store[f"{prefix}.w2"][unit, 0] = sign * amount / 2
                store[f"{prefix}.b2"][0, 0] += amount / 2
    return config, store
