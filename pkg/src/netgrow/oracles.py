"""Ground-truth inference: closed-form posteriors, history likelihoods and a
brute-force marginal posterior for tiny redirection trees."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import stats

from .autodiff import special
from .graph import Graph, GraphBuilder
from .models import History, ModelSpec, prior_entropy, registry

MAX_BRUTEFORCE_NODES = 8
DEFAULT_GRID_SIZE = 201


class InconsistentGraphError(ValueError):
    """The observation cannot have been produced by the assumed model."""


@dataclass
class BetaPosterior:
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.atleast_1d(np.asarray(self.alpha, dtype=np.float64))
        self.beta = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        if self.alpha.shape != self.beta.shape:
            raise ValueError("alpha and beta must have the same length")
        if np.any(self.alpha <= 0) or np.any(self.beta <= 0):
            raise ValueError("beta concentrations must be positive")

    @property
    def p(self) -> int:
        return self.alpha.size

    def log_density(self, theta: Sequence[float]) -> float:
        return beta_log_density(theta, self.alpha, self.beta)

    def mean(self) -> np.ndarray:
        return self.alpha / (self.alpha + self.beta)

    def interval(self, level: float = 0.9) -> tuple[np.ndarray, np.ndarray]:
        tail = (1.0 - level) / 2
        return stats.beta.ppf(tail, self.alpha, self.beta), stats.beta.ppf(1 - tail, self.alpha, self.beta)

    def to_json(self) -> dict:
        return {"alpha": self.alpha.tolist(), "beta": self.beta.tolist()}


@dataclass
class GridPosterior:
    grid: np.ndarray
    mass: np.ndarray

    def mean(self) -> float:
        return float(np.dot(self.grid, self.mass))

    def to_json(self) -> dict:
        return {"grid": self.grid.tolist(), "mass": self.mass.tolist()}


def beta_log_density(theta, alpha, beta) -> float:
    """Sum of independent beta log densities; ``-inf`` off the open unit cube."""
    theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
    if np.any((theta <= 0) | (theta >= 1)):
        return -math.inf
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    val = (alpha - 1) * np.log(theta) + (beta - 1) * np.log1p(-theta) - special.betaln(alpha, beta)
    return float(np.sum(val))


# -- closed-form posteriors ---------------------------------------------------


def posterior_random_connection(g: Graph) -> BetaPosterior:
    """Each of the ``n - 1`` steps is one Bernoulli trial under a flat prior."""
    e = g.num_edges
    if e > g.n - 1:
        raise InconsistentGraphError(f"{e} edges exceed the {g.n - 1} possible successes")
    return BetaPosterior([1.0 + e], [float(g.n - e)])


def posterior_connected_small_world(g: Graph, z: int = 4) -> BetaPosterior:
    """Shortcuts are ``Binomial(nz/2, θ)`` given the ring; flat prior."""
    n = g.n
    e = g.num_edges
    ring = n * z / 2
    if e < ring or e - ring > ring:
        raise InconsistentGraphError(f"|E|={e} is outside [{ring:g}, {2 * ring:g}] for n={n}, z={z}")
    # n(d̄ - z)/2 is the shortcut count; kept in exact arithmetic
    shortcuts = e - ring
    return BetaPosterior([1.0 + shortcuts], [1.0 + ring - shortcuts])


EXACT_POSTERIORS = {
    "random_connection": posterior_random_connection,
    "connected_small_world": posterior_connected_small_world,
}


def exact_posterior(model: str, g: Graph) -> BetaPosterior:
    try:
        fn = EXACT_POSTERIORS[model]
    except KeyError:
        raise ValueError(f"no closed-form posterior for {model!r}") from None
    return fn(g)


def exact_baseline_mi(model: str, pairs: Iterable[tuple[Sequence[float], Graph]]) -> float:
    """Prior entropy plus the mean exact-posterior log density at the truth."""
    spec = registry(model)
    logs = [exact_posterior(model, g).log_density(theta) for theta, g in pairs]
    if not logs:
        raise ValueError("empty test set")
    return prior_entropy(spec) + math.fsum(logs) / len(logs)


# -- history likelihoods ------------------------------------------------------


def redirection_step_probability(adj: Sequence[set[int]] | Sequence[Sequence[int]], v: int, theta):
    """Probability that a new node attaches to ``v``, the seed marginalized.

    ``adj`` is the adjacency of the graph before the step. A seed without
    neighbors keeps the edge.
    """
    size = len(adj)
    theta = np.asarray(theta, dtype=np.float64)
    hit = 1.0 - theta if adj[v] else 1.0
    redirect = sum(1.0 / len(adj[s]) for s in adj[v])
    return (hit + theta * redirect) / size


def copying_step_probability(adj, targets: set[int], theta):
    size = len(adj)
    theta = np.asarray(theta, dtype=np.float64)
    total = np.zeros_like(theta)
    m = len(targets) - 1
    for s in targets:
        if targets - {s} <= set(adj[s]):
            total = total + np.power(theta, m) * np.power(1.0 - theta, len(adj[s]) - m)
    return total / size


def history_log_likelihood(model: str, history: History, theta):
    """Log-probability of the recorded edges given the recorded sources.

    ``theta`` may be a scalar or an array of values (evaluated pointwise).
    """
    if model not in ("redirection", "copying"):
        raise ValueError(f"history likelihood is implemented for redirection and copying, not {model!r}")
    theta = np.asarray(theta, dtype=np.float64)
    b = GraphBuilder.from_graph(history.initial)
    total = np.zeros_like(theta)
    for t, step in enumerate(history.steps):
        if not step.new_node or step.removed or step.source != b.n:
            raise ValueError(f"step {t} is not a node-adding step of {model}")
        targets = {u if v == step.source else v for u, v in step.added}
        if model == "redirection":
            if len(step.added) != 1:
                raise ValueError(f"redirection step {t} adds {len(step.added)} edges")
            (v,) = targets
            prob = redirection_step_probability(b.adj, v, theta)
        else:
            if not step.added:
                raise ValueError(f"copying step {t} adds no edges")
            prob = copying_step_probability(b.adj, targets, theta)
        with np.errstate(divide="ignore"):
            total = total + np.log(prob)
        b.add_node()
        for u in targets:
            b.add_edge(step.source, u)
    return total if total.ndim else float(total)


# -- brute-force marginal posterior ------------------------------------------


def default_grid(size: int = DEFAULT_GRID_SIZE) -> np.ndarray:
    """Uniform interior grid on (0, 1)."""
    return np.arange(1, size + 1, dtype=np.float64) / (size + 1)


def trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    w = np.zeros_like(grid)
    d = np.diff(grid)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


def _is_tree(g: Graph) -> bool:
    return g.num_edges == g.n - 1 and g.is_connected()


def redirection_ordering_likelihood(g: Graph, grid: np.ndarray) -> np.ndarray:
    """Sum over growth orderings of the tree ``g`` of the likelihood on ``grid``.

    Dynamic programming over node subsets: the graph before a step is the
    subgraph induced by the nodes already present, so the per-step factor
    depends only on that set and the attachment point.
    """
    n = g.n
    nbr = [0] * n
    for u, v in g.edges:
        nbr[u] |= 1 << v
        nbr[v] |= 1 << u
    grid = np.asarray(grid, dtype=np.float64)
    f: dict[int, np.ndarray] = {1 << v: np.ones_like(grid) for v in range(n)}
    for mask in range(1, 1 << n):
        acc = f.pop(mask, None)
        if acc is None:
            continue
        if mask == (1 << n) - 1:
            return acc
        present = [u for u in range(n) if mask >> u & 1]
        adj = {u: [w for w in range(n) if (nbr[u] & mask) >> w & 1] for u in present}
        size = len(present)
        for v in range(n):
            if mask >> v & 1 or not nbr[v] & mask:
                continue
            (parent,) = _bits(nbr[v] & mask)
            hit = (1.0 - grid) if adj[parent] else 1.0
            redirect = sum(1.0 / len(adj[s]) for s in adj[parent])
            term = acc * ((hit + grid * redirect) / size)
            nxt = mask | (1 << v)
            f[nxt] = f[nxt] + term if nxt in f else term
    return np.ones_like(grid)  # single node


def _bits(bits: int) -> list[int]:
    out = []
    i = 0
    while bits:
        if bits & 1:
            out.append(i)
        bits >>= 1
        i += 1
    return out


def marginal_posterior_bruteforce(
    g: Graph,
    grid: np.ndarray | None = None,
    prior: ModelSpec | None = None,
    model: str = "redirection",
) -> GridPosterior:
    """Posterior of the redirection parameter on a grid, summing over all orderings."""
    if model != "redirection":
        raise ValueError("brute-force marginalization is implemented for the redirection model only")
    if g.n > MAX_BRUTEFORCE_NODES:
        raise ValueError(
            f"n too large: {g.n} nodes (at most {MAX_BRUTEFORCE_NODES}; orderings grow as n!)"
        )
    if not _is_tree(g):
        raise InconsistentGraphError("redirection graphs are trees; input is not a tree")
    prior = prior or registry("redirection")
    grid = default_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    (a, b), = prior.prior
    log_prior = (a - 1) * np.log(grid) + (b - 1) * np.log1p(-grid)
    like = redirection_ordering_likelihood(g, grid)
    mass = trapezoid_weights(grid) * np.exp(log_prior) * like
    mass = mass / mass.sum()
    return GridPosterior(grid, mass)
