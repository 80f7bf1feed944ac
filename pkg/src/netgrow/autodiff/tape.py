"""Tape-based reverse-mode differentiation over 2-D float64 arrays.

Every value is a ``(rows, cols)`` array. Operations append a node to the tape
of their inputs; :meth:`Tape.backward` walks the tape in reverse and
accumulates vector-Jacobian products.

    tape = Tape()
    w = tape.param(store, "w")
    loss = ad.sum(ad.tanh(ad.matmul(x, w)))
    tape.backward(loss, store)
"""

from __future__ import annotations

import builtins
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from . import special


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or infinity."""

    def __init__(self, op: str, message: str = ""):
        self.op = op
        super().__init__(f"non-finite output in '{op}'" + (f": {message}" if message else ""))


def _as2d(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"tensors are 2-D, got shape {arr.shape}")
    return arr


class Tensor:
    __slots__ = ("value", "tape", "index", "requires_grad", "name")

    def __init__(self, value: np.ndarray, tape: Tape, requires_grad: bool, name: str | None = None):
        self.value = value
        self.tape = tape
        self.requires_grad = requires_grad
        self.name = name
        self.index = -1

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.value.reshape(-1)[0])

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


@dataclass
class Node:
    op: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    forward: Callable[..., np.ndarray]
    vjp: Callable[..., tuple]


class Tape:
    """Ordered record of primitive applications."""

    def __init__(self, check_finite: bool = True):
        self.nodes: list[Node] = []
        self.leaves: list[Tensor] = []
        self.check_finite = check_finite

    def constant(self, value) -> Tensor:
        return Tensor(_as2d(value), self, requires_grad=False)

    def variable(self, value, name: str | None = None) -> Tensor:
        t = Tensor(_as2d(value).copy(), self, requires_grad=True, name=name)
        self.leaves.append(t)
        return t

    def param(self, store: ParamStore, name: str) -> Tensor:
        """Leaf bound to ``store[name]``; gradients flow back to the store."""
        return self.variable(store.params[name], name=name)

    def record(self, op: str, inputs: Sequence[Tensor], forward, vjp) -> Tensor:
        values = [t.value for t in inputs]
        out = forward(*values)
        if self.check_finite and not np.all(np.isfinite(out)):
            raise NonFiniteError(op)
        t = Tensor(out, self, requires_grad=any(x.requires_grad for x in inputs))
        if t.requires_grad:
            t.index = len(self.nodes)
            self.nodes.append(Node(op, tuple(inputs), t, forward, vjp))
        return t

    def replay(self) -> list[np.ndarray]:
        """Recompute every recorded output from its recorded inputs."""
        fresh: dict[int, np.ndarray] = {}
        out = []
        for node in self.nodes:
            vals = [fresh.get(id(t), t.value) for t in node.inputs]
            v = node.forward(*vals)
            fresh[id(node.output)] = v
            out.append(v)
        return out

    def backward(self, loss: Tensor, store: ParamStore | None = None) -> dict[str, np.ndarray]:
        """Gradients of scalar ``loss`` w.r.t. every named leaf.

        When ``store`` is given its gradient accumulators are zeroed and then
        filled for the leaves created through :meth:`param`.
        """
        if loss.tape is not self or (loss.requires_grad and loss.index < 0):
            raise ValueError("loss was not recorded on this tape")
        if loss.value.size != 1:
            raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for node in reversed(self.nodes[: loss.index + 1]):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            in_grads = node.vjp(g, node.output.value, *[t.value for t in node.inputs])
            for t, gi in zip(node.inputs, in_grads):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
        named = {}
        for leaf in self.leaves:
            if leaf.name is not None:
                g = grads.get(id(leaf))
                named[leaf.name] = named.get(leaf.name, 0.0) + (g if g is not None else np.zeros_like(leaf.value))
        if store is not None:
            store.zero_grad()
            for name, g in named.items():
                if name in store.grads:
                    store.grads[name] += g
        return named


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Tensor):
            return x.tape
    raise TypeError("at least one argument must be a Tensor")


def _lift(tape: Tape, x) -> Tensor:
    if isinstance(x, Tensor):
        if x.tape is not tape:
            raise ValueError("tensors from different tapes")
        return x
    return tape.constant(x)


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    if g.shape == shape:
        return g
    if shape[0] == 1 and g.shape[0] != 1:
        g = (np.ones(g.shape[0]) @ g).reshape(1, -1)  # BLAS column sums
    if shape[1] == 1 and g.shape[1] != 1:
        g = g.sum(axis=1, keepdims=True)
    return g


def _broadcast_shape(op: str, a: tuple, b: tuple) -> None:
    for da, db in zip(a, b):
        if da != db and da != 1 and db != 1:
            raise ShapeError(f"{op}: incompatible shapes {a} and {b}")


# -- elementwise arithmetic ---------------------------------------------------


def add(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _broadcast_shape("add", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return tape.record(
        "add", (a, b), np.add, lambda g, out, x, y: (_unbroadcast(g, sa), _unbroadcast(g, sb))
    )


def sub(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _broadcast_shape("sub", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return tape.record(
        "sub", (a, b), np.subtract, lambda g, out, x, y: (_unbroadcast(g, sa), _unbroadcast(-g, sb))
    )


def mul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    _broadcast_shape("mul", a.shape, b.shape)
    sa, sb = a.shape, b.shape
    return tape.record(
        "mul",
        (a, b),
        np.multiply,
        lambda g, out, x, y: (_unbroadcast(g * y, sa), _unbroadcast(g * x, sb)),
    )


def add_bias_row(x: Tensor, b: Tensor) -> Tensor:
    """``x + b`` with ``b`` a ``(1, cols)`` row repeated over rows."""
    if b.shape[0] != 1 or b.shape[1] != x.shape[1]:
        raise ShapeError(f"add_bias_row: bias {b.shape} does not fit {x.shape}")
    return add(x, b)


def scale(x: Tensor, gamma: Tensor) -> Tensor:
    """``gamma * x`` for a ``(1, 1)`` scale."""
    if gamma.shape != (1, 1):
        raise ShapeError(f"scale factor must be (1, 1), got {gamma.shape}")
    return mul(x, gamma)


# -- linear algebra -----------------------------------------------------------


def matmul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _lift(tape, a), _lift(tape, b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}")
    return tape.record("matmul", (a, b), np.matmul, lambda g, out, x, y: (g @ y.T, x.T @ g))


def sparse_aggregate(adj: sp.spmatrix, h: Tensor, symmetric: bool = False) -> Tensor:
    """``adj @ h`` for a constant sparse (typically self-loop augmented) adjacency.

    Pass ``symmetric=True`` for undirected adjacency to reuse it in the
    backward pass instead of building the transpose.
    """
    if adj.shape[1] != h.shape[0]:
        raise ShapeError(f"sparse_aggregate: adjacency {adj.shape} vs features {h.shape}")
    adj = sp.csr_matrix(adj)
    adj_t = adj if symmetric else adj.T.tocsr()
    return h.tape.record(
        "sparse_aggregate", (h,), lambda x: np.asarray(adj @ x), lambda g, out, x: (np.asarray(adj_t @ g),)
    )


def segment_mean(h: Tensor, counts: Sequence[int]) -> Tensor:
    """Column means of consecutive row blocks of sizes ``counts``."""
    counts = np.asarray(counts, dtype=np.int64)
    if np.any(counts <= 0):
        raise ShapeError("segment_mean: empty segment")
    if counts.sum() != h.shape[0]:
        raise ShapeError(f"segment_mean: counts cover {counts.sum()} rows, tensor has {h.shape[0]}")
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    denom = counts.astype(np.float64)[:, None]

    def forward(x):
        return np.add.reduceat(x, starts, axis=0) / denom

    def vjp(g, out, x):
        return (np.repeat(g / denom, counts, axis=0),)

    return h.tape.record("segment_mean", (h,), forward, vjp)


def concat_rows(xs: Sequence[Tensor]) -> Tensor:
    xs = list(xs)
    cols = {x.shape[1] for x in xs}
    if len(cols) != 1:
        raise ShapeError(f"concat_rows: column counts differ {sorted(cols)}")
    bounds = np.cumsum([0] + [x.shape[0] for x in xs])

    def vjp(g, out, *vals):
        return tuple(g[bounds[i] : bounds[i + 1]] for i in range(len(vals)))

    return xs[0].tape.record("concat_rows", xs, lambda *v: np.concatenate(v, axis=0), vjp)


def take_columns(x: Tensor, cols: Sequence[int]) -> Tensor:
    cols = np.asarray(cols, dtype=np.int64)
    ncols = x.shape[1]

    def vjp(g, out, v):
        full = np.zeros((g.shape[0], ncols))
        np.add.at(full, (slice(None), cols), g)
        return (full,)

    return x.tape.record("take_columns", (x,), lambda v: v[:, cols], vjp)


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return x.tape.record(
        "sum", (x,), lambda v: np.sum(v, keepdims=True).reshape(1, 1), lambda g, out, v: (np.full(shape, g[0, 0]),)
    )


def mean(x: Tensor) -> Tensor:
    shape = x.shape
    size = x.value.size
    return x.tape.record(
        "mean",
        (x,),
        lambda v: (np.sum(v) / size).reshape(1, 1),
        lambda g, out, v: (np.full(shape, g[0, 0] / size),),
    )


# -- nonlinearities -----------------------------------------------------------


def tanh(x: Tensor) -> Tensor:
    return x.tape.record("tanh", (x,), np.tanh, lambda g, out, v: (g * (1.0 - out * out),))


def _sigmoid(v: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -v))


def softplus(x: Tensor) -> Tensor:
    """``log(1 + exp x)``, overflow-safe."""
    return x.tape.record(
        "softplus", (x,), lambda v: np.logaddexp(0.0, v), lambda g, out, v: (g * _sigmoid(v),)
    )


def log(x: Tensor) -> Tensor:
    def forward(v):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(v)

    return x.tape.record("log", (x,), forward, lambda g, out, v: (g / v,))


def lgamma(x: Tensor) -> Tensor:
    return x.tape.record("lgamma", (x,), special.lgamma, lambda g, out, v: (g * special.digamma(v),))


def digamma(x: Tensor) -> Tensor:
    return x.tape.record("digamma", (x,), special.digamma, lambda g, out, v: (g * special.trigamma(v),))


# -- parameters and optimizer -------------------------------------------------


class ParamStore:
    """Named parameter arrays with gradient accumulators and Adam moments."""

    def __init__(self, params: dict[str, np.ndarray] | None = None):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value) -> None:
        value = _as2d(value).copy()
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def num_parameters(self) -> int:
        return builtins.sum(p.size for p in self.params.values())

    def copy(self) -> ParamStore:
        other = ParamStore()
        for name in self.params:
            other.params[name] = self.params[name].copy()
            other.grads[name] = self.grads[name].copy()
            other.m[name] = self.m[name].copy()
            other.v[name] = self.v[name].copy()
        other.step = self.step
        return other

    def to_dict(self) -> dict:
        def pack(arrs):
            return {k: {"shape": list(a.shape), "values": a.reshape(-1).tolist()} for k, a in arrs.items()}

        return {"params": pack(self.params), "adam": {"m": pack(self.m), "v": pack(self.v), "step": self.step}}

    @classmethod
    def from_dict(cls, data: dict) -> ParamStore:
        def unpack(d):
            return {k: np.asarray(e["values"], dtype=np.float64).reshape(e["shape"]) for k, e in d.items()}

        store = cls(unpack(data["params"]))
        adam = data.get("adam")
        if adam:
            store.m.update(unpack(adam["m"]))
            store.v.update(unpack(adam["v"]))
            store.step = int(adam["step"])
        return store


def adam_step(store: ParamStore, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One bias-corrected Adam update of every parameter, in place."""
    store.step += 1
    t = store.step
    c1 = 1.0 - beta1**t
    c2 = 1.0 - beta2**t
    for name, p in store.params.items():
        g = store.grads[name]
        m = store.m[name]
        v = store.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
