"""Tape-based reverse-mode automatic differentiation over dense float64 arrays.

A :class:`Tape` records every primitive applied to :class:`Tensor` handles and
can replay the chain rule backwards from a scalar loss. The primitive set is
the small closure needed by a span-ranking coreference model: matrix/vector
products, gathers, concatenation, elementwise nonlinearities, and a softmax
variant whose slot 0 is an implicit logit fixed at exactly 0 (the "no
antecedent" outcome, which therefore never receives gradient).

Everything is double precision. Forward values are checked finite after every
op, so a NaN/Inf surfaces at the op that produced it rather than in the loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "NonFiniteError",
    "Tensor",
    "Tape",
    "FfnnSpec",
    "backward",
    "primitive_forward",
    "finite_difference_check",
    "PRIMITIVE_NAMES",
]


class ShapeError(ValueError):
    """Raised when an op's inputs do not conform; names the op and shapes."""

    def __init__(self, op: str, shapes: Sequence[tuple], detail: str = ""):
        self.op = op
        self.shapes = [tuple(s) for s in shapes]
        msg = f"{op}: non-conforming shapes {self.shapes}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NonFiniteError(FloatingPointError):
    """Raised when an op would record a non-finite value on the tape."""

    def __init__(self, op: str):
        self.op = op
        super().__init__(f"{op}: non-finite value")


def _as_f64(value) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(value, dtype=np.float64))


@dataclass
class _Node:
    op: str
    parents: tuple[int, ...]
    value: np.ndarray
    # Maps the output adjoint to one adjoint per parent (same order).
    vjp: Optional[Callable[[np.ndarray], tuple[np.ndarray, ...]]]


class Tensor:
    """Handle to one node on a tape: a shape plus row-major float64 data."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape: "Tape", idx: int):
        self.tape = tape
        self.idx = idx

    @property
    def data(self) -> np.ndarray:
        return self.tape.nodes[self.idx].value

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def op(self) -> str:
        return self.tape.nodes[self.idx].op

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)


class Tape:
    """Append-only record of primitive ops; append order is topological.

    A tape is single-threaded. Distinct tapes over a shared read-only
    parameter store may run concurrently; accumulating their gradients in a
    fixed document order is the caller's job.
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self.adjoints: list[Optional[np.ndarray]] = []
        self.param_nodes: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    def _emit(self, op: str, value: np.ndarray, parents: tuple[int, ...], vjp) -> Tensor:
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(op)
        self.nodes.append(_Node(op, parents, value, vjp))
        return Tensor(self, len(self.nodes) - 1)

    def leaf(self, value, op: str = "leaf") -> Tensor:
        return self._emit(op, _as_f64(value), (), None)

    def param(self, store, name: str) -> Tensor:
        """Register a named parameter block as a leaf (cached per tape)."""
        if name in self.param_nodes:
            return Tensor(self, self.param_nodes[name])
        t = self.leaf(store[name], op="param")
        self.param_nodes[name] = t.idx
        return t

    def const(self, value) -> Tensor:
        return self.leaf(value, op="const")

    def adjoint(self, t: Tensor) -> np.ndarray:
        """Adjoint of any node after :func:`backward` (zeros if unreached)."""
        adj = self.adjoints[t.idx]
        return np.zeros_like(t.data) if adj is None else adj


def _same_tape(op: str, *tensors: Tensor) -> Tape:
    tape = tensors[0].tape
    if any(t.tape is not tape for t in tensors):
        raise ValueError(f"{op}: tensors belong to different tapes")
    return tape


# ---------------------------------------------------------------------------
# Primitives. Each records one node with an exact vjp closure.
# ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape("add", a, b)
    if a.shape != b.shape:
        raise ShapeError("add", [a.shape, b.shape])
    return tape._emit("add", a.data + b.data, (a.idx, b.idx), lambda adj: (adj, adj))


def sub(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape("sub", a, b)
    if a.shape != b.shape:
        raise ShapeError("sub", [a.shape, b.shape])
    return tape._emit("sub", a.data - b.data, (a.idx, b.idx), lambda adj: (adj, -adj))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise (Hadamard) product."""
    tape = _same_tape("mul", a, b)
    if a.shape != b.shape:
        raise ShapeError("mul", [a.shape, b.shape])
    av, bv = a.data, b.data
    return tape._emit("mul", av * bv, (a.idx, b.idx), lambda adj: (adj * bv, adj * av))


def scale(a: Tensor, alpha: float) -> Tensor:
    alpha = float(alpha)
    return a.tape._emit("scale", a.data * alpha, (a.idx,), lambda adj: (adj * alpha,))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product for (m,k)@(k,n), (m,k)@(k,) and (k,)@(k,n)."""
    tape = _same_tape("matmul", a, b)
    av, bv = a.data, b.data
    if av.ndim == 2 and bv.ndim == 2:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError("matmul", [av.shape, bv.shape])
        vjp = lambda adj: (adj @ bv.T, av.T @ adj)
    elif av.ndim == 2 and bv.ndim == 1:
        if av.shape[1] != bv.shape[0]:
            raise ShapeError("matmul", [av.shape, bv.shape])
        vjp = lambda adj: (np.outer(adj, bv), av.T @ adj)
    elif av.ndim == 1 and bv.ndim == 2:
        if av.shape[0] != bv.shape[0]:
            raise ShapeError("matmul", [av.shape, bv.shape])
        vjp = lambda adj: (bv @ adj, np.outer(av, adj))
    else:
        raise ShapeError("matmul", [av.shape, bv.shape], "unsupported arity")
    return tape._emit("matmul", av @ bv, (a.idx, b.idx), vjp)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("transpose", [a.shape], "expects a matrix")
    return a.tape._emit(
        "transpose", np.ascontiguousarray(a.data.T), (a.idx,), lambda adj: (adj.T,)
    )


def dot(a: Tensor, b: Tensor) -> Tensor:
    tape = _same_tape("dot", a, b)
    if a.data.ndim != 1 or a.shape != b.shape:
        raise ShapeError("dot", [a.shape, b.shape])
    av, bv = a.data, b.data
    return tape._emit(
        "dot", np.asarray(av @ bv), (a.idx, b.idx), lambda adj: (adj * bv, adj * av)
    )


def sum_(a: Tensor) -> Tensor:
    av = a.data
    return a.tape._emit(
        "sum", np.asarray(av.sum()), (a.idx,), lambda adj: (np.broadcast_to(adj, av.shape).copy(),)
    )


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate vectors (axis 0) or matrices (axis 0/1); scalars promote to (1,)."""
    if not parts:
        raise ShapeError("concat", [], "empty input")
    tape = _same_tape("concat", *parts)
    vals = [p.data.reshape(1) if p.data.ndim == 0 else p.data for p in parts]
    ndim = vals[0].ndim
    if any(v.ndim != ndim for v in vals) or axis >= ndim:
        raise ShapeError("concat", [v.shape for v in vals])
    out = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    splits = np.cumsum(sizes)[:-1]
    shapes = [p.data.shape for p in parts]

    def vjp(adj):
        pieces = np.split(adj, splits, axis=axis)
        return tuple(piece.reshape(shape) for piece, shape in zip(pieces, shapes))

    return tape._emit("concat", out, tuple(p.idx for p in parts), vjp)


def stack(rows: Sequence[Tensor]) -> Tensor:
    """Stack equal-length vectors into a matrix, one per row."""
    if not rows:
        raise ShapeError("stack", [], "empty input")
    tape = _same_tape("stack", *rows)
    shapes = {r.shape for r in rows}
    if len(shapes) != 1 or rows[0].data.ndim != 1:
        raise ShapeError("stack", [r.shape for r in rows])
    out = np.stack([r.data for r in rows])
    return tape._emit(
        "stack", out, tuple(r.idx for r in rows), lambda adj: tuple(adj[i] for i in range(len(rows)))
    )


def take_row(a: Tensor, i: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("take_row", [a.shape], "expects a matrix")
    av = a.data
    i = int(i)

    def vjp(adj):
        g = np.zeros_like(av)
        g[i] = adj
        return (g,)

    return a.tape._emit("take_row", av[i].copy(), (a.idx,), vjp)


def take_rows(a: Tensor, idx) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("take_rows", [a.shape], "expects a matrix")
    av = a.data
    ii = np.asarray(idx, dtype=np.intp)

    def vjp(adj):
        g = np.zeros_like(av)
        np.add.at(g, ii, adj)
        return (g,)

    return a.tape._emit("take_rows", av[ii].copy(), (a.idx,), vjp)


def take_col(a: Tensor, j: int) -> Tensor:
    if a.data.ndim != 2:
        raise ShapeError("take_col", [a.shape], "expects a matrix")
    av = a.data
    j = int(j)

    def vjp(adj):
        g = np.zeros_like(av)
        g[:, j] = adj
        return (g,)

    return a.tape._emit("take_col", av[:, j].copy(), (a.idx,), vjp)


def take(a: Tensor, idx) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError("take", [a.shape], "expects a vector")
    av = a.data
    ii = np.asarray(idx, dtype=np.intp)

    def vjp(adj):
        g = np.zeros_like(av)
        np.add.at(g, ii, adj)
        return (g,)

    return a.tape._emit("take", av[ii].copy(), (a.idx,), vjp)


def take_pairs(a: Tensor, rows, cols) -> Tensor:
    """Gather a[rows[k], cols[k]] into a vector."""
    if a.data.ndim != 2:
        raise ShapeError("take_pairs", [a.shape], "expects a matrix")
    av = a.data
    ri = np.asarray(rows, dtype=np.intp)
    ci = np.asarray(cols, dtype=np.intp)
    if ri.shape != ci.shape:
        raise ShapeError("take_pairs", [ri.shape, ci.shape], "index length mismatch")

    def vjp(adj):
        g = np.zeros_like(av)
        np.add.at(g, (ri, ci), adj)
        return (g,)

    return a.tape._emit("take_pairs", av[ri, ci].copy(), (a.idx,), vjp)


def slice1d(a: Tensor, start: int, stop: int) -> Tensor:
    if a.data.ndim != 1:
        raise ShapeError("slice1d", [a.shape], "expects a vector")
    av = a.data
    start, stop = int(start), int(stop)

    def vjp(adj):
        g = np.zeros_like(av)
        g[start:stop] = adj
        return (g,)

    return a.tape._emit("slice1d", av[start:stop].copy(), (a.idx,), vjp)


def scale_rows(a: Tensor, v: Tensor) -> Tensor:
    """Multiply row i of a matrix by v[i]."""
    tape = _same_tape("scale_rows", a, v)
    av, vv = a.data, v.data
    if av.ndim != 2 or vv.ndim != 1 or av.shape[0] != vv.shape[0]:
        raise ShapeError("scale_rows", [av.shape, vv.shape])
    return tape._emit(
        "scale_rows",
        av * vv[:, None],
        (a.idx, v.idx),
        lambda adj: (adj * vv[:, None], (adj * av).sum(axis=1)),
    )


def add_rowvec(a: Tensor, b: Tensor) -> Tensor:
    """Add a vector to every row of a matrix."""
    tape = _same_tape("add_rowvec", a, b)
    av, bv = a.data, b.data
    if av.ndim != 2 or bv.ndim != 1 or av.shape[1] != bv.shape[0]:
        raise ShapeError("add_rowvec", [av.shape, bv.shape])
    return tape._emit(
        "add_rowvec", av + bv[None, :], (a.idx, b.idx), lambda adj: (adj, adj.sum(axis=0))
    )


def sigmoid(a: Tensor) -> Tensor:
    av = a.data
    out = np.empty_like(av)
    pos = av >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-av[pos]))
    ex = np.exp(av[~pos])
    out[~pos] = ex / (1.0 + ex)
    return a.tape._emit("sigmoid", out, (a.idx,), lambda adj: (adj * out * (1.0 - out),))


def relu(a: Tensor) -> Tensor:
    av = a.data
    out = np.maximum(av, 0.0)
    mask = (av > 0).astype(np.float64)
    return a.tape._emit("relu", out, (a.idx,), lambda adj: (adj * mask,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return a.tape._emit("tanh", out, (a.idx,), lambda adj: (adj * (1.0 - out * out),))


def softmax(a: Tensor) -> Tensor:
    """Plain softmax over the last axis (vector, or rows of a matrix)."""
    av = a.data
    if av.ndim not in (1, 2):
        raise ShapeError("softmax", [av.shape])
    shifted = av - av.max(axis=-1, keepdims=True)
    ex = np.exp(shifted)
    out = ex / ex.sum(axis=-1, keepdims=True)

    def vjp(adj):
        inner = (adj * out).sum(axis=-1, keepdims=True)
        return (out * (adj - inner),)

    return a.tape._emit("softmax", out, (a.idx,), vjp)


def softmax_fixed_zero(logits: Tensor) -> Tensor:
    """Softmax over k logits plus an implicit logit of exactly 0 in slot 0.

    Takes a vector of k scores and returns k+1 probabilities; entry 0 is the
    probability of the implicit zero-score outcome. No gradient ever flows to
    slot 0 because the zero logit is structural, not an input. An empty input
    yields [1.0].
    """
    av = logits.data
    if av.ndim != 1:
        raise ShapeError("softmax_fixed_zero", [av.shape], "expects a vector")
    m = max(0.0, av.max()) if av.size else 0.0
    ex = np.concatenate([[np.exp(-m)], np.exp(av - m)])
    out = ex / ex.sum()

    def vjp(adj):
        inner = float(adj @ out)
        return ((out * (adj - inner))[1:],)

    return logits.tape._emit("softmax_fixed_zero", out, (logits.idx,), vjp)


def log(a: Tensor) -> Tensor:
    """Elementwise natural log; every entry must be strictly positive."""
    av = a.data
    if not (av > 0).all():
        raise NonFiniteError("log")
    return a.tape._emit("log", np.log(av), (a.idx,), lambda adj: (adj / av,))


PRIMITIVE_NAMES: dict[str, Callable] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "elementwise_mul": mul,
    "scale": scale,
    "matmul": matmul,
    "transpose": transpose,
    "dot": dot,
    "sum": sum_,
    "concat": concat,
    "stack": stack,
    "take_row": take_row,
    "take_rows": take_rows,
    "take_col": take_col,
    "take": take,
    "take_pairs": take_pairs,
    "slice1d": slice1d,
    "scale_rows": scale_rows,
    "add_rowvec": add_rowvec,
    "sigmoid": sigmoid,
    "relu": relu,
    "tanh": tanh,
    "softmax": softmax,
    "softmax_with_fixed_zero_logit": softmax_fixed_zero,
    "softmax_fixed_zero": softmax_fixed_zero,
    "scalar_log": log,
    "log": log,
}


def primitive_forward(op: str, inputs: Sequence[Tensor], **kwargs) -> Tensor:
    """Apply a primitive by name; records the result on the inputs' tape."""
    if op not in PRIMITIVE_NAMES:
        raise KeyError(f"unknown primitive {op!r}")
    fn = PRIMITIVE_NAMES[op]
    if op in ("concat", "stack"):
        return fn(list(inputs), **kwargs)
    return fn(*inputs, **kwargs)


# ---------------------------------------------------------------------------
# Backward pass
# ---------------------------------------------------------------------------


def backward(loss: Tensor) -> dict[str, np.ndarray]:
    """Reverse-accumulate adjoints from a scalar loss node.

    Fills ``tape.adjoints`` for every reached node (parameter leaves and
    plain leaves alike) and returns gradients keyed by parameter name.
    """
    tape = loss.tape
    if loss.data.size != 1:
        raise ShapeError("backward", [loss.shape], "loss must be scalar")
    adjoints: list[Optional[np.ndarray]] = [None] * len(tape.nodes)
    adjoints[loss.idx] = np.ones_like(loss.data)
    for i in range(loss.idx, -1, -1):
        adj = adjoints[i]
        if adj is None:
            continue
        node = tape.nodes[i]
        if node.vjp is None:
            continue
        for parent, grad in zip(node.parents, node.vjp(adj)):
            if adjoints[parent] is None:
                adjoints[parent] = grad.copy()
            else:
                adjoints[parent] += grad
    tape.adjoints = adjoints
    grads = {}
    for name, idx in tape.param_nodes.items():
        adj = adjoints[idx]
        grads[name] = np.zeros_like(tape.nodes[idx].value) if adj is None else adj
    return grads


# ---------------------------------------------------------------------------
# Feed-forward networks
# ---------------------------------------------------------------------------

_NONLINS = {"relu": relu, "tanh": tanh, "sigmoid": sigmoid}


@dataclass(frozen=True)
class FfnnSpec:
    """Feed-forward net: hidden layers with a nonlinearity, linear output."""

    input_width: int
    hidden: tuple[int, ...]
    output_width: int
    nonlin: str = "relu"

    def __post_init__(self):
        widths = (self.input_width, *self.hidden, self.output_width)
        if any(w <= 0 for w in widths):
            raise ValueError(f"ffnn widths must be positive, got {widths}")
        if self.nonlin not in _NONLINS:
            raise ValueError(f"unknown nonlinearity {self.nonlin!r}")

    @property
    def layer_dims(self) -> list[tuple[int, int]]:
        widths = (self.input_width, *self.hidden, self.output_width)
        return [(widths[i + 1], widths[i]) for i in range(len(widths) - 1)]

    def param_shapes(self, prefix: str) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {}
        for layer, (out_w, in_w) in enumerate(self.layer_dims):
            shapes[f"{prefix}.w{layer}"] = (out_w, in_w)
            shapes[f"{prefix}.b{layer}"] = (out_w,)
        return shapes


def ffnn_forward(x: Tensor, spec: FfnnSpec, store, prefix: str) -> Tensor:
    """Run an FFNN on a vector (width in) or a matrix of row samples (n, in)."""
    batched = x.data.ndim == 2
    width = x.shape[1] if batched else x.shape[0]
    if width != spec.input_width:
        raise ShapeError("ffnn_forward", [x.shape], f"expects input width {spec.input_width}")
    tape = x.tape
    nonlin = _NONLINS[spec.nonlin]
    h = x
    last = len(spec.layer_dims) - 1
    for layer in range(last + 1):
        w = tape.param(store, f"{prefix}.w{layer}")
        b = tape.param(store, f"{prefix}.b{layer}")
        if batched:
            h = add_rowvec(matmul(h, transpose(w)), b)
        else:
            h = add(matmul(w, h), b)
        if layer != last:
            h = nonlin(h)
    return h


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------


def finite_difference_check(
    loss_fn: Callable[["object"], Tensor],
    store,
    epsilon: float = 1e-5,
) -> dict[str, float]:
    """Compare analytic gradients of ``loss_fn`` with central differences.

    ``loss_fn`` must deterministically map a parameter store to a scalar loss
    Tensor on a fresh tape. Returns the max relative error per parameter
    block; blocks whose FD evaluation went non-finite report ``inf``. The
    relative error uses a 1e-4 floor on the denominator so near-zero
    gradients are compared absolutely at 1e-4 scale.
    """
    loss = loss_fn(store)
    analytic = backward(loss)
    scratch = store.clone()
    report: dict[str, float] = {}
    for name in sorted(store.names()):
        block = scratch[name]
        grad = analytic.get(name)
        if grad is None:
            grad = np.zeros_like(block)
        flat = block.reshape(-1)
        fd = np.zeros_like(flat)
        bad = False
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + epsilon
            try:
                up = loss_fn(scratch).item()
                flat[k] = orig - epsilon
                down = loss_fn(scratch).item()
            except NonFiniteError:
                bad = True
                flat[k] = orig
                break
            flat[k] = orig
            fd[k] = (up - down) / (2.0 * epsilon)
        if bad or not np.all(np.isfinite(fd)):
            report[name] = float("inf")
            continue
        a = grad.reshape(-1)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(fd)), 1e-4)
        report[name] = float(np.max(np.abs(a - fd) / denom)) if flat.size else 0.0
    return report
