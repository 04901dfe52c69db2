"""Minimal reverse-mode automatic differentiation over dense real tensors.

Tensors wrap numpy arrays (0-d scalars, 1-d vectors, 2-d matrices) and record
the operations applied to them in a dynamic graph. ``backward`` walks that
graph in reverse topological order and accumulates gradients into every leaf
reachable from a scalar loss.

Shape discipline is deliberately strict: the only implicit broadcast allowed
is a vector (or a single row) over the frame axis of a matrix. Everything
else raises ``ShapeError`` naming the op and the offending shapes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

FLOAT_DTYPES = (np.float32, np.float64)
DEFAULT_DTYPE = np.float64


class ShapeError(ValueError):
    """Raised when operand shapes do not conform for an op."""


class GraphError(RuntimeError):
    """Raised on structurally invalid backward requests (e.g. non-scalar loss)."""


def _as_array(data, dtype=None) -> np.ndarray:
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype)
    if arr.dtype in FLOAT_DTYPES:
        return arr
    return arr.astype(DEFAULT_DTYPE)


class Tensor:
    """A node in the computation graph.

    Leaves are created directly (``param`` / ``constant``); interior nodes are
    created by ops and carry a backward closure plus links to their parents.
    Gradients accumulate into ``grad`` (same shape as ``data``) so that several
    backward passes sum, which is what gradient accumulation over a batch needs.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, *, requires_grad: bool = False, name: str | None = None,
                 dtype=None):
        self.data = _as_array(data, dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @classmethod
    def _from_op(cls, data: np.ndarray, parents: Sequence["Tensor"],
                 backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = cls(np.asarray(data))
        out._parents = tuple(parents)
        out._backward = backward
        out.requires_grad = any(p.requires_grad or p._parents for p in parents)
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = self.name or ("param" if self.requires_grad and not self._parents else "node")
        return f"Tensor({tag}, shape={self.shape}, dtype={self.data.dtype})"


def param(data, name: str | None = None, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, name=name, dtype=dtype)


def constant(data, name: str | None = None, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=False, name=name, dtype=dtype)


def _needs_grad(*tensors: Tensor) -> bool:
    return any(t.requires_grad or t._parents for t in tensors)


def _check(cond: bool, op: str, *shapes: tuple[int, ...]) -> None:
    if not cond:
        raise ShapeError(f"{op}: incompatible shapes {' vs '.join(str(s) for s in shapes)}")


# ---------------------------------------------------------------------------
# forward ops


def matmul(a: Tensor, b: Tensor, *, transpose_b: bool = False) -> Tensor:
    _check(a.data.ndim == 2 and b.data.ndim == 2, "matmul", a.shape, b.shape)
    bmat = b.data.T if transpose_b else b.data
    _check(a.shape[1] == bmat.shape[0], "matmul", a.shape, b.shape)
    out_data = a.data @ bmat

    def backward(g: np.ndarray) -> None:
        if a.requires_grad or a._parents:
            a.accumulate(g @ bmat.T)
        if b.requires_grad or b._parents:
            gb = a.data.T @ g
            b.accumulate(gb.T if transpose_b else gb)

    return Tensor._from_op(out_data, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise add; also supports broadcasting a vector/row over the frame axis."""
    row_broadcast = False
    if a.shape == b.shape:
        pass
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        row_broadcast = True
    elif a.data.ndim == 2 and b.data.ndim == 2 and b.shape[0] == 1 and a.shape[1] == b.shape[1]:
        row_broadcast = True
    else:
        _check(False, "add", a.shape, b.shape)
    out_data = a.data + b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad or a._parents:
            a.accumulate(g)
        if b.requires_grad or b._parents:
            if row_broadcast:
                gb = g.sum(axis=0)
                b.accumulate(gb.reshape(b.shape))
            else:
                b.accumulate(g)

    return Tensor._from_op(out_data, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, "sub", a.shape, b.shape)
    out_data = a.data - b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad or a._parents:
            a.accumulate(g)
        if b.requires_grad or b._parents:
            b.accumulate(-g)

    return Tensor._from_op(out_data, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    _check(a.shape == b.shape, "mul", a.shape, b.shape)
    out_data = a.data * b.data

    def backward(g: np.ndarray) -> None:
        if a.requires_grad or a._parents:
            a.accumulate(g * b.data)
        if b.requires_grad or b._parents:
            b.accumulate(g * a.data)

    return Tensor._from_op(out_data, (a, b), backward)


def affine(x: Tensor, scale: float, shift: float = 0.0) -> Tensor:
    """scale * x + shift with python-float coefficients (constants, no grad)."""
    out_data = x.data * scale + shift

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * scale)

    return Tensor._from_op(out_data, (x,), backward)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not parts:
        raise ShapeError("concat: empty input list")
    _check(axis in (0, 1), "concat", *(p.shape for p in parts))
    _check(all(p.data.ndim == 2 for p in parts), "concat", *(p.shape for p in parts))
    other = 1 - axis
    _check(all(p.shape[other] == parts[0].shape[other] for p in parts),
           "concat", *(p.shape for p in parts))
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g: np.ndarray) -> None:
        for p, s, e in zip(parts, offsets[:-1], offsets[1:]):
            if not (p.requires_grad or p._parents):
                continue
            if axis == 0:
                p.accumulate(g[s:e])
            else:
                p.accumulate(g[:, s:e])

    return Tensor._from_op(out_data, tuple(parts), backward)


def rows(x: Tensor, start: int, stop: int) -> Tensor:
    _check(x.data.ndim == 2 and 0 <= start < stop <= x.shape[0], "rows", x.shape, (start, stop))
    out_data = x.data[start:stop]

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        full[start:stop] = g
        x.accumulate(full)

    return Tensor._from_op(out_data, (x,), backward)


def cols(x: Tensor, start: int, stop: int) -> Tensor:
    _check(x.data.ndim == 2 and 0 <= start < stop <= x.shape[1], "cols", x.shape, (start, stop))
    out_data = x.data[:, start:stop]

    def backward(g: np.ndarray) -> None:
        full = np.zeros_like(x.data)
        full[:, start:stop] = g
        x.accumulate(full)

    return Tensor._from_op(out_data, (x,), backward)


def _unary(x: Tensor, fwd: Callable, dfd: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> Tensor:
    out_data = fwd(x.data)

    def backward(g: np.ndarray) -> None:
        x.accumulate(g * dfd(x.data, out_data))

    return Tensor._from_op(out_data, (x,), backward)


def tanh(x: Tensor) -> Tensor:
    return _unary(x, np.tanh, lambda _, y: 1.0 - y * y)


def sigmoid(x: Tensor) -> Tensor:
    return _unary(x, lambda v: 1.0 / (1.0 + np.exp(-v)), lambda _, y: y * (1.0 - y))


def exp(x: Tensor) -> Tensor:
    return _unary(x, np.exp, lambda _, y: y)


def log(x: Tensor) -> Tensor:
    return _unary(x, np.log, lambda v, _: 1.0 / v)


def square(x: Tensor) -> Tensor:
    return _unary(x, np.square, lambda v, _: 2.0 * v)


def sum_all(x: Tensor) -> Tensor:
    out_data = np.asarray(x.data.sum(), dtype=x.data.dtype)

    def backward(g: np.ndarray) -> None:
        x.accumulate(np.full_like(x.data, float(g)))

    return Tensor._from_op(out_data, (x,), backward)


def mean_all(x: Tensor) -> Tensor:
    n = x.data.size
    _check(n > 0, "mean", x.shape)
    out_data = np.asarray(x.data.mean(), dtype=x.data.dtype)

    def backward(g: np.ndarray) -> None:
        x.accumulate(np.full_like(x.data, float(g) / n))

    return Tensor._from_op(out_data, (x,), backward)


def broadcast_rows(v: Tensor, n: int) -> Tensor:
    """Repeat a vector (or single row) ``n`` times along the frame axis."""
    _check(v.data.ndim == 1 or (v.data.ndim == 2 and v.shape[0] == 1),
           "broadcast_rows", v.shape)
    row = v.data.reshape(1, -1)
    out_data = np.repeat(row, n, axis=0)

    def backward(g: np.ndarray) -> None:
        v.accumulate(g.sum(axis=0).reshape(v.shape))

    return Tensor._from_op(out_data, (v,), backward)


def stop_gradient(x: Tensor) -> Tensor:
    """A constant copy of ``x``: forward value identical, no gradient flows back."""
    return Tensor(x.data.copy(), requires_grad=False, name=x.name)


# ---------------------------------------------------------------------------
# backward


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``grad`` of every reachable leaf."""
    if loss.data.shape != ():
        raise GraphError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.accumulate(np.asarray(1.0, dtype=loss.data.dtype))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grads(params: Iterable[Tensor]) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckResult:
    """Per-parameter max relative error of analytic vs central-difference gradients."""

    errors: dict[str, float] = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def ok(self) -> bool:
        return all(e <= self.tol for e in self.errors.values())

    @property
    def worst(self) -> float:
        return max(self.errors.values()) if self.errors else 0.0

    def __str__(self) -> str:
        lines = [f"{'PASS' if e <= self.tol else 'FAIL'} {n}: {e:.3e}"
                 for n, e in sorted(self.errors.items())]
        return "\n".join(lines)


def grad_check(build_loss: Callable[[], Tensor], params: dict[str, Tensor],
               h: float = 1e-5, tol: float = 1e-4,
               max_entries: int | None = None,
               rng: np.random.Generator | None = None) -> GradCheckResult:
    """Compare analytic gradients to central finite differences.

    ``build_loss`` must be deterministic and close over ``params``; it is
    re-evaluated 2x per checked entry. Relative error uses the denominator
    max(1, |analytic|, |numeric|) so near-zero gradients are judged on
    absolute error. ``max_entries`` caps the entries checked per parameter
    (sampled with ``rng``), keeping large checks fast without biasing them.
    """
    if h <= 0:
        raise ValueError("grad_check: h must be positive")
    zero_grads(params.values())
    loss = build_loss()
    backward(loss)
    analytic = {n: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for n, p in params.items()}

    result = GradCheckResult(tol=tol)
    for name, p in params.items():
        flat = p.data.reshape(-1)
        n = flat.size
        if max_entries is not None and n > max_entries:
            gen = rng if rng is not None else np.random.default_rng(0)
            idx = gen.choice(n, size=max_entries, replace=False)
        else:
            idx = np.arange(n)
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + h
            f_plus = float(build_loss().data)
            flat[i] = orig - h
            f_minus = float(build_loss().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            a = float(analytic[name].reshape(-1)[i])
            err = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            worst = max(worst, err)
        result.errors[name] = worst
    return result
