"""Layer vocabulary: fully connected layers, gated recurrent layers
(unidirectional / bidirectional), and segment mean pooling with its inverse
broadcast.

Recurrent layers use the standard LSTM cell (input/forget/output gates, cell
state, tanh activations), no peepholes, no projection. Whole-sequence passes
go through the fused kernels in ``kernels.py``; ``LSTMCell`` exposes the same
cell step built from primitive autodiff ops for autoregressive loops, and the
two are tested against each other.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor
from .kernels import lstm_backward, lstm_forward

try:
    # all matmuls here are small; parallel BLAS only fights the kernel threads
    import threadpoolctl

    threadpoolctl.threadpool_limits(1, "blas")
except ImportError:  # pragma: no cover
    pass

Activation = str  # "linear" | "tanh"
Direction = str  # "forward" | "backward" | "bidirectional"


def glorot(rng: np.random.Generator, shape: tuple[int, ...], dtype=np.float64) -> np.ndarray:
    fan_in = shape[-1]
    fan_out = shape[0]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Dense:
    """y = act(x W^T + b), applied per frame. Weight is (d_out, d_in)."""

    def __init__(self, d_out: int, d_in: int, activation: Activation = "linear", *,
                 rng: np.random.Generator | None = None, zero_init: bool = False,
                 name: str = "dense", dtype=np.float64):
        if activation not in ("linear", "tanh"):
            raise ValueError(f"unknown activation: {activation}")
        if zero_init:
            w = np.zeros((d_out, d_in), dtype=dtype)
        else:
            if rng is None:
                raise ValueError("Dense: rng required unless zero_init")
            w = glorot(rng, (d_out, d_in), dtype)
        self.weight = ad.param(w, name=f"{name}.weight")
        self.bias = ad.param(np.zeros(d_out, dtype=dtype), name=f"{name}.bias")
        self.activation = activation
        self.d_in = d_in
        self.d_out = d_out

    def __call__(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeError(f"dense: input {x.shape} does not match d_in={self.d_in}")
        y = ad.add(ad.matmul(x, self.weight, transpose_b=True), self.bias)
        if self.activation == "tanh":
            y = ad.tanh(y)
        return y

    def parameters(self) -> dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


def _lstm_params(rng: np.random.Generator, d_in: int, hidden: int, dtype, name: str):
    wx = ad.param(glorot(rng, (4 * hidden, d_in), dtype), name=f"{name}.wx")
    u = ad.param(glorot(rng, (4 * hidden, hidden), dtype), name=f"{name}.u")
    b = np.zeros(4 * hidden, dtype=dtype)
    b[hidden:2 * hidden] = 1.0  # forget-gate bias
    bias = ad.param(b, name=f"{name}.b")
    return wx, u, bias


_KERNEL_POOL = ThreadPoolExecutor(max_workers=2, thread_name_prefix="lstm")


def _initial_state(hidden: int, dtype,
                   initial: tuple[np.ndarray, np.ndarray] | None
                   ) -> tuple[np.ndarray, np.ndarray]:
    if initial is None:
        return np.zeros(hidden, dtype=dtype), np.zeros(hidden, dtype=dtype)
    return (np.asarray(initial[0], dtype=dtype).reshape(hidden),
            np.asarray(initial[1], dtype=dtype).reshape(hidden))


def _wrap_direction(x: Tensor, wx: Tensor, u: Tensor, b: Tensor, reverse: bool,
                    h0: np.ndarray, hs: np.ndarray, cache: np.ndarray) -> Tensor:
    """Graph node around one completed directional kernel run.

    Time flips happen on the (contiguous) projected activations, never inside
    matmuls: reverse-stride operands make the BLAS calls an order of magnitude
    slower.
    """
    out_data = np.ascontiguousarray(hs[::-1]) if reverse else hs

    def backward(g: np.ndarray) -> None:
        g_seq = np.ascontiguousarray(g[::-1]) if reverse else np.ascontiguousarray(g)
        dxw, du, _ = lstm_backward(g_seq, cache, u.data, hs, h0)
        if reverse:
            dxw = np.ascontiguousarray(dxw[::-1])
        if u.requires_grad or u._parents:
            u.accumulate(du)
        if wx.requires_grad or wx._parents:
            wx.accumulate(dxw.T @ x.data)
        if b.requires_grad or b._parents:
            b.accumulate(dxw.sum(axis=0))
        if x.requires_grad or x._parents:
            x.accumulate(dxw @ wx.data)

    return Tensor._from_op(out_data, (x, wx, u, b), backward)


def _project(x: Tensor, wx: Tensor, b: Tensor, reverse: bool) -> np.ndarray:
    xw = x.data @ wx.data.T + b.data
    return np.ascontiguousarray(xw[::-1]) if reverse else xw


def _lstm_direction(x: Tensor, wx: Tensor, u: Tensor, b: Tensor, hidden: int,
                    reverse: bool, initial: tuple[np.ndarray, np.ndarray] | None) -> Tensor:
    h0, c0 = _initial_state(hidden, x.data.dtype, initial)
    xw = _project(x, wx, b, reverse)
    hs, cache = lstm_forward(xw, u.data, h0, c0)
    return _wrap_direction(x, wx, u, b, reverse, h0, hs, cache)


def _lstm_bidirectional(x: Tensor, fwd: tuple[Tensor, Tensor, Tensor],
                        bwd: tuple[Tensor, Tensor, Tensor], hidden: int,
                        initial) -> Tensor:
    """Both directions of one layer run concurrently (the kernels drop the GIL);
    outputs combine in a fixed order, so results do not depend on scheduling."""
    dtype = x.data.dtype
    h0f, c0f = _initial_state(hidden, dtype, initial)
    h0b, c0b = _initial_state(hidden, dtype, initial)
    xw_f = _project(x, fwd[0], fwd[2], reverse=False)
    xw_b = _project(x, bwd[0], bwd[2], reverse=True)
    future = _KERNEL_POOL.submit(lstm_forward, xw_f, fwd[1].data, h0f, c0f)
    hs_b, cache_b = lstm_forward(xw_b, bwd[1].data, h0b, c0b)
    hs_f, cache_f = future.result()
    out_f = _wrap_direction(x, fwd[0], fwd[1], fwd[2], False, h0f, hs_f, cache_f)
    out_b = _wrap_direction(x, bwd[0], bwd[1], bwd[2], True, h0b, hs_b, cache_b)
    return ad.concat([out_f, out_b], axis=1)


class Recurrent:
    """Gated recurrent layer over a (frames, d_in) sequence.

    Bidirectional output is the frame-wise concatenation of the forward pass
    and the re-reversed backward pass, width 2H.
    """

    def __init__(self, d_in: int, hidden: int, direction: Direction = "bidirectional", *,
                 rng: np.random.Generator | None = None, name: str = "lstm",
                 dtype=np.float64):
        if direction not in ("forward", "backward", "bidirectional"):
            raise ValueError(f"unknown direction: {direction}")
        if rng is None:
            raise ValueError("Recurrent: rng required")
        self.d_in = d_in
        self.hidden = hidden
        self.direction = direction
        self._params: dict[str, Tensor] = {}
        if direction in ("forward", "bidirectional"):
            self.fwd = _lstm_params(rng, d_in, hidden, dtype, f"{name}.fwd")
            for k, t in zip(("wx", "u", "b"), self.fwd):
                self._params[f"fwd.{k}"] = t
        if direction in ("backward", "bidirectional"):
            self.bwd = _lstm_params(rng, d_in, hidden, dtype, f"{name}.bwd")
            for k, t in zip(("wx", "u", "b"), self.bwd):
                self._params[f"bwd.{k}"] = t

    @property
    def d_out(self) -> int:
        return 2 * self.hidden if self.direction == "bidirectional" else self.hidden

    def __call__(self, x: Tensor, initial=None) -> Tensor:
        if x.data.ndim != 2 or x.shape[1] != self.d_in:
            raise ShapeError(f"recurrent: input {x.shape} does not match d_in={self.d_in}")
        if self.direction == "forward":
            return _lstm_direction(x, *self.fwd, self.hidden, False, initial)
        if self.direction == "backward":
            return _lstm_direction(x, *self.bwd, self.hidden, True, initial)
        return _lstm_bidirectional(x, self.fwd, self.bwd, self.hidden, initial)

    def parameters(self) -> dict[str, Tensor]:
        return dict(self._params)


class LSTMCell:
    """Single-step LSTM built from primitive ops, for autoregressive loops.

    Parameter layout matches one direction of ``Recurrent`` (wx, u, b with
    fused gate blocks), so the same weights drive both implementations.
    """

    def __init__(self, d_in: int, hidden: int, *, rng: np.random.Generator | None = None,
                 name: str = "cell", dtype=np.float64,
                 params: tuple[Tensor, Tensor, Tensor] | None = None):
        self.d_in = d_in
        self.hidden = hidden
        if params is not None:
            self.wx, self.u, self.b = params
        else:
            if rng is None:
                raise ValueError("LSTMCell: rng required")
            self.wx, self.u, self.b = _lstm_params(rng, d_in, hidden, dtype, name)

    def initial_state(self, dtype=np.float64) -> tuple[Tensor, Tensor]:
        z = np.zeros((1, self.hidden), dtype=dtype)
        return ad.constant(z.copy()), ad.constant(z.copy())

    def step(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        if x.data.ndim != 2 or x.shape != (1, self.d_in):
            raise ShapeError(f"cell step: input {x.shape}, expected (1, {self.d_in})")
        hid = self.hidden
        a = ad.add(ad.add(ad.matmul(x, self.wx, transpose_b=True),
                          ad.matmul(h, self.u, transpose_b=True)), self.b)
        i = ad.sigmoid(ad.cols(a, 0, hid))
        f = ad.sigmoid(ad.cols(a, hid, 2 * hid))
        g = ad.tanh(ad.cols(a, 2 * hid, 3 * hid))
        o = ad.sigmoid(ad.cols(a, 3 * hid, 4 * hid))
        c_new = ad.add(ad.mul(f, c), ad.mul(i, g))
        h_new = ad.mul(o, ad.tanh(c_new))
        return h_new, c_new

    def parameters(self) -> dict[str, Tensor]:
        return {"wx": self.wx, "u": self.u, "b": self.b}


@dataclass(frozen=True)
class SegmentSpec:
    """Half-open frame intervals that tile [0, T) with no gaps or overlaps."""

    boundaries: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if not self.boundaries:
            raise ValueError("SegmentSpec: at least one interval required")
        prev_end = 0
        for k, (s, e) in enumerate(self.boundaries):
            if s != prev_end:
                raise ValueError(f"SegmentSpec: interval {k} starts at {s}, expected {prev_end}")
            if e <= s:
                raise ValueError(f"SegmentSpec: interval {k} [{s},{e}) is empty")
            prev_end = e
        object.__setattr__(self, "boundaries", tuple((int(s), int(e)) for s, e in self.boundaries))

    @classmethod
    def from_lengths(cls, lengths: Sequence[int]) -> "SegmentSpec":
        bounds = []
        pos = 0
        for n in lengths:
            bounds.append((pos, pos + int(n)))
            pos += int(n)
        return cls(tuple(bounds))

    @classmethod
    def single(cls, total_frames: int) -> "SegmentSpec":
        return cls(((0, int(total_frames)),))

    @property
    def n_segments(self) -> int:
        return len(self.boundaries)

    @property
    def total_frames(self) -> int:
        return self.boundaries[-1][1]

    def lengths(self) -> tuple[int, ...]:
        return tuple(e - s for s, e in self.boundaries)

    def segment_of_frame(self) -> np.ndarray:
        out = np.empty(self.total_frames, dtype=np.int64)
        for k, (s, e) in enumerate(self.boundaries):
            out[s:e] = k
        return out


def containment_map(inner: SegmentSpec, outer: SegmentSpec) -> np.ndarray:
    """Index of the outer segment containing each inner segment.

    Raises if any inner interval crosses an outer boundary.
    """
    out = np.empty(inner.n_segments, dtype=np.int64)
    for k, (s, e) in enumerate(inner.boundaries):
        hit = None
        for j, (os_, oe) in enumerate(outer.boundaries):
            if os_ <= s and e <= oe:
                hit = j
                break
        if hit is None:
            raise ValueError(f"segment [{s},{e}) crosses an enclosing boundary")
        out[k] = hit
    return out


def segment_mean_pool(x: Tensor, seg: SegmentSpec) -> Tensor:
    """Arithmetic mean of ``x`` over each interval; output is (K, D).

    Means are computed relative to the segment's first row so that pooling a
    broadcast (constant-per-segment) input returns those constants exactly.
    """
    if x.data.ndim != 2 or seg.total_frames != x.shape[0]:
        raise ShapeError(f"segment_mean_pool: input {x.shape} vs segments over "
                         f"[0,{seg.total_frames})")
    k_total = seg.n_segments
    out_data = np.empty((k_total, x.shape[1]), dtype=x.data.dtype)
    for k, (s, e) in enumerate(seg.boundaries):
        block = x.data[s:e]
        first = block[0]
        out_data[k] = first + (block - first).sum(axis=0) / (e - s)

    def backward(g: np.ndarray) -> None:
        dx = np.empty_like(x.data)
        for k, (s, e) in enumerate(seg.boundaries):
            dx[s:e] = g[k] / (e - s)
        x.accumulate(dx)

    return Tensor._from_op(out_data, (x,), backward)


def broadcast_segments(z: Tensor, seg: SegmentSpec) -> Tensor:
    """Inverse of pooling: frame f in interval k receives row k unchanged."""
    if z.data.ndim != 2 or z.shape[0] != seg.n_segments:
        raise ShapeError(f"broadcast_segments: {z.shape} vs {seg.n_segments} segments")
    idx = seg.segment_of_frame()
    out_data = z.data[idx]

    def backward(g: np.ndarray) -> None:
        dz = np.empty_like(z.data)
        for k, (s, e) in enumerate(seg.boundaries):
            dz[k] = g[s:e].sum(axis=0)
        z.accumulate(dz)

    return Tensor._from_op(out_data, (z,), backward)
