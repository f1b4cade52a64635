"""Dense NCHW tensors with a reverse-mode gradient tape.

Every operation returns a new :class:`Tensor`. When any input requires a
gradient (and recording is enabled) the output keeps references to its
inputs plus a closure mapping the output gradient to input gradients.
:func:`backward` orders that record topologically and walks it once in
reverse.

Training runs in float32; verification switches to float64 either with
:func:`precision` or by exporting ``DEBLUR_PRECISION=f64``.
"""

from __future__ import annotations

import contextlib
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_DTYPES = {"f32": np.float32, "f64": np.float64}


class _Settings:
    dtype = _DTYPES.get(os.environ.get("DEBLUR_PRECISION", "f32"), np.float32)
    grad_enabled = True
    check_finite = os.environ.get("DEBLUR_CHECK_FINITE", "") not in ("", "0")
    switch_log: list | None = None


def default_dtype():
    return _Settings.dtype


def set_precision(name: str) -> None:
    if name not in _DTYPES:
        raise ValueError(f"unknown precision {name!r}; expected one of {sorted(_DTYPES)}")
    _Settings.dtype = _DTYPES[name]


@contextlib.contextmanager
def precision(name: str):
    """Temporarily switch the dtype used for newly created tensors."""
    old = _Settings.dtype
    set_precision(name)
    try:
        yield
    finally:
        _Settings.dtype = old


@contextlib.contextmanager
def no_grad():
    old = _Settings.grad_enabled
    _Settings.grad_enabled = False
    try:
        yield
    finally:
        _Settings.grad_enabled = old


@contextlib.contextmanager
def finite_checks(enabled: bool = True):
    """Debug mode: raise as soon as an operation produces NaN or Inf."""
    old = _Settings.check_finite
    _Settings.check_finite = enabled
    try:
        yield
    finally:
        _Settings.check_finite = old


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")
    __array_priority__ = 1000

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype or _Settings.dtype)
        self.requires_grad = requires_grad
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None
        self.op = "leaf"

    @classmethod
    def _make(cls, data: np.ndarray, parents: Sequence["Tensor"], backward: Callable, op: str):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        needs = _Settings.grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        out._parents = tuple(parents) if needs else ()
        out._backward = backward if needs else None
        if _Settings.check_finite and not np.all(np.isfinite(data)):
            raise NonFiniteError(f"non-finite values produced by {op}")
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Parameter(Tensor):
    """A trainable leaf tensor."""

    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


def as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _lift(a, b):
    a = a if isinstance(a, Tensor) else Tensor(a, dtype=_peer_dtype(b))
    b = b if isinstance(b, Tensor) else Tensor(b, dtype=_peer_dtype(a))
    return a, b


def _peer_dtype(x):
    return x.data.dtype if isinstance(x, Tensor) else None


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _lift(a, b)
    _check_broadcast(a, b, "add")

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._make(a.data + b.data, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = _lift(a, b)
    _check_broadcast(a, b, "sub")

    def back(g):
        return _unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)

    return Tensor._make(a.data - b.data, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b = _lift(a, b)
    _check_broadcast(a, b, "mul")

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._make(a.data * b.data, (a, b), back, "mul")


def div(a, b) -> Tensor:
    a, b = _lift(a, b)
    _check_broadcast(a, b, "div")
    out = a.data / b.data

    def back(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return Tensor._make(out, (a, b), back, "div")


def scale(x: Tensor, gamma: float) -> Tensor:
    x = as_tensor(x)
    gamma = x.data.dtype.type(gamma)
    return Tensor._make(x.data * gamma, (x,), lambda g: (g * gamma,), "scale")


def _record_switch(*masks: np.ndarray) -> None:
    """Log the branch pattern of a piecewise op while :func:`record_switches` is active."""
    if _Settings.switch_log is not None:
        _Settings.switch_log.append(b"".join(np.packbits(m).tobytes() for m in masks))


@contextlib.contextmanager
def record_switches():
    """Collect the branch pattern of every relu/leaky_relu/clamp/abs evaluated inside.

    Two evaluations with equal logs lie in the same linear piece of every
    kink, which is how the finite-difference harness spots stencils that
    straddle a non-differentiable point.
    """
    old = _Settings.switch_log
    log: list = []
    _Settings.switch_log = log
    try:
        yield log
    finally:
        _Settings.switch_log = old


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    _record_switch(mask)
    return Tensor._make(np.where(mask, x.data, 0).astype(x.dtype), (x,), lambda g: (g * mask,), "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    pos = x.data > 0
    _record_switch(pos)
    k = np.where(pos, 1, slope).astype(x.dtype)
    return Tensor._make(x.data * k, (x,), lambda g: (g * k,), "leaky_relu")


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so large negative inputs do not overflow exp
    d = x.data
    e = np.exp(-np.abs(d))
    out = np.where(d >= 0, 1 / (1 + e), e / (1 + e)).astype(x.dtype)
    return Tensor._make(out, (x,), lambda g: (g * out * (1 - out),), "sigmoid")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return Tensor._make(out, (x,), lambda g: (g * (1 - out * out),), "tanh")


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    _record_switch(x.data < lo, x.data > hi)
    return Tensor._make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clamp")


def abs_(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    _record_switch(x.data > 0, x.data < 0)
    return Tensor._make(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


def square(x: Tensor) -> Tensor:
    return Tensor._make(x.data * x.data, (x,), lambda g: (2 * g * x.data,), "square")


# ---------------------------------------------------------------- reductions / shape


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.dtype, copy=True),)

    return Tensor._make(np.asarray(out), (x,), back, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else int(np.prod([x.shape[a] for a in np.atleast_1d(axis)]))
    return scale(sum_(x, axis, keepdims), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    src = x.shape
    return Tensor._make(x.data.reshape(shape), (x,), lambda g: (g.reshape(src),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    inv = np.argsort(axes)
    return Tensor._make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),), "transpose")


def concat(xs: Sequence[Tensor], axis: int = 1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]
    try:
        out = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError as e:
        raise ValueError(f"concat: {e}") from None

    def back(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._make(out, xs, back, "concat")


def slice_channels(x: Tensor, start: int, stop: int) -> Tensor:
    shape, dtype = x.shape, x.dtype

    def back(g):
        full = np.zeros(shape, dtype=dtype)
        full[:, start:stop] = g
        return (full,)

    return Tensor._make(x.data[:, start:stop], (x,), back, "slice_channels")


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _lift(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: dimension mismatch {a.shape} @ {b.shape}")
    if a.shape[:-2] != b.shape[:-2]:
        raise ValueError(f"matmul: batch dims differ {a.shape[:-2]} vs {b.shape[:-2]}")

    def back(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return Tensor._make(a.data @ b.data, (a, b), back, "matmul")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (x,), back, "softmax")


def global_average(x: Tensor) -> Tensor:
    """Per-channel spatial mean, ``[N,C,H,W] -> [N,C,1,1]``."""
    n, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3), keepdims=True)

    def back(g):
        return (np.broadcast_to(g / (h * w), x.shape).astype(x.dtype, copy=True),)

    return Tensor._make(out, (x,), back, "global_average")


# ---------------------------------------------------------------- convolution


def _same_pads(size: int, k: int, s: int) -> tuple[int, int]:
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return total // 2, total - total // 2


def _pads(h: int, w: int, kh: int, kw: int, stride: int, padding):
    if padding == "same":
        return _same_pads(h, kh, stride), _same_pads(w, kw, stride)
    if padding == "valid":
        return (0, 0), (0, 0)
    if isinstance(padding, (int, np.integer)) and padding >= 0:
        return (int(padding),) * 2, (int(padding),) * 2
    raise ValueError(f"unsupported padding {padding!r}")


def _windows(xp: np.ndarray, kh: int, kw: int, s: int, ho: int, wo: int) -> np.ndarray:
    # [N,C,Ho,Wo,kh,kw] strided view, no copy
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    return win[:, :, : (ho - 1) * s + 1 : s, : (wo - 1) * s + 1 : s]


def _conv_forward(xp, w, s, ho, wo):
    cols = _windows(xp, w.shape[2], w.shape[3], s, ho, wo)
    out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))  # N,Ho,Wo,Cout
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_input_grad(g, w, padded_shape, s):
    """Adjoint of :func:`_conv_forward` w.r.t. the padded input."""
    _, _, kh, kw = w.shape
    ho, wo = g.shape[2:]
    dcols = np.tensordot(w, g, axes=([0], [1]))  # Cin,kh,kw,N,Ho,Wo
    dxp = np.zeros(padded_shape, dtype=g.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + (ho - 1) * s + 1 : s, j : j + (wo - 1) * s + 1 : s] += dcols[:, i, j].transpose(1, 0, 2, 3)
    return dxp


def _conv_weight_grad(xp, g, kh, kw, s):
    ho, wo = g.shape[2:]
    cols = _windows(xp, kh, kw, s, ho, wo)
    return np.tensordot(g, cols, axes=([0, 2, 3], [0, 2, 3]))  # Cout,Cin,kh,kw


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding="same") -> Tensor:
    """2-D cross-correlation. ``w`` is ``[Cout, Cin, kh, kw]``.

    ``same`` padding zero-pads symmetrically, the odd extra pixel going to
    the bottom/right, so that the output is ``ceil(H / stride)``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n, cin, h, wd = x.shape
    cout, wcin, kh, kw = w.shape
    if cin != wcin:
        raise ValueError(f"conv2d: input has {cin} channels, weight expects {wcin}")
    (pt, pb), (pl, pr) = _pads(h, wd, kh, kw, stride, padding)
    ho = (h + pt + pb - kh) // stride + 1
    wo = (wd + pl + pr - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ValueError(f"conv2d: empty output for input {x.shape} and kernel {w.shape}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if pt + pb + pl + pr else x.data
    out = _conv_forward(xp, w.data, stride, ho, wo)
    if b is not None:
        out += b.data.reshape(1, -1, 1, 1)

    def back(g):
        dxp = _conv_input_grad(g, w.data, xp.shape, stride) if x.requires_grad else None
        dx = dxp[:, :, pt : pt + h, pl : pl + wd] if dxp is not None else None
        dw = _conv_weight_grad(xp, g, kh, kw, stride) if w.requires_grad else None
        if b is None:
            return dx, dw
        return dx, dw, g.sum(axis=(0, 2, 3))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._make(out, parents, back, "conv2d")


def conv2d_transpose(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding="same") -> Tensor:
    """Adjoint of :func:`conv2d` w.r.t. its input.

    ``w`` has the layout of the forward convolution it transposes,
    ``[Cin, Cout, kh, kw]`` where ``Cin`` matches ``x``. With ``same``
    padding the spatial dims are multiplied by ``stride``.
    """
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n, cin, hi, wi = x.shape
    wcin, cout, kh, kw = w.shape
    if cin != wcin:
        raise ValueError(f"conv2d_transpose: input has {cin} channels, weight expects {wcin}")
    if padding == "same":
        h, wd = hi * stride, wi * stride
    else:
        p = 0 if padding == "valid" else int(padding)
        h, wd = (hi - 1) * stride + kh - 2 * p, (wi - 1) * stride + kw - 2 * p
    (pt, pb), (pl, pr) = _pads(h, wd, kh, kw, stride, padding)
    hp, wp = h + pt + pb, wd + pl + pr
    if (hp - kh) // stride + 1 != hi or (wp - kw) // stride + 1 != wi:
        raise ValueError("conv2d_transpose: inconsistent output geometry")
    # the forward conv being transposed maps `cout` channels to `cin`
    dxp = _conv_input_grad(x.data, w.data, (n, cout, hp, wp), stride)
    out = np.ascontiguousarray(dxp[:, :, pt : pt + h, pl : pl + wd])
    if b is not None:
        out += b.data.reshape(1, -1, 1, 1)

    def back(g):
        gp = np.pad(g, ((0, 0), (0, 0), (pt, pb), (pl, pr))) if pt + pb + pl + pr else g
        dx = _conv_forward(gp, w.data, stride, hi, wi) if x.requires_grad else None
        dw = _conv_weight_grad(gp, x.data, kh, kw, stride) if w.requires_grad else None
        if b is None:
            return dx, dw
        return dx, dw, g.sum(axis=(0, 2, 3))

    parents = (x, w) if b is None else (x, w, b)
    return Tensor._make(out, parents, back, "conv2d_transpose")


# ---------------------------------------------------------------- gradients


def graph_order(root: Tensor) -> list[Tensor]:
    """Nodes reachable from ``root`` with every node after its inputs."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d leaf`` into ``.grad`` of every leaf requiring it."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(graph_order(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            grads[key] = grads[key] + pg if key in grads else pg


def gradients(loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Return ``{name: d loss / d param}``; unreachable parameters get zeros."""
    for p in params.values():
        p.grad = None
    backward(loss)
    return {name: p.grad if p.grad is not None else np.zeros_like(p.data) for name, p in params.items()}


@dataclass
class GradientReport:
    """Per-coordinate comparison of analytic and central-difference gradients.

    A coordinate that misses ``rtol`` while its stencil changes the branch
    pattern of some piecewise op is retried at steps 10x and 100x smaller.
    If every stencil still straddles a branch switch it is *kinked*. A miss
    without a switch is *unconverged* when it is within three times the
    change of the difference quotient under halving the step (round-off or
    curvature dominates). Everything else is conclusive and must meet ``rtol``.
    """

    analytic: np.ndarray
    numeric: np.ndarray
    half_step: np.ndarray
    steps: np.ndarray
    kinked: np.ndarray
    rtol: float

    @property
    def relative(self) -> np.ndarray:
        a, n = self.analytic, self.numeric
        return np.abs(a - n) / np.maximum(1e-8, np.abs(a) + np.abs(n))

    @property
    def unconverged(self) -> np.ndarray:
        miss = np.abs(self.analytic - self.numeric)
        drift = np.nan_to_num(np.abs(self.numeric - self.half_step), nan=0.0)
        return ~self.kinked & (self.relative >= self.rtol) & (miss <= 3 * drift)

    @property
    def conclusive(self) -> np.ndarray:
        return ~self.kinked & ~self.unconverged

    def max_relative(self) -> float:
        rel = self.relative[self.conclusive]
        return float(rel.max()) if rel.size else 0.0

    def inconclusive_fraction(self) -> float:
        return float(1 - self.conclusive.mean()) if self.analytic.size else 1.0

    def passed(self, max_inconclusive: float = 0.1) -> bool:
        return self.max_relative() < self.rtol and self.inconclusive_fraction() <= max_inconclusive

    def summary(self) -> str:
        retried = int((self.steps < self.steps.max(initial=0)).sum())
        return (f"max rel {self.max_relative():.2e} over {int(self.conclusive.sum())}/{self.analytic.size} coords "
                f"({int(self.kinked.sum())} kinked, {int(self.unconverged.sum())} unconverged, "
                f"{retried} retried at a smaller step)")


def finite_diff_report(
    f: Callable[[], Tensor],
    inputs: Iterable[Tensor],
    step: float = 1e-5,
    coords: int | None = None,
    rng: np.random.Generator | None = None,
    rtol: float = 1e-4,
) -> GradientReport:
    """Analytic vs central-difference gradients with kink and convergence diagnostics."""
    inputs = list(inputs)
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    with record_switches() as base:
        out = f()
    backward(out)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]
    rng = rng or np.random.default_rng(0)
    an, nu, half, used, kink = [], [], [], [], []

    def central(flat, i, h):
        orig = flat[i]
        flat[i] = orig + h
        with record_switches() as up:
            fp = float(f().data)
        flat[i] = orig - h
        with record_switches() as down:
            fm = float(f().data)
        flat[i] = orig
        return (fp - fm) / (2 * h), up != base or down != base

    def misses(a, n):
        return abs(a - n) >= rtol * max(1e-8, abs(a) + abs(n))

    with no_grad():
        for t, ga in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            idx = np.arange(flat.size)
            if coords is not None and coords < flat.size:
                idx = rng.choice(flat.size, coords, replace=False)
            for i in idx:
                a = float(ga.reshape(-1)[i])
                h = step
                n, switched = central(flat, i, h)
                while switched and misses(a, n) and h > step / 50:
                    h /= 10
                    n, switched = central(flat, i, h)
                h2 = np.nan
                kinked = switched and misses(a, n)
                if not kinked and misses(a, n):
                    h2, switched = central(flat, i, h / 2)
                    kinked = switched
                an.append(a)
                nu.append(n)
                half.append(h2)
                used.append(h)
                kink.append(kinked)
    return GradientReport(np.array(an), np.array(nu), np.array(half), np.array(used), np.array(kink, dtype=bool), rtol)


def finite_diff_check(
    f: Callable[[], Tensor],
    inputs: Iterable[Tensor],
    step: float = 1e-5,
    coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f`` is evaluated with no arguments and must read the (mutated in place)
    ``inputs``. Error per coordinate is
    ``|a - n| / max(1e-8, |a| + |n|)``. With ``coords`` set, that many
    coordinates per input are sampled instead of all of them.
    """
    return float(finite_diff_report(f, inputs, step, coords, rng, rtol=0.0).relative.max(initial=0.0))
