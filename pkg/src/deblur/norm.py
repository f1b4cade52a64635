"""Spectral normalization (power iteration) and batch normalization."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, replace

import numpy as np

from .tensor import Tensor, div, mul, reshape, sum_

SIGMA_FLOOR = 1e-12


class DegenerateWeightError(ValueError):
    pass


class DegenerateStatisticsError(ValueError):
    pass


@dataclass
class SpectralState:
    """Persistent singular-vector estimates for one weight.

    ``u`` has one entry per output feature (rows of the weight reshaped to
    2-D); ``v`` one per remaining element. ``v`` may be ``None`` before the
    first power-iteration step.
    """

    u: np.ndarray
    v: np.ndarray | None = None
    n_power_iterations: int = 1

    def __post_init__(self):
        if self.n_power_iterations < 0:
            raise ValueError("n_power_iterations must be >= 0")

    @classmethod
    def init(cls, rows: int, rng: np.random.Generator, n_power_iterations: int = 1, dtype=np.float32):
        u = rng.standard_normal(rows)
        return cls((u / np.linalg.norm(u)).astype(dtype), None, n_power_iterations)


class _Frozen:
    active = False


@contextlib.contextmanager
def frozen_power_iteration():
    """Reuse stored ``u, v`` instead of stepping the iteration.

    Used by gradient checks: with the singular vectors held fixed the
    normalized weight is a pure function of the raw weight.
    """
    old = _Frozen.active
    _Frozen.active = True
    try:
        yield
    finally:
        _Frozen.active = old


def _unit(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x)
    if n < SIGMA_FLOOR:
        raise DegenerateWeightError("power iteration collapsed on a zero weight matrix")
    return x / n


def power_iteration(w2d: np.ndarray, u: np.ndarray, steps: int) -> tuple[np.ndarray, np.ndarray]:
    if steps < 1:
        raise ValueError("power iteration needs at least one step")
    for _ in range(steps):
        v = _unit(w2d.T @ u)
        u = _unit(w2d @ v)
    return u, v


def spectral_normalize(w: Tensor, state: SpectralState, update: bool = True) -> tuple[Tensor, SpectralState]:
    """Divide ``w`` by its power-iteration estimate of the largest singular value.

    The weight is viewed as ``[out_features, rest]``. With ``update`` the
    iteration advances ``n_power_iterations`` steps from ``state.u``; without
    it the stored ``u, v`` are used as they are. The gradient treats ``u`` and
    ``v`` as constants: ``sigma = u^T W v`` is differentiated through ``W`` only.
    """
    w2d = w.data.reshape(w.shape[0], -1)
    if update and not _Frozen.active and state.n_power_iterations > 0:
        u, v = power_iteration(w2d, state.u, state.n_power_iterations)
    elif state.v is None:
        u, v = state.u, _unit(w2d.T @ state.u)
    else:
        u, v = state.u, state.v
    u = u.astype(w.dtype)
    v = v.astype(w.dtype)
    sigma = sum_(mul(mul(reshape(w, w2d.shape), u[:, None]), v[None, :]))
    if abs(float(sigma.data)) < SIGMA_FLOOR:
        raise DegenerateWeightError(f"spectral norm estimate {float(sigma.data):.3g} is degenerate")
    return div(w, sigma), replace(state, u=u, v=v)


def largest_singular_value(w: np.ndarray) -> float:
    """Independent estimate via the eigen-decomposition of ``W^T W``."""
    w2d = np.asarray(w, dtype=np.float64).reshape(np.shape(w)[0], -1)
    gram = w2d.T @ w2d if w2d.shape[0] >= w2d.shape[1] else w2d @ w2d.T
    return float(np.sqrt(max(np.linalg.eigvalsh(gram)[-1], 0.0)))


def batch_norm(
    x: Tensor,
    scale: Tensor,
    shift: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel normalization of an ``[N,C,H,W]`` tensor.

    In training mode the batch statistics are used and the running arrays are
    updated in place, ``running = momentum * running + (1 - momentum) * batch``
    (running variance uses the unbiased batch estimate).
    """
    n, c, h, w = x.shape
    m = n * h * w
    if training:
        if m < 2:
            raise DegenerateStatisticsError(f"batch norm needs >= 2 values per channel in training, got {m}")
        mu = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        running_mean *= momentum
        running_mean += (1 - momentum) * mu
        running_var *= momentum
        running_var += (1 - momentum) * var * (m / (m - 1))
    else:
        mu, var = running_mean, running_var
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype).reshape(1, c, 1, 1)
    xhat = (x.data - mu.astype(x.dtype).reshape(1, c, 1, 1)) * inv
    sc = scale.data.reshape(1, c, 1, 1)
    out = xhat * sc + shift.data.reshape(1, c, 1, 1)

    def back(g):
        dscale = (g * xhat).sum(axis=(0, 2, 3))
        dshift = g.sum(axis=(0, 2, 3))
        dxhat = g * sc
        if training:
            dx = inv / m * (m * dxhat - dxhat.sum(axis=(0, 2, 3), keepdims=True)
                            - xhat * (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True))
        else:
            dx = dxhat * inv
        return dx, dscale, dshift

    return Tensor._make(out, (x, scale, shift), back, "batch_norm")
