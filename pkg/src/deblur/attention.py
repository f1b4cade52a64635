"""Self-attention (non-local) and squeeze-excitation channel attention."""

from __future__ import annotations

import numpy as np

from .nn import Conv2d, Module
from .tensor import Parameter, Tensor, add, global_average, matmul, mul, relu, reshape, sigmoid, softmax, transpose


class SelfAttention(Module):
    """Non-local block with learnable residual weight ``gamma`` (starts at 0).

    ``f`` and ``g`` project to ``C // key_div`` channels, ``h`` to
    ``C // value_div`` and ``v`` restores ``C``.
    """

    def __init__(self, channels: int, rng: np.random.Generator, key_div: int = 8, value_div: int = 2,
                 spectral: bool = False):
        if channels // key_div < 1 or channels // value_div < 1:
            raise ValueError(f"self-attention needs at least {max(key_div, value_div)} channels, got {channels}")
        ck, cv = channels // key_div, channels // value_div
        self.channels = channels
        self.f = Conv2d(channels, ck, 1, rng, spectral=spectral)
        self.g = Conv2d(channels, ck, 1, rng, spectral=spectral)
        self.h = Conv2d(channels, cv, 1, rng, spectral=spectral)
        self.v = Conv2d(cv, channels, 1, rng, spectral=spectral)
        self.gamma = Parameter(np.zeros(()))

    def forward(self, x: Tensor) -> Tensor:
        return self_attention(x, self)[0]


def self_attention(x: Tensor, p: SelfAttention) -> tuple[Tensor, Tensor]:
    """Return ``(gamma * v(A h(x)) + x, A)``.

    ``A[n, i, j]`` is the weight query position ``i`` gives key position
    ``j``; each row is a softmax over the ``H*W`` keys.
    """
    n, c, hgt, wid = x.shape
    if c != p.channels:
        raise ValueError(f"self-attention built for {p.channels} channels, got {c}")
    hw = hgt * wid
    fx = reshape(p.f(x), (n, -1, hw))  # N,Ck,HW
    gx = reshape(p.g(x), (n, -1, hw))
    hx = reshape(p.h(x), (n, -1, hw))  # N,Cv,HW
    attn = softmax(matmul(transpose(fx, (0, 2, 1)), gx), axis=-1)  # N,HW(query),HW(key)
    o = matmul(hx, transpose(attn, (0, 2, 1)))  # N,Cv,HW: o[:, :, i] = sum_j A[i, j] h[:, :, j]
    o = p.v(reshape(o, (n, -1, hgt, wid)))
    return add(mul(p.gamma, o), x), attn


class ChannelAttention(Module):
    """Squeeze-excitation gate; the two FC layers are 1x1 convolutions."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 16, spectral: bool = False):
        if reduction < 1 or channels % reduction:
            raise ValueError(f"channels ({channels}) must be divisible by reduction ({reduction})")
        self.channels = channels
        self.reduction = reduction
        self.w1 = Conv2d(channels, channels // reduction, 1, rng, spectral=spectral)
        self.w2 = Conv2d(channels // reduction, channels, 1, rng, spectral=spectral)

    def forward(self, x: Tensor) -> Tensor:
        return channel_attention(x, self)[0]


def channel_attention(x: Tensor, p: ChannelAttention) -> tuple[Tensor, Tensor]:
    """Return ``(A * x, A)`` with ``A = sigmoid(W2 relu(W1 mean_hw(x)))`` of shape N,C,1,1."""
    if x.shape[1] != p.channels:
        raise ValueError(f"channel attention built for {p.channels} channels, got {x.shape[1]}")
    z = global_average(x)
    a = sigmoid(p.w2(relu(p.w1(z))))
    return mul(a, x), a
