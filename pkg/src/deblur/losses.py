"""Classical reconstruction losses and the least-squares adversarial objective."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Module, make_rng
from .tensor import Tensor, abs_, conv2d, mean, relu, scale, square, sub

CLASSICAL_KINDS = ("l1", "l2", "perceptual")
DEFAULT_LAMBDA = {"l1": 100.0, "l2": 100.0, "perceptual": 10.0}


@dataclass(frozen=True)
class LossWeights:
    classical_kind: str = "l1"
    lambda_classical: float | None = None  # None: per-kind default
    adversarial_weight: float = 1.0

    def __post_init__(self):
        if self.classical_kind not in CLASSICAL_KINDS:
            raise ValueError(f"classical_kind must be one of {CLASSICAL_KINDS}")
        if self.lambda_classical is None:
            object.__setattr__(self, "lambda_classical", DEFAULT_LAMBDA[self.classical_kind])
        if self.lambda_classical < 0 or self.adversarial_weight < 0:
            raise ValueError("loss weights must be non-negative")


def _check(r: Tensor, s: Tensor) -> None:
    if r.shape != s.shape:
        raise ValueError(f"loss inputs differ in shape: {r.shape} vs {s.shape}")


def l1_loss(r: Tensor, s: Tensor) -> Tensor:
    """Mean absolute difference over every element (N*C*H*W)."""
    _check(r, s)
    return mean(abs_(sub(r, s)))


def l2_loss(r: Tensor, s: Tensor) -> Tensor:
    _check(r, s)
    return mean(square(sub(r, s)))


class FeatureExtractor(Module):
    """Frozen random conv stack standing in for a pretrained VGG layer.

    Three 3x3 stride-2 convolutions (16/32/64 channels) with ReLU, He-normal
    weights drawn from ``seed``. Its weights are plain tensors, so they never
    receive gradients or optimizer updates.
    """

    def __init__(self, seed: int = 0, widths=(16, 32, 64), in_channels: int = 3):
        rng = make_rng(seed)
        self.weights = []
        cin = in_channels
        for w in widths:
            std = np.sqrt(2.0 / (cin * 9))
            self.weights.append(Tensor(rng.standard_normal((w, cin, 3, 3)) * std))
            cin = w

    def forward(self, x: Tensor) -> Tensor:
        for w in self.weights:
            x = relu(conv2d(x, w if w.dtype == x.dtype else Tensor(w.data, dtype=x.dtype), None, 2, "same"))
        return x


def perceptual_loss(r: Tensor, s: Tensor, phi: FeatureExtractor) -> Tensor:
    """Mean squared difference of ``phi`` features, normalized by the feature dims."""
    _check(r, s)
    return l2_loss(phi(r), phi(s))


def classical_loss(kind: str, r: Tensor, s: Tensor, phi: FeatureExtractor | None = None) -> Tensor:
    if kind == "l1":
        return l1_loss(r, s)
    if kind == "l2":
        return l2_loss(r, s)
    if kind == "perceptual":
        return perceptual_loss(r, s, phi if phi is not None else FeatureExtractor())
    raise ValueError(f"unknown classical loss {kind!r}")


def adversarial_losses(d_real: Tensor, d_fake: Tensor) -> tuple[Tensor, Tensor]:
    """Least-squares GAN losses on raw patch scores.

    ``d_loss = 0.5 mean((d_real - 1)^2) + 0.5 mean(d_fake^2)`` and
    ``g_loss = 0.5 mean((d_fake - 1)^2)``.
    """
    _check(d_real, d_fake)
    d_loss = scale(mean(square(sub(d_real, 1.0))), 0.5) + scale(mean(square(d_fake)), 0.5)
    g_loss = scale(mean(square(sub(d_fake, 1.0))), 0.5)
    return g_loss, d_loss


def generator_loss(weights: LossWeights, d_fake: Tensor, restored: Tensor, sharp: Tensor,
                   phi: FeatureExtractor | None = None) -> Tensor:
    """``adversarial_weight * g_adv + lambda_classical * classical``."""
    g_adv = scale(mean(square(sub(d_fake, 1.0))), 0.5)
    return scale(g_adv, weights.adversarial_weight) + scale(
        classical_loss(weights.classical_kind, restored, sharp, phi), weights.lambda_classical)
