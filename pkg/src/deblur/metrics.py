"""PSNR and SSIM on 8-bit images, plus per-image report aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

PEAK = 255.0


def _pair(s, r) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(s)
    r = np.asarray(r)
    if s.shape != r.shape:
        raise ValueError(f"image dimensions differ: {s.shape} vs {r.shape}")
    if s.ndim == 2:
        s, r = s[..., None], r[..., None]
    if s.ndim != 3:
        raise ValueError(f"expected HxW or HxWxC images, got shape {s.shape}")
    return s.astype(np.float64), r.astype(np.float64)


def psnr(s, r, peak: float = PEAK) -> float:
    """Peak signal-to-noise ratio in dB; MSE is averaged over all channels.

    Identical images give ``inf``.
    """
    s, r = _pair(s, r)
    mse = np.mean((s - r) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(peak * peak / mse))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(s, r, window: int = 11, sigma: float = 1.5, c1: float = (0.01 * PEAK) ** 2,
         c2: float = (0.03 * PEAK) ** 2) -> float:
    """Mean structural similarity over all valid (unpadded) windows and channels.

    Window statistics are Gaussian-weighted; the covariance term uses
    ``E_w[xy] - mu_x mu_y``.
    """
    s, r = _pair(s, r)
    h, w, _ = s.shape
    if window > min(h, w):
        raise ValueError(f"window {window} larger than image {h}x{w}")
    kern = gaussian_window(window, sigma)
    vals = []
    for ch in range(s.shape[2]):
        x = sliding_window_view(s[..., ch], (window, window))
        y = sliding_window_view(r[..., ch], (window, window))
        mx = np.tensordot(x, kern, axes=2)
        my = np.tensordot(y, kern, axes=2)
        vx = np.tensordot(x * x, kern, axes=2) - mx * mx
        vy = np.tensordot(y * y, kern, axes=2) - my * my
        cxy = np.tensordot(x * y, kern, axes=2) - mx * my
        num = (2 * mx * my + c1) * (2 * cxy + c2)
        den = (mx * mx + my * my + c1) * (vx + vy + c2)
        vals.append(num / den)
    return float(np.mean(vals))


@dataclass
class MetricReport:
    names: list[str] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)

    def add(self, name: str, sharp, restored) -> None:
        self.names.append(name)
        self.psnr.append(psnr(sharp, restored))
        self.ssim.append(ssim(sharp, restored))

    @property
    def mean_psnr(self) -> float:
        return float(np.mean(self.psnr)) if self.psnr else math.nan

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim)) if self.ssim else math.nan

    def lines(self) -> list[tuple[str, float]]:
        out = []
        for n, p, q in zip(self.names, self.psnr, self.ssim):
            out.append((f"psnr/{n}", p))
            out.append((f"ssim/{n}", q))
        out.append(("mean_psnr", self.mean_psnr))
        out.append(("mean_ssim", self.mean_ssim))
        return out

    def to_tsv(self) -> str:
        return "".join(f"{k}\t{_fmt(v)}\n" for k, v in self.lines())

    def to_text(self) -> str:
        rows = [f"{n:<32} PSNR {p:8.3f} dB  SSIM {q:.4f}" for n, p, q in zip(self.names, self.psnr, self.ssim)]
        rows.append(f"{'mean':<32} PSNR {self.mean_psnr:8.3f} dB  SSIM {self.mean_ssim:.4f}")
        return "\n".join(rows) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_tsv())


def _fmt(v: float) -> str:
    return "inf" if v == math.inf else repr(float(v))


def read_report(path) -> dict[str, float]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line and not line.startswith("#"):
            k, v = line.split("\t")
            out[k] = float(v)
    return out
