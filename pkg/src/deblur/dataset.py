"""Paired blurred/sharp dataset generation and loading.

A dataset directory holds ``blurred/``, ``sharp/`` and ``manifest.tsv``. Each
manifest line is ``blurred_path<TAB>sharp_path<TAB>key=value;...`` with paths
relative to the directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import imaging

MANIFEST = "manifest.tsv"
PROCEDURAL = "procedural"


@dataclass(frozen=True)
class DatasetSpec:
    mode: str = "kernel"  # kernel | frame_average
    kernel: str = "gaussian"  # gaussian | motion | box
    sigma_min: float = 1.0
    sigma_max: float = 3.0
    motion_min: int = 5
    motion_max: int = 15
    box_size: int = 3
    frame_min: int = 7
    frame_max: int = 23
    noise_sigma: float = 0.0
    size: int = 64
    sequence_length: int = 31

    def frame_counts(self) -> list[int]:
        counts = [c for c in range(self.frame_min, self.frame_max + 1) if c % 2]
        if not counts or self.frame_min < 7 or self.frame_max > 23:
            raise ValueError("frame counts must be odd values within [7, 23]")
        return counts


@dataclass(frozen=True)
class Pair:
    blurred: Path
    sharp: Path
    info: dict[str, str]

    @property
    def name(self) -> str:
        return self.blurred.stem


def _kv(d: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in d.items())


def _parse_kv(s: str) -> dict[str, str]:
    return dict(item.split("=", 1) for item in s.split(";") if item)


def _draw_kernel(spec: DatasetSpec, rng) -> tuple[np.ndarray, dict]:
    if spec.kernel == "gaussian":
        sigma = round(float(rng.uniform(spec.sigma_min, spec.sigma_max)), 6)
        return imaging.gaussian_kernel(sigma), {"kernel": "gaussian", "sigma": f"{sigma:.6f}"}
    if spec.kernel == "motion":
        length = int(rng.integers(spec.motion_min, spec.motion_max + 1))
        angle = round(float(rng.uniform(0, 180)), 3)
        return imaging.motion_kernel(length, angle), {"kernel": "motion", "length": length, "angle": f"{angle:.3f}"}
    if spec.kernel == "box":
        return imaging.box_kernel(spec.box_size), {"kernel": "box", "size": spec.box_size}
    raise ValueError(f"unknown kernel family {spec.kernel!r}")


def _crop(img: np.ndarray, size: int, rng) -> tuple[np.ndarray, int, int]:
    h, w = img.shape[:2]
    if h < size or w < size:
        raise ValueError(f"source image {w}x{h} smaller than crop {size}")
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    return img[y : y + size, x : x + size], y, x


def _list_images(d: Path) -> list[Path]:
    return sorted(p for p in d.iterdir() if p.suffix.lower() in imaging.IMAGE_SUFFIXES)


def make_dataset(source_dir, out_dir, spec: DatasetSpec, count: int, rng: np.random.Generator) -> Path:
    """Write ``count`` pairs plus the manifest; returns the manifest path.

    ``source_dir`` is a directory of images (kernel mode), a directory of
    frame-sequence subdirectories (frame mode), or ``"procedural"`` to render
    random scenes instead.
    """
    out = Path(out_dir)
    if count < 1:
        raise ValueError("count must be positive")
    procedural = str(source_dir) == PROCEDURAL
    if not procedural:
        src = Path(source_dir)
        if spec.mode == "kernel":
            sources = _list_images(src) if src.is_dir() else []
        else:
            sources = sorted(p for p in src.iterdir() if p.is_dir() and _list_images(p)) if src.is_dir() else []
        if not sources:
            raise ValueError(f"no source {'images' if spec.mode == 'kernel' else 'frame sequences'} in {src}")
    lines = []
    for i in range(count):
        name = f"{i:04d}.ppm"
        if spec.mode == "kernel":
            if procedural:
                sharp, info = imaging.render_scene(rng, spec.size, spec.size), {"source": PROCEDURAL}
            else:
                path = sources[int(rng.integers(0, len(sources)))]
                sharp, y, x = _crop(imaging.load_image(path), spec.size, rng)
                info = {"source": path.name, "crop": f"{y},{x}"}
            kernel, kinfo = _draw_kernel(spec, rng)
            bspec = imaging.BlurSpec("kernel", kernel, noise_sigma=spec.noise_sigma)
            blurred = imaging.synthesize_blur(sharp, bspec, rng)
            info = {"mode": "kernel", **kinfo, **info}
        elif spec.mode == "frame_average":
            counts = spec.frame_counts()
            fc = counts[int(rng.integers(0, len(counts)))]
            if procedural:
                frames = imaging.render_sequence(rng, spec.size, spec.size, max(spec.sequence_length, fc))
                src_name = PROCEDURAL
            else:
                seq = sources[int(rng.integers(0, len(sources)))]
                frames = [imaging.load_image(p) for p in _list_images(seq)]
                src_name = seq.name
            if len(frames) < fc:
                raise ValueError(f"sequence {src_name} has {len(frames)} frames, need {fc}")
            start = int(rng.integers(0, len(frames) - fc + 1))
            blurred, sharp = imaging.synthesize_blur_average(frames, fc, start, spec.noise_sigma, rng)
            info = {"mode": "frame_average", "frame_count": fc, "start": start, "source": src_name}
        else:
            raise ValueError(f"unknown dataset mode {spec.mode!r}")
        imaging.save_image(blurred, out / "blurred" / name)
        imaging.save_image(sharp, out / "sharp" / name)
        lines.append(f"blurred/{name}\tsharp/{name}\t{_kv(info)}\n")
    manifest = out / MANIFEST
    manifest.write_text("".join(lines))
    return manifest


def read_manifest(data_dir) -> list[Pair]:
    d = Path(data_dir)
    path = d / MANIFEST
    if not path.exists():
        raise FileNotFoundError(f"no {MANIFEST} in {d}")
    pairs = []
    for n, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) not in (2, 3):
            raise ValueError(f"{path}:{n}: expected 2 or 3 tab-separated fields")
        pair = Pair(d / parts[0], d / parts[1], _parse_kv(parts[2]) if len(parts) == 3 else {})
        for p in (pair.blurred, pair.sharp):
            if not p.exists():
                raise FileNotFoundError(f"{path}:{n}: missing pair file {p}")
        pairs.append(pair)
    if not pairs:
        raise ValueError(f"{path} lists no pairs")
    return pairs


def load_pairs(data_dir) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Return names and stacked uint8 ``(N,H,W,C)`` blurred and sharp arrays."""
    pairs = read_manifest(data_dir)
    blurred = np.stack([imaging.load_image(p.blurred) for p in pairs])
    sharp = np.stack([imaging.load_image(p.sharp) for p in pairs])
    return [p.name for p in pairs], blurred, sharp
