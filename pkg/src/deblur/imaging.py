"""Image I/O, normalization, Canny edges, and blurred/sharp pair synthesis.

Images are ``uint8`` arrays shaped ``(H, W, C)`` with ``C`` in {1, 3}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import ndimage

from .tensor import Tensor, default_dtype

IMAGE_SUFFIXES = (".ppm", ".pgm", ".png")


class ImageFormatError(ValueError):
    pass


# ---------------------------------------------------------------- I/O


def _read_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    while True:
        while pos < len(buf) and buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            while pos < len(buf) and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        break
    start = pos
    while pos < len(buf) and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ImageFormatError("truncated header")
    return buf[start:pos], pos


def _decode_pnm(buf: bytes) -> np.ndarray:
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"not a binary PGM/PPM file (magic {magic!r})")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise ImageFormatError(f"bad header field {tok!r}") from None
    w, h, maxval = fields
    if maxval != 255:
        raise ImageFormatError(f"only 8-bit samples are supported (maxval {maxval})")
    if w < 1 or h < 1:
        raise ImageFormatError("empty image")
    pos += 1  # single whitespace byte before the raster
    c = 3 if magic == b"P6" else 1
    raster = buf[pos : pos + w * h * c]
    if len(raster) != w * h * c:
        raise ImageFormatError(f"raster truncated: expected {w * h * c} bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w, c).copy()


def load_image(path) -> np.ndarray:
    path = Path(path)
    data = path.read_bytes()
    if data[:2] in (b"P5", b"P6"):
        return _decode_pnm(data)
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover
        raise ImageFormatError(f"{path}: not PPM/PGM and Pillow is unavailable") from None
    try:
        with Image.open(path) as im:
            im = im.convert("L") if im.mode in ("L", "1", "I", "I;16") else im.convert("RGB")
            arr = np.asarray(im, dtype=np.uint8)
    except OSError as e:
        raise ImageFormatError(f"{path}: {e}") from None
    return arr[..., None] if arr.ndim == 2 else arr


def encode_pnm(img: np.ndarray) -> bytes:
    img = _as_image(img)
    h, w, c = img.shape
    magic = b"P6" if c == 3 else b"P5"
    return magic + f"\n{w} {h}\n255\n".encode() + np.ascontiguousarray(img).tobytes()


def save_image(img: np.ndarray, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix.lower() == ".png":
        from PIL import Image

        img = _as_image(img)
        Image.fromarray(img[..., 0] if img.shape[2] == 1 else img).save(path)
        return
    path.write_bytes(encode_pnm(img))


def _as_image(img) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ImageFormatError(f"expected uint8 samples, got {img.dtype}")
    if img.ndim == 2:
        img = img[..., None]
    if img.ndim != 3 or img.shape[2] not in (1, 3):
        raise ImageFormatError(f"unsupported image shape {img.shape}; need 1 or 3 channels")
    return img


# ---------------------------------------------------------------- normalization


def normalize(img: np.ndarray) -> Tensor:
    """uint8 ``(H,W,C)`` -> ``[1,C,H,W]`` tensor in [-1, 1]."""
    img = _as_image(img)
    x = img.astype(np.float64).transpose(2, 0, 1)[None] / 127.5 - 1.0
    return Tensor(x.astype(default_dtype()))


def denormalize(t) -> np.ndarray:
    """``[1,C,H,W]`` or ``[C,H,W]`` values in [-1, 1] -> uint8 ``(H,W,C)``.

    Values are clamped, scaled to [0, 255] and rounded half away from zero.
    """
    x = np.asarray(t.data if isinstance(t, Tensor) else t, dtype=np.float64)
    if x.ndim == 4:
        if x.shape[0] != 1:
            raise ValueError("denormalize takes a single image")
        x = x[0]
    v = (np.clip(x, -1.0, 1.0) + 1.0) * 127.5
    return np.floor(v + 0.5).astype(np.uint8).transpose(1, 2, 0)


def to_gray(img: np.ndarray) -> np.ndarray:
    img = _as_image(img)
    if img.shape[2] == 1:
        return img[..., 0]
    g = img.astype(np.float64) @ np.array([0.299, 0.587, 0.114])
    return np.floor(g + 0.5).clip(0, 255).astype(np.uint8)


# ---------------------------------------------------------------- Canny


def _gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2 * sigma * sigma))
    k = np.outer(g, g)
    return k / k.sum()


SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)


def sobel(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    g = np.asarray(gray, dtype=np.float64)
    gx = ndimage.correlate(g, SOBEL_X, mode="nearest")
    gy = ndimage.correlate(g, SOBEL_X.T, mode="nearest")
    return gx, gy


def non_maximum_suppression(mag: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Keep pixels that peak along the quantized gradient direction.

    Ties go to the pixel further along the positive direction, so a plateau
    two pixels wide yields a single line. The one-pixel border is dropped.
    """
    angle = (np.degrees(np.arctan2(gy, gx)) + 180.0) % 180.0
    sector = np.zeros(mag.shape, dtype=np.int8)  # 0: horizontal gradient
    sector[(angle >= 22.5) & (angle < 67.5)] = 1
    sector[(angle >= 67.5) & (angle < 112.5)] = 2
    sector[(angle >= 112.5) & (angle < 157.5)] = 3
    offsets = {0: (0, 1), 1: (1, 1), 2: (1, 0), 3: (1, -1)}
    p = np.pad(mag, 1)
    h, w = mag.shape
    out = np.zeros_like(mag)
    centre = p[1:-1, 1:-1]
    for s, (dy, dx) in offsets.items():
        ahead = p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
        behind = p[1 - dy : 1 - dy + h, 1 - dx : 1 - dx + w]
        keep = (sector == s) & (centre >= behind) & (centre > ahead)
        out[keep] = centre[keep]
    out[0, :] = out[-1, :] = 0
    out[:, 0] = out[:, -1] = 0
    return out


def canny(img: np.ndarray, low: float = 50.0, high: float = 150.0, sigma: float = 1.4) -> np.ndarray:
    """Binary edge map ``(H, W)`` with values in {0, 255}."""
    if not 0 <= low <= high:
        raise ValueError(f"need 0 <= low <= high, got low={low}, high={high}")
    gray = to_gray(img).astype(np.float64)
    smooth = ndimage.correlate(gray, _gaussian_kernel(5, sigma), mode="nearest")
    gx, gy = sobel(smooth)
    thin = non_maximum_suppression(np.hypot(gx, gy), gx, gy)
    strong = thin >= high
    candidate = thin >= low
    labels, count = ndimage.label(candidate, structure=np.ones((3, 3), dtype=int))
    keep = np.zeros(count + 1, dtype=bool)
    keep[np.unique(labels[strong])] = True
    keep[0] = False
    return np.where(keep[labels], 255, 0).astype(np.uint8)


def edge_input(img: np.ndarray) -> Tensor:
    """Normalized blurred image with its Canny map appended as a fourth channel."""
    edges = canny(img)[..., None]
    return Tensor(np.concatenate([normalize(img).data, normalize(edges).data], axis=1))


# ---------------------------------------------------------------- blur synthesis


def gaussian_kernel(sigma: float, size: int | None = None) -> np.ndarray:
    size = size or 2 * math.ceil(3 * sigma) + 1
    return _gaussian_kernel(size, sigma)


def box_kernel(size: int) -> np.ndarray:
    return np.full((size, size), 1.0 / (size * size))


def motion_kernel(length: int, angle_deg: float) -> np.ndarray:
    """Straight-line motion kernel of ``length`` samples at ``angle_deg``."""
    size = length if length % 2 else length + 1
    k = np.zeros((size, size))
    c = (size - 1) / 2.0
    t = np.linspace(-(length - 1) / 2.0, (length - 1) / 2.0, 4 * length)
    a = math.radians(angle_deg)
    ys = np.floor(c - t * math.sin(a) + 0.5).astype(int)
    xs = np.floor(c + t * math.cos(a) + 0.5).astype(int)
    k[ys, xs] = 1.0
    return k / k.sum()


@dataclass
class BlurSpec:
    mode: str = "kernel"  # kernel | frame_average
    kernel: np.ndarray | None = None
    frame_count: int = 7
    noise_sigma: float = 0.0

    def validate(self) -> None:
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if self.mode == "kernel":
            k = np.asarray(self.kernel, dtype=np.float64) if self.kernel is not None else None
            if k is None or k.ndim != 2:
                raise ValueError("kernel mode needs a 2-D kernel")
            if (k < 0).any() or abs(k.sum() - 1.0) > 1e-9:
                raise ValueError(f"blur kernel must be non-negative and sum to 1 (sum={k.sum()!r})")
        elif self.mode == "frame_average":
            if self.frame_count % 2 == 0 or not 7 <= self.frame_count <= 23:
                raise ValueError(f"frame_count must be odd and within [7, 23], got {self.frame_count}")
        else:
            raise ValueError(f"unknown blur mode {self.mode!r}")


def blur_float(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Per-channel convolution with ``kernel`` over a reflect-padded image (float64)."""
    img = _as_image(img).astype(np.float64)
    k = np.asarray(kernel, dtype=np.float64)[::-1, ::-1]
    kh, kw = k.shape
    # kernel centre sits at index (kh // 2, kw // 2) before the flip
    pad = ((kh - 1 - kh // 2, kh // 2), (kw - 1 - kw // 2, kw // 2), (0, 0))
    p = np.pad(img, pad, mode="reflect")
    win = sliding_window_view(p, (kh, kw), axis=(0, 1))  # H,W,C,kh,kw
    return np.tensordot(win, k, axes=([3, 4], [0, 1]))


def quantize(x: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(x, 0, 255) + 0.5).astype(np.uint8)


def synthesize_blur(sharp, spec: BlurSpec, rng: np.random.Generator):
    """Blur by kernel (single image) or by frame averaging (sequence).

    Kernel mode returns the blurred image. Frame mode takes a sequence of
    frames and returns ``(blurred, sharp_central_frame)``.
    """
    spec.validate()
    if spec.mode == "kernel":
        b = blur_float(sharp, spec.kernel)
        if spec.noise_sigma > 0:
            b = b + rng.normal(0.0, spec.noise_sigma, b.shape)
        return quantize(b)
    frames = list(sharp)
    if len(frames) < spec.frame_count:
        raise ValueError(f"need at least {spec.frame_count} frames, got {len(frames)}")
    start = int(rng.integers(0, len(frames) - spec.frame_count + 1))
    return synthesize_blur_average(frames, spec.frame_count, start, spec.noise_sigma, rng)


def synthesize_blur_average(frames, frame_count: int, start: int = 0, noise_sigma: float = 0.0, rng=None):
    """Pixelwise mean of ``frame_count`` consecutive frames and the central frame."""
    window = [_as_image(f).astype(np.float64) for f in frames[start : start + frame_count]]
    if len(window) < frame_count:
        raise ValueError(f"need {frame_count} frames from index {start}, got {len(window)}")
    b = np.mean(window, axis=0)
    if noise_sigma > 0:
        b = b + rng.normal(0.0, noise_sigma, b.shape)
    return quantize(b), _as_image(frames[start + frame_count // 2]).copy()


# ---------------------------------------------------------------- procedural sources


def render_scene(rng: np.random.Generator, h: int, w: int) -> np.ndarray:
    """Random piecewise-smooth RGB scene: gradient background, shapes, stripes."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    c0, c1 = rng.uniform(0, 255, 3), rng.uniform(0, 255, 3)
    t = (xx * rng.uniform(-1, 1) + yy * rng.uniform(-1, 1)) / max(h, w)
    img = c0 + (c1 - c0) * (t[..., None] - t.min()) / (np.ptp(t) + 1e-9)
    for _ in range(int(rng.integers(4, 9))):
        color = rng.uniform(0, 255, 3)
        kind = int(rng.integers(0, 4))
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        if kind == 0:
            hh, hw = rng.uniform(2, h / 3), rng.uniform(2, w / 3)
            mask = (np.abs(yy - cy) < hh) & (np.abs(xx - cx) < hw)
        elif kind == 1:
            ry, rx = rng.uniform(2, h / 4), rng.uniform(2, w / 4)
            mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 < 1
        elif kind == 2:
            a = rng.uniform(0, np.pi)
            d = np.abs((xx - cx) * np.sin(a) - (yy - cy) * np.cos(a))
            mask = d < rng.uniform(0.5, 2.0)
        else:
            period = rng.uniform(3, 10)
            a = rng.uniform(0, np.pi)
            phase = ((xx * np.cos(a) + yy * np.sin(a)) / period) % 1.0
            box = (np.abs(yy - cy) < h / 4) & (np.abs(xx - cx) < w / 4)
            mask = box & (phase < 0.5)
        img[mask] = color
    return quantize(img)


def render_sequence(rng: np.random.Generator, h: int, w: int, n_frames: int) -> list[np.ndarray]:
    """Frames of a scene panning by a constant integer-rounded velocity."""
    vy, vx = rng.uniform(-1, 1, 2)
    margin = int(math.ceil(n_frames * max(abs(vy), abs(vx)))) + 1
    canvas = render_scene(rng, h + 2 * margin, w + 2 * margin)
    frames = []
    for t in range(n_frames):
        oy = margin + int(np.floor(vy * (t - n_frames // 2) + 0.5))
        ox = margin + int(np.floor(vx * (t - n_frames // 2) + 0.5))
        frames.append(canvas[oy : oy + h, ox : ox + w].copy())
    return frames
