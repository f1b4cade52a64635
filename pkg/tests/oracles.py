"""Brute-force reference implementations used only by the tests."""

import math

import numpy as np


def pads_same(size, k, s):
    out = -(-size // s)
    total = max((out - 1) * s + k - size, 0)
    return total // 2, total - total // 2


def conv2d_loops(x, w, b, stride, padding):
    """Sliding-window cross-correlation with explicit loops."""
    n, cin, h, wd = x.shape
    cout, _, kh, kw = w.shape
    if padding == "same":
        (pt, pb), (pl, pr) = pads_same(h, kh, stride), pads_same(wd, kw, stride)
    elif padding == "valid":
        pt = pb = pl = pr = 0
    else:
        pt = pb = pl = pr = padding
    ho = (h + pt + pb - kh) // stride + 1
    wo = (wd + pl + pr - kw) // stride + 1
    out = np.zeros((n, cout, ho, wo))
    for a in range(n):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    acc = 0.0 if b is None else float(b[o])
                    for c in range(cin):
                        for p in range(kh):
                            for q in range(kw):
                                y, xx = i * stride + p - pt, j * stride + q - pl
                                if 0 <= y < h and 0 <= xx < wd:
                                    acc += x[a, c, y, xx] * w[o, c, p, q]
                    out[a, o, i, j] = acc
    return out


def conv2d_transpose_loops(y, w, b, stride, out_hw, padding="same"):
    """Scatter each input pixel through the kernel; ``w`` is ``[Cin, Cout, kh, kw]``."""
    n, cin, hi, wi = y.shape
    _, cout, kh, kw = w.shape
    h, wd = out_hw
    if padding == "same":
        pt, pl = pads_same(h, kh, stride)[0], pads_same(wd, kw, stride)[0]
    else:
        pt = pl = 0 if padding == "valid" else padding
    out = np.zeros((n, cout, h, wd))
    for a in range(n):
        for c in range(cin):
            for i in range(hi):
                for j in range(wi):
                    for o in range(cout):
                        for p in range(kh):
                            for q in range(kw):
                                r, s = i * stride + p - pt, j * stride + q - pl
                                if 0 <= r < h and 0 <= s < wd:
                                    out[a, o, r, s] += y[a, c, i, j] * w[c, o, p, q]
    if b is not None:
        out += np.asarray(b).reshape(1, -1, 1, 1)
    return out


def matmul_loops(a, b):
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n))
    for i in range(m):
        for j in range(n):
            for t in range(k):
                out[i, j] += a[i, t] * b[t, j]
    return out


def psnr_loops(s, r):
    s = np.asarray(s, dtype=np.int64)
    r = np.asarray(r, dtype=np.int64)
    total = 0
    count = 0
    for idx in np.ndindex(s.shape):
        d = s[idx] - r[idx]
        total += d * d
        count += 1
    if total == 0:
        return math.inf
    return 10 * math.log10(255.0**2 / (total / count))


def ssim_loops(s, r, window=11, sigma=1.5, c1=(0.01 * 255) ** 2, c2=(0.03 * 255) ** 2):
    """Window-by-window SSIM written straight from the formula."""
    s = np.asarray(s, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if s.ndim == 2:
        s, r = s[..., None], r[..., None]
    half = (window - 1) / 2
    g = [math.exp(-((i - half) ** 2) / (2 * sigma**2)) for i in range(window)]
    wts = [[g[i] * g[j] for j in range(window)] for i in range(window)]
    tot = sum(sum(row) for row in wts)
    wts = [[v / tot for v in row] for row in wts]
    h, w, ch = s.shape
    vals = []
    for c in range(ch):
        for y in range(h - window + 1):
            for x in range(w - window + 1):
                mx = my = sxx = syy = sxy = 0.0
                for i in range(window):
                    for j in range(window):
                        a = s[y + i, x + j, c]
                        b = r[y + i, x + j, c]
                        wt = wts[i][j]
                        mx += wt * a
                        my += wt * b
                        sxx += wt * a * a
                        syy += wt * b * b
                        sxy += wt * a * b
                vx, vy, cxy = sxx - mx * mx, syy - my * my, sxy - mx * my
                vals.append(((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return sum(vals) / len(vals)


def blur_loops(img, kernel):
    """Convolution (flipped kernel) over a reflect-padded image, no quantization."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        img = img[..., None]
    k = np.asarray(kernel, dtype=np.float64)
    kh, kw = k.shape
    h, w, ch = img.shape
    cy, cx = kh // 2, kw // 2

    def reflect(i, n):
        while i < 0 or i >= n:
            i = -i if i < 0 else 2 * (n - 1) - i
        return i

    out = np.zeros_like(img)
    for c in range(ch):
        for y in range(h):
            for x in range(w):
                acc = 0.0
                for p in range(kh):
                    for q in range(kw):
                        acc += k[p, q] * img[reflect(y - (p - cy), h), reflect(x - (q - cx), w), c]
                out[y, x, c] = acc
    return out
