"""Numpy implementations of the pixel kernels.

Used when the compiled ``_kernels`` extension is unavailable or disabled.
The arithmetic mirrors ``_kernels.pyx`` operation for operation so both
backends produce bit-identical output.
"""

import numpy as np
from scipy import ndimage


def _sample_coords(inv, out_h, out_w):
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    sx = inv[0, 0] * xs + inv[0, 1] * ys + inv[0, 2]
    sy = inv[1, 0] * xs + inv[1, 1] * ys + inv[1, 2]
    return sx, sy


def warp_bilinear(img, inv, out_h, out_w, clamp=False):
    """Inverse-map an ``(H, W, C)`` float64 image through a 2x3 affine.

    Outside samples read zero, or the nearest border pixel when ``clamp``.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    inv = np.asarray(inv, dtype=np.float64)
    h, w, c = img.shape
    sx, sy = _sample_coords(inv, out_h, out_w)
    sx = np.clip(sx, -2.0, w + 1.0)
    sy = np.clip(sy, -2.0, h + 1.0)
    x0f = np.floor(sx)
    y0f = np.floor(sy)
    fx = sx - x0f
    fy = sy - y0f
    x0 = x0f.astype(np.int64)
    y0 = y0f.astype(np.int64)
    x1 = x0 + 1
    y1 = y0 + 1

    def tap(yy, xx):
        if clamp:
            return img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        valid = (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)
        vals = img[np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
        return np.where(valid[..., None], vals, 0.0)

    gx = 1.0 - fx
    gy = 1.0 - fy
    w00 = (gx * gy)[..., None]
    w01 = (fx * gy)[..., None]
    w10 = (gx * fy)[..., None]
    w11 = (fx * fy)[..., None]
    out = w00 * tap(y0, x0) + w01 * tap(y0, x1) + w10 * tap(y1, x0) + w11 * tap(y1, x1)
    return out


def warp_nearest(labels, inv, out_h, out_w, fill=0, clamp=False):
    labels = np.ascontiguousarray(labels, dtype=np.int32)
    inv = np.asarray(inv, dtype=np.float64)
    h, w = labels.shape
    sx, sy = _sample_coords(inv, out_h, out_w)
    sx = np.clip(sx, -2.0, w + 1.0)
    sy = np.clip(sy, -2.0, h + 1.0)
    ix = np.floor(sx + 0.5).astype(np.int64)
    iy = np.floor(sy + 0.5).astype(np.int64)
    if clamp:
        return labels[np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)]
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out = labels[np.clip(iy, 0, h - 1), np.clip(ix, 0, w - 1)]
    return np.where(valid, out, np.int32(fill)).astype(np.int32)


def boundary_map(mask):
    """Foreground pixels with a background 4-neighbour; the border counts as background."""
    m = np.ascontiguousarray(mask, dtype=bool)
    padded = np.pad(m, 1, constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return m & ~interior


def disk(radius):
    r = int(radius)
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return xx * xx + yy * yy <= r * r


def dilate_disk(mask, radius):
    m = np.ascontiguousarray(mask, dtype=bool)
    if radius <= 0 or not m.any():
        return m.copy()
    return ndimage.binary_dilation(m, structure=disk(radius))
