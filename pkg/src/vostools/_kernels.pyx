# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pixel kernels. Same contracts as ``_kernels_py``."""

from math import isqrt

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline double _clipd(double v, double lo, double hi) nogil:
    if v < lo:
        return lo
    if v > hi:
        return hi
    return v


cdef inline Py_ssize_t _clipi(Py_ssize_t v, Py_ssize_t hi) nogil:
    if v < 0:
        return 0
    if v > hi:
        return hi
    return v


def warp_bilinear(img, inv, Py_ssize_t out_h, Py_ssize_t out_w, bint clamp=False):
    cdef const double[:, :, ::1] src = np.ascontiguousarray(img, dtype=np.float64)
    cdef const double[:, ::1] m = np.ascontiguousarray(inv, dtype=np.float64)
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1], nc = src.shape[2]
    out = np.empty((out_h, out_w, nc), dtype=np.float64)
    cdef double[:, :, ::1] dst = out
    cdef Py_ssize_t x, y, c, x0, y0, x1, y1
    cdef double sx, sy, fx, fy, gx, gy, w00, w01, w10, w11, acc, xf, yf, yd
    cdef bint v00, v01, v10, v11
    cdef double a00 = m[0, 0], a01 = m[0, 1], a02 = m[0, 2]
    cdef double a10 = m[1, 0], a11 = m[1, 1], a12 = m[1, 2]
    with nogil:
        for y in range(out_h):
            yd = <double>y
            for x in range(out_w):
                xf = <double>x
                sx = a00 * xf + a01 * yd + a02
                sy = a10 * xf + a11 * yd + a12
                sx = _clipd(sx, -2.0, w + 1.0)
                sy = _clipd(sy, -2.0, h + 1.0)
                xf = floor(sx)
                yf = floor(sy)
                fx = sx - xf
                fy = sy - yf
                x0 = <Py_ssize_t>xf
                y0 = <Py_ssize_t>yf
                x1 = x0 + 1
                y1 = y0 + 1
                gx = 1.0 - fx
                gy = 1.0 - fy
                w00 = gx * gy
                w01 = fx * gy
                w10 = gx * fy
                w11 = fx * fy
                if clamp:
                    v00 = v01 = v10 = v11 = True
                else:
                    v00 = 0 <= x0 < w and 0 <= y0 < h
                    v01 = 0 <= x1 < w and 0 <= y0 < h
                    v10 = 0 <= x0 < w and 0 <= y1 < h
                    v11 = 0 <= x1 < w and 0 <= y1 < h
                x0 = _clipi(x0, w - 1)
                x1 = _clipi(x1, w - 1)
                y0 = _clipi(y0, h - 1)
                y1 = _clipi(y1, h - 1)
                for c in range(nc):
                    acc = w00 * (src[y0, x0, c] if v00 else 0.0)
                    acc = acc + w01 * (src[y0, x1, c] if v01 else 0.0)
                    acc = acc + w10 * (src[y1, x0, c] if v10 else 0.0)
                    acc = acc + w11 * (src[y1, x1, c] if v11 else 0.0)
                    dst[y, x, c] = acc
    return out


def warp_nearest(labels, inv, Py_ssize_t out_h, Py_ssize_t out_w, int fill=0, bint clamp=False):
    cdef const cnp.int32_t[:, ::1] src = np.ascontiguousarray(labels, dtype=np.int32)
    cdef const double[:, ::1] m = np.ascontiguousarray(inv, dtype=np.float64)
    cdef Py_ssize_t h = src.shape[0], w = src.shape[1]
    out = np.empty((out_h, out_w), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] dst = out
    cdef Py_ssize_t x, y, ix, iy
    cdef double sx, sy, xf, yd
    cdef double a00 = m[0, 0], a01 = m[0, 1], a02 = m[0, 2]
    cdef double a10 = m[1, 0], a11 = m[1, 1], a12 = m[1, 2]
    with nogil:
        for y in range(out_h):
            yd = <double>y
            for x in range(out_w):
                xf = <double>x
                sx = a00 * xf + a01 * yd + a02
                sy = a10 * xf + a11 * yd + a12
                sx = _clipd(sx, -2.0, w + 1.0)
                sy = _clipd(sy, -2.0, h + 1.0)
                ix = <Py_ssize_t>floor(sx + 0.5)
                iy = <Py_ssize_t>floor(sy + 0.5)
                if clamp:
                    dst[y, x] = src[_clipi(iy, h - 1), _clipi(ix, w - 1)]
                elif 0 <= ix < w and 0 <= iy < h:
                    dst[y, x] = src[iy, ix]
                else:
                    dst[y, x] = fill
    return out


def boundary_map(mask):
    cdef const cnp.uint8_t[:, ::1] m = np.ascontiguousarray(mask, dtype=bool).view(np.uint8)
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    out = np.zeros((h, w), dtype=bool)
    cdef cnp.uint8_t[:, ::1] dst = out.view(np.uint8)
    cdef Py_ssize_t x, y
    with nogil:
        for y in range(h):
            for x in range(w):
                if not m[y, x]:
                    continue
                if (y == 0 or x == 0 or y == h - 1 or x == w - 1
                        or not m[y - 1, x] or not m[y + 1, x]
                        or not m[y, x - 1] or not m[y, x + 1]):
                    dst[y, x] = 1
    return out


def dilate_disk(mask, int radius):
    cdef const cnp.uint8_t[:, ::1] m = np.ascontiguousarray(mask, dtype=bool).view(np.uint8)
    cdef Py_ssize_t h = m.shape[0], w = m.shape[1]
    out = np.zeros((h, w), dtype=bool)
    cdef cnp.uint8_t[:, ::1] dst = out.view(np.uint8)
    cdef Py_ssize_t x, y, dx, dy, xx, yy, r = radius
    cdef Py_ssize_t[::1] span
    if r <= 0:
        return np.array(m, dtype=bool)
    # half-width of the disk row at each vertical offset
    span = np.array([isqrt(r * r - d * d) for d in range(-r, r + 1)], dtype=np.intp)
    with nogil:
        for y in range(h):
            for x in range(w):
                if not m[y, x]:
                    continue
                for dy in range(-r, r + 1):
                    yy = y + dy
                    if yy < 0 or yy >= h:
                        continue
                    for dx in range(-span[dy + r], span[dy + r] + 1):
                        xx = x + dx
                        if 0 <= xx < w:
                            dst[yy, xx] = 1
    return out
