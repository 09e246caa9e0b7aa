# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled exact L1 (city-block) distance transform for a binary region.

Two raster scans over a zero-padded grid. The pad ring makes pixels outside
the image count as background, so a region touching the border still gets a
finite distance there.
"""

import numpy as np


def l1_distance_inside(const unsigned char[:, ::1] inside):
    """Per-pixel min L1 distance from region pixels to the nearest
    non-region pixel (image borders count as background); 0 outside."""
    cdef Py_ssize_t h = inside.shape[0]
    cdef Py_ssize_t w = inside.shape[1]
    out = np.zeros((h + 2, w + 2), dtype=np.intc)
    cdef int[:, ::1] d = out
    cdef Py_ssize_t i, j
    cdef int big = <int> (h + w + 2)
    cdef int v

    for i in range(h):
        for j in range(w):
            if inside[i, j]:
                d[i + 1, j + 1] = big

    # forward scan: top/left neighbors
    for i in range(1, h + 1):
        for j in range(1, w + 1):
            v = d[i, j]
            if v > d[i - 1, j] + 1:
                v = d[i - 1, j] + 1
            if v > d[i, j - 1] + 1:
                v = d[i, j - 1] + 1
            d[i, j] = v

    # backward scan: bottom/right neighbors
    for i in range(h, 0, -1):
        for j in range(w, 0, -1):
            v = d[i, j]
            if v > d[i + 1, j] + 1:
                v = d[i + 1, j] + 1
            if v > d[i, j + 1] + 1:
                v = d[i, j + 1] + 1
            d[i, j] = v

    return np.ascontiguousarray(out[1:h + 1, 1:w + 1])
