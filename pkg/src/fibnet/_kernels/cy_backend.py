"""Allocate-and-return wrappers around the compiled Cython kernels.

Presents the exact same signatures as np_backend so the dispatcher can swap
the two freely.
"""
from __future__ import annotations

import numpy as np

from . import _cy_backend as _cy

_FLOAT_DTYPES = (np.float32, np.float64)


def _as_c(x: np.ndarray) -> np.ndarray:
    if x.dtype.type not in _FLOAT_DTYPES:
        raise TypeError(f"kernels support float32/float64, got {x.dtype}")
    return np.ascontiguousarray(x)


def im2col(x, kh, kw, stride, pt, pl, oh, ow):
    x = _as_c(x)
    n, h, w, c = x.shape
    cols = np.empty((n * oh * ow, kh * kw * c), dtype=x.dtype)
    _cy.im2col(x, cols, kh, kw, stride, pt, pl, oh, ow)
    return cols


def col2im(cols, in_shape, kh, kw, stride, pt, pl, oh, ow):
    cols = _as_c(cols)
    gx = np.zeros(in_shape, dtype=cols.dtype)
    _cy.col2im(cols, gx, kh, kw, stride, pt, pl, oh, ow)
    return gx


def maxpool_forward(x, k, stride, pt, pl, oh, ow):
    x = _as_c(x)
    n, h, w, c = x.shape
    out = np.empty((n, oh, ow, c), dtype=x.dtype)
    arg = np.empty((n, oh, ow, c), dtype=np.int64)
    _cy.maxpool_forward(x, out, arg, k, stride, pt, pl)
    return out, arg


def maxpool_backward(gy, arg, h, w):
    gy = _as_c(gy)
    n, oh, ow, c = gy.shape
    gx = np.zeros((n, h, w, c), dtype=gy.dtype)
    _cy.maxpool_backward(gy, np.ascontiguousarray(arg), gx)
    return gx


def avgpool_forward(x, k, stride, pt, pl, oh, ow):
    x = _as_c(x)
    n, h, w, c = x.shape
    out = np.empty((n, oh, ow, c), dtype=x.dtype)
    _cy.avgpool_forward(x, out, k, stride, pt, pl)
    return out


def avgpool_backward(gy, h, w, k, stride, pt, pl):
    gy = _as_c(gy)
    n, oh, ow, c = gy.shape
    gx = np.zeros((n, h, w, c), dtype=gy.dtype)
    _cy.avgpool_backward(gy, gx, k, stride, pt, pl)
    return gx
