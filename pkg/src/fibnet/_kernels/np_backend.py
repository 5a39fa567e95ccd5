"""Pure-NumPy window kernels: im2col/col2im and pooling forward/backward.

This is the fallback for the compiled Cython backend. Both backends make the
same ordering guarantees so their outputs are bit-identical:

* window offsets are visited in row-major (di, dj) order,
* max-pool ties resolve to the first offset in that order,
* scatter accumulation happens in C order of the output grid,
* padding cells are excluded (they never win a max and never enter an
  average's numerator or denominator).
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided

_FLOAT_DTYPES = (np.float32, np.float64)


def _check_dtype(x: np.ndarray) -> None:
    if x.dtype.type not in _FLOAT_DTYPES:
        raise TypeError(f"kernels support float32/float64, got {x.dtype}")


def _offset_span(out_len: int, in_len: int, stride: int, pad_before: int,
                 d: int) -> tuple[int, int, int]:
    """Output-index range [o0, o1) for which o*stride - pad_before + d lands
    inside [0, in_len), plus the first touched input index."""
    o0 = max(0, -(-(pad_before - d) // stride))
    o1 = min(out_len, (in_len - 1 + pad_before - d) // stride + 1)
    return o0, o1, o0 * stride - pad_before + d


def _valid_counts(out_len: int, in_len: int, stride: int, pad_before: int,
                  k: int) -> np.ndarray:
    """Number of in-bounds window elements per output index, one axis."""
    base = np.arange(out_len) * stride - pad_before
    return np.minimum(base + k, in_len) - np.maximum(base, 0)


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pt: int, pl: int,
           oh: int, ow: int) -> np.ndarray:
    """Extract (kh, kw) patches into rows of shape (n*oh*ow, kh*kw*c).

    Each row is the patch flattened in (kh, kw, c) row-major order;
    out-of-bounds cells are zero.
    """
    _check_dtype(x)
    n, h, w, c = x.shape
    pb = max((oh - 1) * stride + kh - h - pt, 0)
    pr = max((ow - 1) * stride + kw - w - pl, 0)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    sn, sh, sw, sc = xp.strides
    windows = as_strided(
        xp,
        shape=(n, oh, ow, kh, kw, c),
        strides=(sn, sh * stride, sw * stride, sh, sw, sc),
    )
    return np.ascontiguousarray(windows).reshape(n * oh * ow, kh * kw * c)


def col2im(cols: np.ndarray, in_shape: tuple[int, int, int, int], kh: int,
           kw: int, stride: int, pt: int, pl: int, oh: int, ow: int) -> np.ndarray:
    """Scatter-add patch rows back onto the input grid (im2col transpose)."""
    _check_dtype(cols)
    n, h, w, c = in_shape
    pb = max((oh - 1) * stride + kh - h - pt, 0)
    pr = max((ow - 1) * stride + kw - w - pl, 0)
    gxp = np.zeros((n, h + pt + pb, w + pl + pr, c), dtype=cols.dtype)
    c6 = cols.reshape(n, oh, ow, kh, kw, c)
    for ki in range(kh):
        he = ki + (oh - 1) * stride + 1
        for kj in range(kw):
            we = kj + (ow - 1) * stride + 1
            gxp[:, ki:he:stride, kj:we:stride, :] += c6[:, :, :, ki, kj, :]
    return gxp[:, pt:pt + h, pl:pl + w, :].copy()


def maxpool_forward(x: np.ndarray, k: int, stride: int, pt: int, pl: int,
                    oh: int, ow: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-window maximum over in-bounds cells.

    Returns (out, arg) where arg holds the winning cell's flat h*w index,
    first offset in row-major window order winning ties.
    """
    _check_dtype(x)
    n, h, w, c = x.shape
    out = np.full((n, oh, ow, c), -np.inf, dtype=x.dtype)
    arg = np.full((n, oh, ow, c), -1, dtype=np.int64)
    for di in range(k):
        o0h, o1h, i0h = _offset_span(oh, h, stride, pt, di)
        if o0h >= o1h:
            continue
        he = i0h + (o1h - o0h - 1) * stride + 1
        for dj in range(k):
            o0w, o1w, i0w = _offset_span(ow, w, stride, pl, dj)
            if o0w >= o1w:
                continue
            we = i0w + (o1w - o0w - 1) * stride + 1
            view = x[:, i0h:he:stride, i0w:we:stride, :]
            cur = out[:, o0h:o1h, o0w:o1w, :]
            better = view > cur
            ih = i0h + np.arange(o1h - o0h) * stride
            iw = i0w + np.arange(o1w - o0w) * stride
            flat = (ih[:, None] * w + iw[None, :]).astype(np.int64)
            out[:, o0h:o1h, o0w:o1w, :] = np.where(better, view, cur)
            argcur = arg[:, o0h:o1h, o0w:o1w, :]
            arg[:, o0h:o1h, o0w:o1w, :] = np.where(
                better, flat[None, :, :, None], argcur)
    return out, arg


def maxpool_backward(gy: np.ndarray, arg: np.ndarray, h: int, w: int) -> np.ndarray:
    """Route each window's gradient to its recorded argmax cell."""
    _check_dtype(gy)
    n, oh, ow, c = gy.shape
    gx = np.zeros((n, h * w, c), dtype=gy.dtype)
    bi = np.arange(n)[:, None, None, None]
    ci = np.arange(c)[None, None, None, :]
    np.add.at(gx, (bi, arg, ci), gy)
    return gx.reshape(n, h, w, c)


def avgpool_forward(x: np.ndarray, k: int, stride: int, pt: int, pl: int,
                    oh: int, ow: int) -> np.ndarray:
    """Per-window mean over in-bounds cells only (padding excluded from the
    denominator, so constant inputs stay constant)."""
    _check_dtype(x)
    n, h, w, c = x.shape
    acc = np.zeros((n, oh, ow, c), dtype=x.dtype)
    for di in range(k):
        o0h, o1h, i0h = _offset_span(oh, h, stride, pt, di)
        if o0h >= o1h:
            continue
        he = i0h + (o1h - o0h - 1) * stride + 1
        for dj in range(k):
            o0w, o1w, i0w = _offset_span(ow, w, stride, pl, dj)
            if o0w >= o1w:
                continue
            we = i0w + (o1w - o0w - 1) * stride + 1
            acc[:, o0h:o1h, o0w:o1w, :] += x[:, i0h:he:stride, i0w:we:stride, :]
    counts = (_valid_counts(oh, h, stride, pt, k)[:, None]
              * _valid_counts(ow, w, stride, pl, k)[None, :])
    return acc / counts[None, :, :, None].astype(x.dtype)


def avgpool_backward(gy: np.ndarray, h: int, w: int, k: int, stride: int,
                     pt: int, pl: int) -> np.ndarray:
    """Distribute each window's gradient as 1/(valid count) to its cells."""
    _check_dtype(gy)
    n, oh, ow, c = gy.shape
    counts = (_valid_counts(oh, h, stride, pt, k)[:, None]
              * _valid_counts(ow, w, stride, pl, k)[None, :])
    scaled = gy / counts[None, :, :, None].astype(gy.dtype)
    gx = np.zeros((n, h, w, c), dtype=gy.dtype)
    for di in range(k):
        o0h, o1h, i0h = _offset_span(oh, h, stride, pt, di)
        if o0h >= o1h:
            continue
        he = i0h + (o1h - o0h - 1) * stride + 1
        for dj in range(k):
            o0w, o1w, i0w = _offset_span(ow, w, stride, pl, dj)
            if o0w >= o1w:
                continue
            we = i0w + (o1w - o0w - 1) * stride + 1
            gx[:, i0h:he:stride, i0w:we:stride, :] += scaled[:, o0h:o1h, o0w:o1w, :]
    return gx
