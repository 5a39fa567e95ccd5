"""Rank-4 tensor conventions, channel concatenation and same-padding geometry.

A "tensor" throughout this package is a plain numpy array of rank 4 laid out
row-major as (n, h, w, c): batch, rows, cols, channels. float32 is the
production dtype; float64 exists for finite-difference gradient checking.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from .exceptions import ShapeMismatchError

AXIS_NAMES = ("batch", "height", "width", "channels")

# When true, graph execution asserts outputs stay finite. Enabled by the
# test suite and by FIBNET_DEBUG_FINITE=1.
DEBUG_FINITE = os.environ.get("FIBNET_DEBUG_FINITE", "") == "1"


def check_rank4(x: np.ndarray, name: str = "tensor") -> np.ndarray:
    if x.ndim != 4:
        raise ShapeMismatchError(f"{name} must be rank 4 (n,h,w,c), got shape {x.shape}")
    if any(d < 1 for d in x.shape):
        raise ShapeMismatchError(f"{name} has a zero-sized axis: shape {x.shape}")
    return x


def assert_finite(x: np.ndarray, where: str) -> None:
    """Debug-mode guard: finite inputs must yield finite outputs."""
    if DEBUG_FINITE and not np.all(np.isfinite(x)):
        raise FloatingPointError(f"non-finite values produced at {where}")


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Join two tensors along the channel axis; a's channels come first.

    Raises ShapeMismatchError naming the first axis on which (n, h, w)
    disagree. Values are copied bit-exactly.
    """
    check_rank4(a, "concat lhs")
    check_rank4(b, "concat rhs")
    for axis in range(3):
        if a.shape[axis] != b.shape[axis]:
            raise ShapeMismatchError(
                f"concat_channels: {AXIS_NAMES[axis]} axis differs "
                f"({a.shape[axis]} vs {b.shape[axis]})"
            )
    return np.concatenate([a, b], axis=3)


def slice_channels(x: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Channel range [start, stop) of x, as a copy."""
    check_rank4(x)
    return x[:, :, :, start:stop].copy()


@dataclass(frozen=True)
class PaddingGeometry:
    """Zero-padding plan for one square window pass over an (h, w) grid.

    "same" mode keeps output side = ceil(in / stride); total padding per
    axis is max((out-1)*stride + kernel - in, 0), with the smaller half
    before (top/left) and the larger half after (bottom/right).
    """
    kernel: int
    stride: int
    pad_top: int
    pad_left: int
    pad_bottom: int
    pad_right: int
    out_h: int
    out_w: int


def _same_pad_1d(in_side: int, kernel: int, stride: int) -> tuple[int, int, int]:
    if in_side < 1 or kernel < 1 or stride < 1:
        raise ValueError(
            f"same padding needs in_side, kernel, stride >= 1, "
            f"got ({in_side}, {kernel}, {stride})"
        )
    out = math.ceil(in_side / stride)
    total = max((out - 1) * stride + kernel - in_side, 0)
    before = total // 2
    return out, before, total - before


def same_pad_geometry(in_side: int, kernel: int, stride: int) -> PaddingGeometry:
    """Same-padding geometry for a square (in_side x in_side) input."""
    out, before, after = _same_pad_1d(in_side, kernel, stride)
    return PaddingGeometry(kernel, stride, before, before, after, after, out, out)


def pad_geometry(in_h: int, in_w: int, kernel: int, stride: int,
                 padding: str) -> PaddingGeometry:
    """Geometry for a possibly rectangular input under "same" or "valid"."""
    if padding == "same":
        out_h, top, bottom = _same_pad_1d(in_h, kernel, stride)
        out_w, left, right = _same_pad_1d(in_w, kernel, stride)
        return PaddingGeometry(kernel, stride, top, left, bottom, right, out_h, out_w)
    if padding == "valid":
        if in_h < kernel or in_w < kernel:
            raise ValueError(f"valid padding needs input >= kernel, got ({in_h},{in_w}) < {kernel}")
        return PaddingGeometry(kernel, stride, 0, 0, 0, 0,
                               (in_h - kernel) // stride + 1,
                               (in_w - kernel) // stride + 1)
    raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
