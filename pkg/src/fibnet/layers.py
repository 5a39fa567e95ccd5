"""Layer primitives with explicit forward/backward passes.

Every layer follows the same protocol: ``forward(*xs, mode)`` returns
``(y, ctx)`` and ``backward(ctx, gy)`` returns one input gradient per
forward input, depositing parameter gradients into the ParamStore entries.
Layers are pure with respect to activations; all per-call state lives in
the returned ctx.
"""
from __future__ import annotations

import math

import numpy as np

from . import _kernels as K
from .exceptions import ShapeMismatchError
from .params import ParamStore
from .tensor import check_rank4, pad_geometry


def _uniform_fan_in(rng: np.random.Generator, shape, fan_in: int, dtype):
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv2D:
    """3x3 (or kxk) cross-correlation with per-output-channel bias.

    Trainable count is (k*k*in_c + 1) * out_c. Backward recomputes the
    im2col patches from the cached input rather than caching them.
    """

    def __init__(self, store: ParamStore, name: str, in_c: int, out_c: int,
                 kernel: int = 3, stride: int = 1, padding: str = "same",
                 dtype=np.float32, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.in_c = in_c
        self.out_c = out_c
        self.kernel = kernel
        self.stride = stride
        self.padding = padding
        self.w = store.add(f"{name}/w", _uniform_fan_in(
            rng, (kernel, kernel, in_c, out_c), kernel * kernel * in_c, dtype))
        self.b = store.add(f"{name}/b", np.zeros(out_c, dtype=dtype))

    def forward(self, x, mode="infer"):
        check_rank4(x, self.name)
        if x.shape[3] != self.in_c:
            raise ShapeMismatchError(
                f"{self.name}: channels axis is {x.shape[3]}, expected {self.in_c}")
        n, h, w, _ = x.shape
        g = pad_geometry(h, w, self.kernel, self.stride, self.padding)
        cols = K.im2col(x, g.kernel, g.kernel, g.stride, g.pad_top, g.pad_left,
                        g.out_h, g.out_w)
        wmat = self.w.value.reshape(-1, self.out_c)
        y = (cols @ wmat + self.b.value).reshape(n, g.out_h, g.out_w, self.out_c)
        return y, (x, g)

    def backward(self, ctx, gy):
        x, g = ctx
        if gy.shape != (x.shape[0], g.out_h, g.out_w, self.out_c):
            raise ShapeMismatchError(
                f"{self.name}: grad shape {gy.shape} does not match output "
                f"({x.shape[0]},{g.out_h},{g.out_w},{self.out_c})")
        cols = K.im2col(x, g.kernel, g.kernel, g.stride, g.pad_top, g.pad_left,
                        g.out_h, g.out_w)
        gy_mat = gy.reshape(-1, self.out_c)
        self.w.add_grad((cols.T @ gy_mat).reshape(self.w.value.shape))
        self.b.add_grad(gy_mat.sum(axis=0))
        gcols = gy_mat @ self.w.value.reshape(-1, self.out_c).T
        gx = K.col2im(gcols, x.shape, g.kernel, g.kernel, g.stride,
                      g.pad_top, g.pad_left, g.out_h, g.out_w)
        return (gx,)


class DepthwiseSeparableConv:
    """3x3 per-channel filtering then 1x1 pointwise projection, each biased.

    Depthwise stage holds 10*in_c trainables ((3*3 + 1) per channel); the
    pointwise stage holds (in_c + 1)*out_c. Stride 1, same padding.
    """

    KERNEL = 3

    def __init__(self, store: ParamStore, name: str, in_c: int, out_c: int,
                 dtype=np.float32, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.in_c = in_c
        self.out_c = out_c
        k = self.KERNEL
        self.dw = store.add(f"{name}/dw", _uniform_fan_in(
            rng, (k, k, in_c, 1), k * k, dtype))
        self.db = store.add(f"{name}/db", np.zeros(in_c, dtype=dtype))
        self.pw = store.add(f"{name}/pw", _uniform_fan_in(
            rng, (1, 1, in_c, out_c), in_c, dtype))
        self.pb = store.add(f"{name}/pb", np.zeros(out_c, dtype=dtype))

    def _cols3(self, x, g):
        cols = K.im2col(x, g.kernel, g.kernel, g.stride, g.pad_top, g.pad_left,
                        g.out_h, g.out_w)
        return cols.reshape(-1, g.kernel * g.kernel, self.in_c)

    def forward(self, x, mode="infer"):
        check_rank4(x, self.name)
        if x.shape[3] != self.in_c:
            raise ShapeMismatchError(
                f"{self.name}: channels axis is {x.shape[3]}, expected {self.in_c}")
        n, h, w, _ = x.shape
        g = pad_geometry(h, w, self.KERNEL, 1, "same")
        cols3 = self._cols3(x, g)
        dwk = self.dw.value.reshape(-1, self.in_c)
        mid = np.einsum("pkc,kc->pc", cols3, dwk) + self.db.value
        pwm = self.pw.value.reshape(self.in_c, self.out_c)
        y = (mid @ pwm + self.pb.value).reshape(n, h, w, self.out_c)
        return y, (x, g, mid)

    def backward(self, ctx, gy):
        x, g, mid = ctx
        n, h, w, _ = x.shape
        if gy.shape != (n, h, w, self.out_c):
            raise ShapeMismatchError(
                f"{self.name}: grad shape {gy.shape} does not match output "
                f"({n},{h},{w},{self.out_c})")
        gy_mat = gy.reshape(-1, self.out_c)
        pwm = self.pw.value.reshape(self.in_c, self.out_c)
        self.pw.add_grad((mid.T @ gy_mat).reshape(self.pw.value.shape))
        self.pb.add_grad(gy_mat.sum(axis=0))
        gmid = gy_mat @ pwm.T
        self.db.add_grad(gmid.sum(axis=0))
        cols3 = self._cols3(x, g)
        self.dw.add_grad(
            np.einsum("pkc,pc->kc", cols3, gmid).reshape(self.dw.value.shape))
        dwk = self.dw.value.reshape(-1, self.in_c)
        gcols = (dwk[None, :, :] * gmid[:, None, :]).reshape(
            -1, g.kernel * g.kernel * self.in_c)
        gx = K.col2im(gcols, x.shape, g.kernel, g.kernel, g.stride,
                      g.pad_top, g.pad_left, g.out_h, g.out_w)
        return (gx,)


class BatchNorm:
    """Per-channel normalization over (n, h, w).

    Train mode normalizes by batch statistics (biased variance) and updates
    the running stats as ``r = momentum*r + (1-momentum)*batch``; infer mode
    normalizes by the running stats, treated as constants in backward.
    """

    def __init__(self, store: ParamStore, name: str, c: int,
                 momentum: float = 0.99, eps: float = 1e-5, dtype=np.float32):
        self.name = name
        self.c = c
        self.momentum = momentum
        self.eps = eps
        self.gamma = store.add(f"{name}/gamma", np.ones(c, dtype=dtype))
        self.beta = store.add(f"{name}/beta", np.zeros(c, dtype=dtype))
        self.run_mean = store.add(f"{name}/running_mean",
                                  np.zeros(c, dtype=dtype), trainable=False)
        self.run_var = store.add(f"{name}/running_var",
                                 np.ones(c, dtype=dtype), trainable=False)

    def forward(self, x, mode="infer"):
        check_rank4(x, self.name)
        if x.shape[3] != self.c:
            raise ShapeMismatchError(
                f"{self.name}: channels axis is {x.shape[3]}, expected {self.c}")
        if mode == "train":
            mu = x.mean(axis=(0, 1, 2))
            var = x.var(axis=(0, 1, 2))
            m = self.momentum
            self.run_mean.value = (m * self.run_mean.value
                                   + (1.0 - m) * mu).astype(x.dtype)
            self.run_var.value = (m * self.run_var.value
                                  + (1.0 - m) * var).astype(x.dtype)
        else:
            mu = self.run_mean.value
            var = self.run_var.value
        inv = 1.0 / np.sqrt(var + np.asarray(self.eps, dtype=x.dtype))
        xhat = (x - mu) * inv
        y = self.gamma.value * xhat + self.beta.value
        return y, (xhat, inv, mode)

    def backward(self, ctx, gy):
        xhat, inv, mode = ctx
        self.gamma.add_grad((gy * xhat).sum(axis=(0, 1, 2)))
        self.beta.add_grad(gy.sum(axis=(0, 1, 2)))
        gscaled = gy * self.gamma.value
        if mode == "train":
            n_, h_, w_, _ = gy.shape
            count = n_ * h_ * w_
            s1 = gscaled.sum(axis=(0, 1, 2))
            s2 = (gscaled * xhat).sum(axis=(0, 1, 2))
            gx = inv / count * (count * gscaled - s1 - xhat * s2)
        else:
            gx = gscaled * inv
        return (gx.astype(gy.dtype, copy=False),)


class ReLU:
    def forward(self, x, mode="infer"):
        y = np.maximum(x, 0)
        # subgradient at exactly 0 is 0, so the mask is strict
        return y, x > 0

    def backward(self, ctx, gy):
        return (gy * ctx,)


class MaxPool2D:
    """Window maximum; padding cells never win. Ties go to the first cell
    in row-major window order, making backward routing deterministic."""

    def __init__(self, pool: int, stride: int, padding: str = "same"):
        if pool not in (2, 3):
            raise ValueError(f"pool side must be 2 or 3, got {pool}")
        self.pool = pool
        self.stride = stride
        self.padding = padding

    def forward(self, x, mode="infer"):
        check_rank4(x, "maxpool")
        n, h, w, c = x.shape
        g = pad_geometry(h, w, self.pool, self.stride, self.padding)
        y, arg = K.maxpool_forward(x, g.kernel, g.stride, g.pad_top, g.pad_left,
                                   g.out_h, g.out_w)
        return y, (arg, h, w)

    def backward(self, ctx, gy):
        arg, h, w = ctx
        return (K.maxpool_backward(gy, arg, h, w),)


class AvgPool2D:
    """Window mean over in-bounds cells only, so constants pass through."""

    def __init__(self, pool: int, stride: int, padding: str = "same"):
        if pool not in (2, 3):
            raise ValueError(f"pool side must be 2 or 3, got {pool}")
        self.pool = pool
        self.stride = stride
        self.padding = padding

    def forward(self, x, mode="infer"):
        check_rank4(x, "avgpool")
        n, h, w, c = x.shape
        g = pad_geometry(h, w, self.pool, self.stride, self.padding)
        y = K.avgpool_forward(x, g.kernel, g.stride, g.pad_top, g.pad_left,
                              g.out_h, g.out_w)
        return y, (h, w, g)

    def backward(self, ctx, gy):
        h, w, g = ctx
        return (K.avgpool_backward(gy, h, w, g.kernel, g.stride,
                                   g.pad_top, g.pad_left),)


class Avg2MaxPool:
    """avgpool(x, 3, 2, same) - 2 * maxpool(x, 3, 2, same).

    Halves the spatial sides and flips feature statistics toward an
    edge-emphasized negative, which is the point of the concatenation
    branches. Backward composes the two component backward passes.
    """

    def __init__(self):
        self._avg = AvgPool2D(3, 2, "same")
        self._max = MaxPool2D(3, 2, "same")

    def forward(self, x, mode="infer"):
        a, actx = self._avg.forward(x, mode)
        m, mctx = self._max.forward(x, mode)
        return a - 2.0 * m, (actx, mctx)

    def backward(self, ctx, gy):
        actx, mctx = ctx
        (ga,) = self._avg.backward(actx, gy)
        (gm,) = self._max.backward(mctx, -2.0 * gy)
        return (ga + gm,)


class GlobalAvgPool:
    """Spatial mean per channel: (n, h, w, c) -> (n, 1, 1, c)."""

    def forward(self, x, mode="infer"):
        check_rank4(x, "gap")
        return x.mean(axis=(1, 2), keepdims=True), x.shape

    def backward(self, ctx, gy):
        n, h, w, c = ctx
        scale = np.asarray(1.0 / (h * w), dtype=gy.dtype)
        return (np.broadcast_to(gy * scale, ctx).copy(),)


class Concat:
    """Channel concatenation of two tensors agreeing on (n, h, w)."""

    def forward(self, a, b, mode="infer"):
        from .tensor import concat_channels
        return concat_channels(a, b), a.shape[3]

    def backward(self, ctx, gy):
        ca = ctx
        return gy[:, :, :, :ca], gy[:, :, :, ca:]


class Dense:
    """Affine map x @ W + b on flattened inputs."""

    def __init__(self, store: ParamStore, name: str, in_dim: int, out_dim: int,
                 dtype=np.float32, rng: np.random.Generator | None = None):
        rng = rng or np.random.default_rng(0)
        self.name = name
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = store.add(f"{name}/w",
                           _uniform_fan_in(rng, (in_dim, out_dim), in_dim, dtype))
        self.b = store.add(f"{name}/b", np.zeros(out_dim, dtype=dtype))

    def forward(self, x, mode="infer"):
        flat = x.reshape(x.shape[0], -1)
        if flat.shape[1] != self.in_dim:
            raise ShapeMismatchError(
                f"{self.name}: flattened length {flat.shape[1]}, expected {self.in_dim}")
        return flat @ self.w.value + self.b.value, (flat, x.shape)

    def backward(self, ctx, gy):
        flat, xshape = ctx
        self.w.add_grad(flat.T @ gy)
        self.b.add_grad(gy.sum(axis=0))
        return ((gy @ self.w.value.T).reshape(xshape),)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max-subtraction for 32-bit stability."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean categorical cross-entropy over the batch.

    Returns (loss, grad_logits, probs) with grad_logits already divided by
    the batch size, i.e. the gradient of the mean loss.
    """
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.min() < 0 or labels.max() >= k:
        raise ValueError(
            f"label out of range: got values in [{labels.min()}, {labels.max()}] "
            f"for {k} classes")
    probs = softmax(logits)
    rows = np.arange(n)
    loss = float(-np.log(probs[rows, labels]).mean())
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype, copy=False), probs
