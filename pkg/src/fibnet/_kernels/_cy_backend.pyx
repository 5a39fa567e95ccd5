# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled window kernels: im2col/col2im and pooling forward/backward.

Semantics mirror np_backend exactly -- row-major window offset order,
first-offset tie-breaks, C-order scatter accumulation -- so both backends
produce bit-identical arrays for the same inputs.
"""

ctypedef fused real:
    float
    double


def im2col(real[:, :, :, ::1] x, real[:, ::1] cols,
           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
           Py_ssize_t pt, Py_ssize_t pl, Py_ssize_t oh, Py_ssize_t ow):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t b, oi, oj, ki, kj, ch, ih, iw, row, col
    for b in range(n):
        for oi in range(oh):
            for oj in range(ow):
                row = (b * oh + oi) * ow + oj
                col = 0
                for ki in range(kh):
                    ih = oi * stride - pt + ki
                    for kj in range(kw):
                        iw = oj * stride - pl + kj
                        if 0 <= ih < h and 0 <= iw < w:
                            for ch in range(c):
                                cols[row, col + ch] = x[b, ih, iw, ch]
                        else:
                            for ch in range(c):
                                cols[row, col + ch] = 0
                        col += c


def col2im(real[:, ::1] cols, real[:, :, :, ::1] gx,
           Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t stride,
           Py_ssize_t pt, Py_ssize_t pl, Py_ssize_t oh, Py_ssize_t ow):
    # offsets outermost: per-cell accumulation order matches np_backend
    cdef Py_ssize_t n = gx.shape[0], h = gx.shape[1], w = gx.shape[2], c = gx.shape[3]
    cdef Py_ssize_t b, oi, oj, ki, kj, ch, ih, iw, row, base
    for ki in range(kh):
        for kj in range(kw):
            base = (ki * kw + kj) * c
            for b in range(n):
                for oi in range(oh):
                    ih = oi * stride - pt + ki
                    if ih < 0 or ih >= h:
                        continue
                    for oj in range(ow):
                        iw = oj * stride - pl + kj
                        if iw < 0 or iw >= w:
                            continue
                        row = (b * oh + oi) * ow + oj
                        for ch in range(c):
                            gx[b, ih, iw, ch] += cols[row, base + ch]


def maxpool_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] out,
                    long long[:, :, :, ::1] arg,
                    Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pt, Py_ssize_t pl):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t oh = out.shape[1], ow = out.shape[2]
    cdef Py_ssize_t b, oi, oj, ch, di, dj, ih, iw
    cdef real v, best
    cdef long long bi
    cdef bint first
    for b in range(n):
        for oi in range(oh):
            for oj in range(ow):
                for ch in range(c):
                    first = True
                    best = 0
                    bi = -1
                    for di in range(k):
                        ih = oi * stride - pt + di
                        if ih < 0 or ih >= h:
                            continue
                        for dj in range(k):
                            iw = oj * stride - pl + dj
                            if iw < 0 or iw >= w:
                                continue
                            v = x[b, ih, iw, ch]
                            if first or v > best:
                                best = v
                                bi = ih * w + iw
                                first = False
                    out[b, oi, oj, ch] = best
                    arg[b, oi, oj, ch] = bi


def maxpool_backward(real[:, :, :, ::1] gy, long long[:, :, :, ::1] arg,
                     real[:, :, :, ::1] gx):
    cdef Py_ssize_t n = gy.shape[0], oh = gy.shape[1], ow = gy.shape[2], c = gy.shape[3]
    cdef Py_ssize_t w = gx.shape[2]
    cdef Py_ssize_t b, oi, oj, ch
    cdef long long fi
    for b in range(n):
        for oi in range(oh):
            for oj in range(ow):
                for ch in range(c):
                    fi = arg[b, oi, oj, ch]
                    gx[b, fi // w, fi % w, ch] += gy[b, oi, oj, ch]


def avgpool_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] out,
                    Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pt, Py_ssize_t pl):
    cdef Py_ssize_t n = x.shape[0], h = x.shape[1], w = x.shape[2], c = x.shape[3]
    cdef Py_ssize_t oh = out.shape[1], ow = out.shape[2]
    cdef Py_ssize_t b, oi, oj, ch, di, dj, ih, iw, rlo, rhi, clo, chi, cnt
    cdef real acc
    for b in range(n):
        for oi in range(oh):
            rlo = oi * stride - pt
            rhi = rlo + k
            if rlo < 0:
                rlo = 0
            if rhi > h:
                rhi = h
            for oj in range(ow):
                clo = oj * stride - pl
                chi = clo + k
                if clo < 0:
                    clo = 0
                if chi > w:
                    chi = w
                cnt = (rhi - rlo) * (chi - clo)
                for ch in range(c):
                    acc = 0
                    for di in range(k):
                        ih = oi * stride - pt + di
                        if ih < 0 or ih >= h:
                            continue
                        for dj in range(k):
                            iw = oj * stride - pl + dj
                            if iw < 0 or iw >= w:
                                continue
                            acc = acc + x[b, ih, iw, ch]
                    out[b, oi, oj, ch] = acc / (<real> cnt)


def avgpool_backward(real[:, :, :, ::1] gy, real[:, :, :, ::1] gx,
                     Py_ssize_t k, Py_ssize_t stride, Py_ssize_t pt, Py_ssize_t pl):
    # offsets outermost: per-cell accumulation order matches np_backend
    cdef Py_ssize_t n = gy.shape[0], oh = gy.shape[1], ow = gy.shape[2], c = gy.shape[3]
    cdef Py_ssize_t h = gx.shape[1], w = gx.shape[2]
    cdef Py_ssize_t b, oi, oj, ch, di, dj, ih, iw, rlo, rhi, clo, chi, cnt
    for di in range(k):
        for dj in range(k):
            for b in range(n):
                for oi in range(oh):
                    ih = oi * stride - pt + di
                    if ih < 0 or ih >= h:
                        continue
                    rlo = oi * stride - pt
                    rhi = rlo + k
                    if rlo < 0:
                        rlo = 0
                    if rhi > h:
                        rhi = h
                    for oj in range(ow):
                        iw = oj * stride - pl + dj
                        if iw < 0 or iw >= w:
                            continue
                        clo = oj * stride - pl
                        chi = clo + k
                        if clo < 0:
                            clo = 0
                        if chi > w:
                            chi = w
                        cnt = (rhi - rlo) * (chi - clo)
                        for ch in range(c):
                            gx[b, ih, iw, ch] += gy[b, oi, oj, ch] / (<real> cnt)
