"""Window-kernel correctness: brute-force oracles and backend equivalence."""
import numpy as np
import pytest

from fibnet._kernels import np_backend as NB
from fibnet.tensor import pad_geometry

try:
    from fibnet._kernels import cy_backend as CB
    HAVE_CY = True
except ImportError:
    CB = None
    HAVE_CY = False


def window_cells(h, w, k, stride, pt, pl, oi, oj):
    """In-bounds (ih, iw) cells of one pooling window, row-major."""
    cells = []
    for di in range(k):
        ih = oi * stride - pt + di
        if not 0 <= ih < h:
            continue
        for dj in range(k):
            iw = oj * stride - pl + dj
            if 0 <= iw < w:
                cells.append((ih, iw))
    return cells


def ref_pool(x, k, stride, padding, mode):
    """Plain-Python pooling oracle over valid cells only."""
    n, h, w, c = x.shape
    g = pad_geometry(h, w, k, stride, padding)
    out = np.zeros((n, g.out_h, g.out_w, c), dtype=np.float64)
    for b in range(n):
        for oi in range(g.out_h):
            for oj in range(g.out_w):
                cells = window_cells(h, w, k, stride, g.pad_top, g.pad_left, oi, oj)
                for ch in range(c):
                    vals = [float(x[b, ih, iw, ch]) for ih, iw in cells]
                    out[b, oi, oj, ch] = max(vals) if mode == "max" else sum(vals) / len(vals)
    return out.astype(x.dtype)


SHAPES = [(1, 4, 4, 1), (2, 7, 5, 3), (1, 3, 3, 2), (3, 8, 8, 4), (1, 5, 9, 2)]


@pytest.mark.parametrize("shape", SHAPES)
@pytest.mark.parametrize("k,stride", [(2, 2), (3, 2), (3, 1), (2, 1)])
def test_pools_match_window_oracle(shape, k, stride):
    rng = np.random.default_rng(hash((shape, k, stride)) % 2**32)
    x = rng.standard_normal(shape).astype(np.float64)
    g = pad_geometry(shape[1], shape[2], k, stride, "same")
    got_max, arg = NB.maxpool_forward(x, k, stride, g.pad_top, g.pad_left,
                                      g.out_h, g.out_w)
    got_avg = NB.avgpool_forward(x, k, stride, g.pad_top, g.pad_left,
                                 g.out_h, g.out_w)
    assert np.allclose(got_max, ref_pool(x, k, stride, "same", "max"), atol=0)
    assert np.allclose(got_avg, ref_pool(x, k, stride, "same", "avg"), rtol=1e-15)
    # argmax indices point at cells holding the max
    n, oh, ow, c = got_max.shape
    for b in range(n):
        for oi in range(oh):
            for oj in range(ow):
                for ch in range(c):
                    fi = arg[b, oi, oj, ch]
                    assert x[b, fi // shape[2], fi % shape[2], ch] == got_max[b, oi, oj, ch]


def test_maxpool_padding_never_wins():
    # all-negative input: zero padding must not leak into the maxima
    x = -np.abs(np.random.default_rng(3).standard_normal((1, 5, 5, 2))) - 0.5
    x = x.astype(np.float32)
    g = pad_geometry(5, 5, 3, 2, "same")
    out, _ = NB.maxpool_forward(x, 3, 2, g.pad_top, g.pad_left, g.out_h, g.out_w)
    assert (out < 0).all()


def test_maxpool_tie_breaks_to_first_cell():
    x = np.ones((1, 4, 4, 1), np.float32)
    g = pad_geometry(4, 4, 2, 2, "same")
    _, arg = NB.maxpool_forward(x, 2, 2, g.pad_top, g.pad_left, g.out_h, g.out_w)
    # every window is constant; first cell in row-major order must win
    assert arg[0, 0, 0, 0] == 0
    assert arg[0, 0, 1, 0] == 2
    assert arg[0, 1, 0, 0] == 8


def test_maxpool_backward_mass_and_placement():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((2, 6, 6, 3)).astype(np.float64)
    g = pad_geometry(6, 6, 3, 2, "same")
    out, arg = NB.maxpool_forward(x, 3, 2, g.pad_top, g.pad_left, g.out_h, g.out_w)
    gy = rng.standard_normal(out.shape)
    gx = NB.maxpool_backward(gy, arg, 6, 6)
    assert np.isclose(gx.sum(), gy.sum(), rtol=1e-12)
    # gradient lands only where some window's argmax points
    hit = np.zeros((2, 36, 3), bool)
    for b in range(2):
        for oi in range(out.shape[1]):
            for oj in range(out.shape[2]):
                for ch in range(3):
                    hit[b, arg[b, oi, oj, ch], ch] = True
    assert not gx.reshape(2, 36, 3)[~hit].any()


def test_avgpool_backward_conserves_window_mass():
    rng = np.random.default_rng(12)
    gy = rng.standard_normal((1, 2, 2, 1)).astype(np.float64)
    gx = NB.avgpool_backward(gy, 3, 3, 3, 2, 1, 1)
    assert np.isclose(gx.sum(), gy.sum(), rtol=1e-12)
    # single isolated window: its share spreads uniformly over valid cells
    one = np.zeros((1, 2, 2, 1))
    one[0, 0, 0, 0] = 1.0
    gx1 = NB.avgpool_backward(one, 3, 3, 3, 2, 1, 1)
    assert np.allclose(gx1[0, :2, :2, 0], 0.25)
    assert gx1[0, 2, :, 0].sum() == 0


def test_im2col_col2im_are_adjoint():
    # <im2col(x), C> == <x, col2im(C)> pins col2im as the exact transpose
    rng = np.random.default_rng(5)
    for shape, k, s in [((1, 4, 4, 2), 3, 1), ((2, 5, 3, 1), 3, 2), ((1, 6, 6, 3), 2, 2)]:
        x = rng.standard_normal(shape)
        g = pad_geometry(shape[1], shape[2], k, s, "same")
        cols = NB.im2col(x, k, k, s, g.pad_top, g.pad_left, g.out_h, g.out_w)
        cot = rng.standard_normal(cols.shape)
        gx = NB.col2im(cot, shape, k, k, s, g.pad_top, g.pad_left, g.out_h, g.out_w)
        assert np.isclose((cols * cot).sum(), (x * gx).sum(), rtol=1e-12)


def test_im2col_patch_layout():
    # patch rows flatten (kh, kw, c) row-major with zeros outside the input
    x = np.arange(1, 5, dtype=np.float32).reshape(1, 2, 2, 1)
    g = pad_geometry(2, 2, 3, 1, "same")
    cols = NB.im2col(x, 3, 3, 1, g.pad_top, g.pad_left, g.out_h, g.out_w)
    assert cols.shape == (4, 9)
    # output cell (0,0): window centered there sees rows [pad,pad,pad; pad,1,2; pad,3,4]
    assert cols[0].tolist() == [0, 0, 0, 0, 1, 2, 0, 3, 4]


@pytest.mark.skipif(not HAVE_CY, reason="compiled backend not built")
class TestBackendEquivalence:
    """The compiled backend must be bit-identical to the NumPy fallback."""

    @pytest.mark.parametrize("dtype", [np.float32, np.float64])
    def test_all_kernels_bit_identical(self, dtype):
        rng = np.random.default_rng(99)
        for shape in SHAPES:
            for k, s in [(2, 2), (3, 2), (3, 1)]:
                x = rng.standard_normal(shape).astype(dtype)
                g = pad_geometry(shape[1], shape[2], k, s, "same")
                a = NB.im2col(x, k, k, s, g.pad_top, g.pad_left, g.out_h, g.out_w)
                b = CB.im2col(x, k, k, s, g.pad_top, g.pad_left, g.out_h, g.out_w)
                assert np.array_equal(a, b)
                cot = rng.standard_normal(a.shape).astype(dtype)
                assert np.array_equal(
                    NB.col2im(cot, shape, k, k, s, g.pad_top, g.pad_left, g.out_h, g.out_w),
                    CB.col2im(cot, shape, k, k, s, g.pad_top, g.pad_left, g.out_h, g.out_w))
                mn, an_ = NB.maxpool_forward(x, k, s, g.pad_top, g.pad_left, g.out_h, g.out_w)
                mc, ac_ = CB.maxpool_forward(x, k, s, g.pad_top, g.pad_left, g.out_h, g.out_w)
                assert np.array_equal(mn, mc) and np.array_equal(an_, ac_)
                gy = rng.standard_normal(mn.shape).astype(dtype)
                assert np.array_equal(NB.maxpool_backward(gy, an_, shape[1], shape[2]),
                                      CB.maxpool_backward(gy, ac_, shape[1], shape[2]))
                assert np.array_equal(
                    NB.avgpool_forward(x, k, s, g.pad_top, g.pad_left, g.out_h, g.out_w),
                    CB.avgpool_forward(x, k, s, g.pad_top, g.pad_left, g.out_h, g.out_w))
                assert np.array_equal(
                    NB.avgpool_backward(gy, shape[1], shape[2], k, s, g.pad_top, g.pad_left),
                    CB.avgpool_backward(gy, shape[1], shape[2], k, s, g.pad_top, g.pad_left))


def test_dispatcher_exports():
    from fibnet import _kernels as K
    assert K.backend_name() in ("cython", "numpy")
    assert callable(K.im2col) and callable(K.avgpool_backward)
