import numpy as np
import pytest

from fibnet.exceptions import ShapeMismatchError
from fibnet.tensor import (PaddingGeometry, concat_channels, pad_geometry,
                           same_pad_geometry, slice_channels)


class TestConcatChannels:
    def test_backbone_plus_branch_widths(self):
        a = np.random.default_rng(0).standard_normal((1, 14, 14, 89)).astype(np.float32)
        b = np.random.default_rng(1).standard_normal((1, 14, 14, 24)).astype(np.float32)
        out = concat_channels(a, b)
        assert out.shape == (1, 14, 14, 113)
        assert np.array_equal(out[..., :89], a)
        assert np.array_equal(out[..., 89:], b)

    def test_channel_sum(self):
        a = np.zeros((1, 28, 28, 55), np.float32)
        b = np.zeros((1, 28, 28, 34), np.float32)
        assert concat_channels(a, b).shape == (1, 28, 28, 89)

    def test_zero_case(self):
        a = np.zeros((1, 2, 2, 1), np.float32)
        out = concat_channels(a, a)
        assert out.shape == (1, 2, 2, 2)
        assert not out.any()

    def test_slicing_recovers_lhs_bit_exactly(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            n, h, w = rng.integers(1, 4, 3)
            ca, cb = rng.integers(1, 6, 2)
            a = rng.standard_normal((n, h, w, ca)).astype(np.float32)
            b = rng.standard_normal((n, h, w, cb)).astype(np.float32)
            joined = concat_channels(a, b)
            assert np.array_equal(slice_channels(joined, 0, ca), a)
            assert np.array_equal(slice_channels(joined, ca, ca + cb), b)

    @pytest.mark.parametrize("shape_b, axis_name", [
        ((2, 3, 3, 1), "batch"),
        ((1, 4, 3, 1), "height"),
        ((1, 3, 5, 1), "width"),
    ])
    def test_mismatch_names_axis(self, shape_b, axis_name):
        a = np.zeros((1, 3, 3, 1), np.float32)
        b = np.zeros(shape_b, np.float32)
        with pytest.raises(ShapeMismatchError, match=axis_name):
            concat_channels(a, b)


class TestSamePadGeometry:
    def test_stride1(self):
        g = same_pad_geometry(224, 3, 1)
        assert (g.out_h, g.pad_top, g.pad_bottom) == (224, 1, 1)
        assert (g.out_w, g.pad_left, g.pad_right) == (224, 1, 1)

    def test_stride2_even(self):
        g = same_pad_geometry(224, 3, 2)
        assert g.out_h == 112
        assert (g.pad_top, g.pad_bottom) == (0, 1)

    def test_stride2_tiny(self):
        g = same_pad_geometry(3, 3, 2)
        assert g.out_h == 2
        assert (g.pad_top, g.pad_bottom) == (1, 1)

    def test_ceil_rule_sweep(self):
        for n in range(1, 65):
            for k in (1, 3):
                for s in (1, 2):
                    g = same_pad_geometry(n, k, s)
                    assert g.out_h == -(-n // s), (n, k, s)
                    total = g.pad_top + g.pad_bottom
                    assert total == max((g.out_h - 1) * s + k - n, 0)
                    assert g.pad_top <= g.pad_bottom  # smaller half first

    def test_valid_mode(self):
        g = pad_geometry(5, 7, 3, 2, "valid")
        assert isinstance(g, PaddingGeometry)
        assert (g.out_h, g.out_w) == (2, 3)
        assert (g.pad_top, g.pad_left, g.pad_bottom, g.pad_right) == (0, 0, 0, 0)

    def test_bad_args(self):
        with pytest.raises(ValueError):
            same_pad_geometry(0, 3, 1)
        with pytest.raises(ValueError):
            pad_geometry(4, 4, 3, 1, "reflect")
