"""Corpus scanning, stratified splitting, decoding and resizing."""
import os

import numpy as np
import pytest
from PIL import Image

from conftest import make_corpus

from fibnet.data import (Dataset, load_image, read_splits_csv, resize_bilinear,
                         scan_dataset, stratified_split, to_sample,
                         write_splits_csv)
from fibnet.exceptions import DatasetError


class TestScan:
    def test_four_class_layout(self, corpus4):
        classes, records, skipped = scan_dataset(corpus4)
        assert classes == ["class0", "class1", "class2", "class3"]
        assert len(records) == 40
        assert skipped == []
        assert records == sorted(records)

    def test_many_class_layout(self, tmp_path):
        root = make_corpus(str(tmp_path), classes=6, per_class=3, size=8)
        classes, records, _ = scan_dataset(root)
        assert len(classes) == 6

    def test_empty_root_is_an_error(self, tmp_path):
        with pytest.raises(DatasetError, match="no class"):
            scan_dataset(str(tmp_path))
        with pytest.raises(DatasetError, match="not a directory"):
            scan_dataset(str(tmp_path / "missing"))

    def test_non_image_files_reported_skipped(self, tmp_path):
        root = make_corpus(str(tmp_path), classes=3, per_class=3, size=8)
        with open(os.path.join(root, "class0", "notes.txt"), "w") as fh:
            fh.write("x")
        _, records, skipped = scan_dataset(root)
        assert ("class0/notes.txt", "unsupported extension") in skipped
        assert len(records) == 9


def split_sizes(index, ci):
    return {s: sum(1 for r in index.split_records(s) if r.class_index == ci)
            for s in ("train", "val", "test")}


class TestStratifiedSplit:
    def _index(self, sizes, seed=3):
        classes = [f"c{i}" for i in range(len(sizes))]
        records = [(f"c{i}/f{j:04d}.png", i)
                   for i, n in enumerate(sizes) for j in range(n)]
        return stratified_split(classes, records, seed)

    def test_round_class_of_100(self):
        idx = self._index([100])
        assert split_sizes(idx, 0) == {"train": 60, "val": 20, "test": 20}

    def test_minor_class_of_17(self):
        idx = self._index([17])
        assert split_sizes(idx, 0) == {"train": 11, "val": 3, "test": 3}

    def test_class_of_5(self):
        idx = self._index([5])
        assert split_sizes(idx, 0) == {"train": 3, "val": 1, "test": 1}

    def test_class_too_small_names_class(self):
        with pytest.raises(DatasetError, match="c1"):
            self._index([10, 2])

    def test_properties_over_random_shapes(self):
        rng = np.random.default_rng(0)
        for trial in range(25):
            sizes = rng.integers(3, 60, rng.integers(1, 6)).tolist()
            idx = self._index(sizes, seed=trial)
            paths = [r.path for r in idx.records]
            assert len(set(paths)) == len(paths) == sum(sizes)
            for ci, n in enumerate(sizes):
                sz = split_sizes(idx, ci)
                assert sum(sz.values()) == n
                assert sz["train"] >= 1
                assert abs(sz["test"] - 0.2 * n) <= 0.5
                assert abs(sz["val"] - 0.2 * n) <= 0.5
                assert abs(sz["train"] - 0.6 * n) <= 1.0

    def test_deterministic_under_fixed_seed(self):
        a = self._index([17, 40, 9], seed=12)
        b = self._index([17, 40, 9], seed=12)
        assert a == b
        c = self._index([17, 40, 9], seed=13)
        assert a != c

    def test_shuffle_does_not_leak_across_classes(self):
        # adding a class must not change another class's assignment
        a = self._index([20], seed=7)
        b = self._index([20, 10], seed=7)
        a_map = {r.path: r.split for r in a.records}
        for r in b.records:
            if r.class_index == 0:
                assert a_map[r.path] == r.split


class TestSplitsCsv:
    def test_roundtrip(self, tmp_path, corpus4):
        classes, records, _ = scan_dataset(corpus4)
        idx = stratified_split(classes, records, seed=5)
        path = str(tmp_path / "splits.csv")
        write_splits_csv(idx, path)
        back = read_splits_csv(path)
        assert back.classes == idx.classes
        assert back.records == idx.records


class TestImages:
    def test_resize_identity_passthrough(self):
        rng = np.random.default_rng(0)
        g = rng.uniform(0, 255, (224, 224, 3)).astype(np.float32)
        out = resize_bilinear(g, 224, 224)
        assert np.array_equal(out, g)

    def test_upscale_column_gradient_monotone(self):
        g = np.array([[0, 255], [0, 255]], np.float32)
        out = resize_bilinear(g, 4, 4)
        assert out.shape == (4, 4)
        for r in range(4):
            row = out[r]
            assert all(row[i] <= row[i + 1] for i in range(3))
        assert np.allclose(out[0], out[1]) and np.allclose(out[2], out[3])
        assert np.allclose(out[:, 0], 0) and np.allclose(out[:, 3], 255)

    def test_downscale_averages_toward_center(self):
        g = np.zeros((4, 4), np.float32)
        g[:, 2:] = 100.0
        out = resize_bilinear(g, 2, 2)
        assert out.shape == (2, 2)
        assert out[0, 0] < out[0, 1]

    def test_grayscale_replicates_channels(self, tmp_path):
        p = str(tmp_path / "g.png")
        Image.fromarray(np.arange(64, dtype=np.uint8).reshape(8, 8), "L").save(p)
        grid = load_image(p)
        assert grid.shape == (8, 8, 3)
        assert np.array_equal(grid[..., 0], grid[..., 1])
        assert np.array_equal(grid[..., 0], grid[..., 2])
        sample = to_sample(grid, 224)
        assert sample.shape == (1, 224, 224, 3)
        assert np.array_equal(sample[..., 0], sample[..., 1])

    def test_sample_range_and_shape(self, corpus4):
        classes, records, _ = scan_dataset(corpus4)
        idx = stratified_split(classes, records, seed=5)
        ds = Dataset(corpus4, idx, 224)
        x = ds.load_sample(idx.records[0])
        assert x.shape == (1, 224, 224, 3)
        assert x.min() >= 0.0 and x.max() <= 1.0
        assert x.dtype == np.float32

    def test_decode_error_carries_path(self, tmp_path):
        bad = str(tmp_path / "broken.png")
        with open(bad, "wb") as fh:
            fh.write(b"not a png")
        with pytest.raises(DatasetError, match="broken.png"):
            load_image(bad)

    def test_pipeline_applies_no_transforms(self, corpus4):
        # batch assembly must deliver exactly decode + resize + scale
        classes, records, _ = scan_dataset(corpus4)
        idx = stratified_split(classes, records, seed=5)
        ds = Dataset(corpus4, idx, 32)
        rec = idx.split_records("train")[0]
        via_pipeline = ds.load_sample(rec)
        direct = to_sample(load_image(os.path.join(corpus4, rec.path)), 32)
        assert np.array_equal(via_pipeline, direct)
