"""Directory-per-class corpus ingestion: scanning, stratified splitting,
decoding, bilinear resizing and seeded batch assembly.

No augmentation or preprocessing happens anywhere in this pipeline beyond
resizing to the model's input size and scaling pixel values to [0, 1].
"""
from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .exceptions import DatasetError

IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}
SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.6, 0.2, 0.2)


@dataclass(frozen=True)
class IndexRecord:
    path: str          # relative to the corpus root, "class_dir/file"
    class_index: int
    split: str


@dataclass(frozen=True)
class DatasetIndex:
    """Split assignment for a scanned corpus; a pure function of the sorted
    record list and the seed."""
    classes: tuple[str, ...]
    records: tuple[IndexRecord, ...]
    seed: int

    def split_records(self, split: str) -> list[IndexRecord]:
        if split not in SPLITS:
            raise DatasetError(f"unknown split {split!r}, expected one of {SPLITS}")
        return [r for r in self.records if r.split == split]

    def class_counts(self, split: str) -> np.ndarray:
        counts = np.zeros(len(self.classes), dtype=np.int64)
        for r in self.split_records(split):
            counts[r.class_index] += 1
        return counts


def scan_dataset(root: str) -> tuple[list[str], list[tuple[str, int]], list[tuple[str, str]]]:
    """Enumerate a root with one subdirectory per class.

    Returns (classes sorted lexicographically, (relative path, class index)
    records sorted by path, skipped files with reasons). Raises on an empty
    or missing root.
    """
    if not os.path.isdir(root):
        raise DatasetError(f"data root {root} is not a directory")
    classes = sorted(d for d in os.listdir(root)
                     if os.path.isdir(os.path.join(root, d)))
    if not classes:
        raise DatasetError(f"data root {root} contains no class directories")
    records: list[tuple[str, int]] = []
    skipped: list[tuple[str, str]] = []
    for ci, cname in enumerate(classes):
        cdir = os.path.join(root, cname)
        for fname in sorted(os.listdir(cdir)):
            rel = f"{cname}/{fname}"
            full = os.path.join(cdir, fname)
            if not os.path.isfile(full):
                skipped.append((rel, "not a regular file"))
                continue
            if os.path.splitext(fname)[1].lower() not in IMAGE_EXTENSIONS:
                skipped.append((rel, "unsupported extension"))
                continue
            records.append((rel, ci))
    if not records:
        raise DatasetError(f"data root {root} contains no image files")
    records.sort(key=lambda r: r[0])
    return classes, records, skipped


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(classes: list[str], records: list[tuple[str, int]],
                     seed: int, ratios=DEFAULT_RATIOS) -> DatasetIndex:
    """Per-class seeded shuffle, then test/val take round(ratio*n) each and
    the remainder trains. Every class needs at least 3 records."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9:
        raise DatasetError(f"ratios must be 3 values summing to 1, got {ratios}")
    by_class: dict[int, list[str]] = {}
    for rel, ci in sorted(records):
        by_class.setdefault(ci, []).append(rel)
    out: list[IndexRecord] = []
    for ci, cname in enumerate(classes):
        paths = by_class.get(ci, [])
        n = len(paths)
        if n < 3:
            raise DatasetError(
                f"class {cname!r} has only {n} images; stratified splitting "
                f"needs at least 3 per class")
        rng = np.random.default_rng([seed, ci])
        order = rng.permutation(n)
        n_test = _round_half_up(ratios[2] * n)
        n_val = _round_half_up(ratios[1] * n)
        for pos, idx in enumerate(order):
            if pos < n_test:
                split = "test"
            elif pos < n_test + n_val:
                split = "val"
            else:
                split = "train"
            out.append(IndexRecord(paths[idx], ci, split))
    out.sort(key=lambda r: r.path)
    return DatasetIndex(tuple(classes), tuple(out), seed)


def write_splits_csv(index: DatasetIndex, path: str) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "class", "split"])
        for r in index.records:
            w.writerow([r.path, index.classes[r.class_index], r.split])


def read_splits_csv(path: str) -> DatasetIndex:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise DatasetError(f"splits file {path} is empty")
    classes = tuple(sorted({r["class"] for r in rows}))
    cindex = {c: i for i, c in enumerate(classes)}
    records = tuple(sorted(
        (IndexRecord(r["path"], cindex[r["class"]], r["split"]) for r in rows),
        key=lambda r: r.path))
    for r in records:
        if r.split not in SPLITS:
            raise DatasetError(f"splits file {path}: unknown split {r.split!r}")
    return DatasetIndex(classes, records, seed=-1)


def load_image(path: str) -> np.ndarray:
    """Decode PNG/JPEG into a (h, w, 3) uint8 grid; grayscale is replicated
    across the three channels."""
    try:
        with Image.open(path) as im:
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
                return np.repeat(arr[:, :, None], 3, axis=2)
            if im.mode != "RGB":
                im = im.convert("RGB")
            return np.asarray(im, dtype=np.uint8).copy()
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc


def resize_bilinear(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with half-pixel sample centers and clamped edges.

    Equal input/output sizes pass values through bit-identically. Works on
    (h, w) or (h, w, c) float arrays; integer inputs are promoted to
    float32 first.
    """
    if grid.dtype.kind != "f":
        grid = grid.astype(np.float32)
    h, w = grid.shape[:2]
    if (h, w) == (out_h, out_w):
        return grid.copy()

    def axis_weights(n_in: int, n_out: int):
        src = (np.arange(n_out, dtype=grid.dtype) + 0.5) * (n_in / n_out) - 0.5
        i0f = np.floor(src)
        t = (src - i0f).astype(grid.dtype)
        i0 = np.clip(i0f, 0, n_in - 1).astype(np.int64)
        i1 = np.clip(i0f + 1, 0, n_in - 1).astype(np.int64)
        return i0, i1, t

    # rows first, then columns (bilinear is separable)
    r0, r1, tr = axis_weights(h, out_h)
    shape_t = (-1,) + (1,) * (grid.ndim - 1)
    rows = grid[r0] * (1 - tr).reshape(shape_t) + grid[r1] * tr.reshape(shape_t)
    c0, c1, tc = axis_weights(w, out_w)
    shape_c = (1, -1) + (1,) * (grid.ndim - 2)
    return rows[:, c0] * (1 - tc).reshape(shape_c) + rows[:, c1] * tc.reshape(shape_c)


def to_sample(grid: np.ndarray, size: int, dtype=np.float32) -> np.ndarray:
    """uint8 (h, w, 3) grid -> (1, size, size, 3) tensor scaled to [0, 1]."""
    scaled = grid.astype(dtype) / dtype(255.0)
    resized = resize_bilinear(scaled, size, size).astype(dtype, copy=False)
    return resized[None, :, :, :]


class Dataset:
    """Sample loader bound to a corpus root and an input size.

    Decoded, resized samples are cached in memory keyed by relative path;
    fine at desk scale, where corpora are small.
    """

    def __init__(self, root: str, index: DatasetIndex, image_size: int,
                 dtype=np.float32, cache: bool = True):
        self.root = root
        self.index = index
        self.image_size = image_size
        self.dtype = dtype
        self._cache: dict[str, np.ndarray] | None = {} if cache else None

    def load_sample(self, record: IndexRecord) -> np.ndarray:
        if self._cache is not None and record.path in self._cache:
            return self._cache[record.path]
        grid = load_image(os.path.join(self.root, record.path))
        x = to_sample(grid, self.image_size, self.dtype)
        if self._cache is not None:
            self._cache[record.path] = x
        return x

    def batch(self, records: list[IndexRecord]) -> tuple[np.ndarray, np.ndarray]:
        xs = np.concatenate([self.load_sample(r) for r in records], axis=0)
        ys = np.array([r.class_index for r in records], dtype=np.int64)
        return xs, ys

    def iter_batches(self, split: str, batch_size: int,
                     order: np.ndarray | None = None):
        """Yield (x, labels) batches; order, when given, permutes the
        split's records (the seeded shuffle)."""
        recs = self.index.split_records(split)
        if not recs:
            raise DatasetError(f"split {split!r} has no records")
        if order is not None:
            recs = [recs[i] for i in order]
        for start in range(0, len(recs), batch_size):
            yield self.batch(recs[start:start + batch_size])
