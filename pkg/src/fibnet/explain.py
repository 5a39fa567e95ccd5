"""Grad-CAM heat maps and the feature-entropy diagnostic.

Grad-CAM reuses the tested backward pass: channel weights are the spatial
means of the target logit's gradient at the chosen layer, the map is the
ReLU of the weighted channel sum, max-normalized to [0, 1].

The entropy diagnostic histograms activations entering global average
pooling and reports Shannon entropy in bits; it is a measurement, never an
assertion, because the underlying claim concerns trained networks.
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .data import resize_bilinear
from .exceptions import ConfigError
from .model import Model


@dataclass
class HeatMap:
    values: np.ndarray      # (h, w), in [0, 1] once normalized
    source_layer: str
    target_class: int
    norm_max: float         # pre-normalization maximum (0 for an all-zero map)


def gradcam(model: Model, x: np.ndarray, target_class: int,
            layer: str | None = None) -> HeatMap:
    """Class-evidence map for one sample at a named graph node.

    layer defaults to the deepest standard-conv block output. Raises for
    unknown layer names, listing the convolutional outputs available.
    """
    layer = layer or model.cam_default
    names = set(model.graph.node_names())
    if layer not in names:
        raise ConfigError(
            f"unknown layer {layer!r}; convolutional outputs: "
            + ", ".join(model.conv_outputs))
    if x.shape[0] != 1:
        raise ValueError("gradcam expects a single sample (batch of 1)")
    logits, cache = model.graph.forward(x, mode="infer", keep_ctx=True)
    k = logits.shape[1]
    if not 0 <= target_class < k:
        raise ValueError(f"target class {target_class} out of range for {k} classes")
    grad_logits = np.zeros_like(logits)
    grad_logits[0, target_class] = 1.0
    node_grads = model.graph.backward(cache, grad_logits)
    activ = cache.outputs[layer]
    grad = node_grads[layer]
    weights = grad.mean(axis=(1, 2))                       # (1, c)
    cam = np.maximum((weights[:, None, None, :] * activ).sum(axis=3), 0.0)[0]
    norm_max = float(cam.max())
    if norm_max > 0:
        cam = cam / norm_max
    return HeatMap(cam.astype(np.float64), layer, target_class, norm_max)


def _jet(v: np.ndarray) -> np.ndarray:
    """Piecewise-linear jet colormap, v in [0,1] -> uint8 RGB."""
    r = np.clip(1.5 - np.abs(4.0 * v - 3.0), 0, 1)
    g = np.clip(1.5 - np.abs(4.0 * v - 2.0), 0, 1)
    b = np.clip(1.5 - np.abs(4.0 * v - 1.0), 0, 1)
    return (np.stack([r, g, b], axis=-1) * 255.0 + 0.5).astype(np.uint8)


def render_overlay(heatmap: HeatMap, image: np.ndarray,
                   alpha: float = 0.45) -> np.ndarray:
    """Upsample the map bilinearly to the image size and alpha-blend a jet
    rendering over the (h, w, 3) uint8 image."""
    h, w = image.shape[:2]
    up = np.clip(resize_bilinear(heatmap.values, h, w), 0.0, 1.0)
    colored = _jet(up)
    blend = (1.0 - alpha) * image.astype(np.float64) + alpha * colored
    return np.clip(blend + 0.5, 0, 255).astype(np.uint8)


def save_heatmap(heatmap: HeatMap, image: np.ndarray, out_dir: str,
                 stem: str = "gradcam") -> dict:
    """Write raw-map PNG, overlay PNG and a JSON sidecar; returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    raw8 = (np.clip(heatmap.values, 0, 1) * 255.0 + 0.5).astype(np.uint8)
    raw_path = os.path.join(out_dir, f"{stem}_map.png")
    Image.fromarray(raw8, mode="L").save(raw_path)
    overlay_path = os.path.join(out_dir, f"{stem}_overlay.png")
    Image.fromarray(render_overlay(heatmap, image)).save(overlay_path)
    sidecar = {
        "layer": heatmap.source_layer,
        "class": heatmap.target_class,
        "normalization_max": heatmap.norm_max,
    }
    json_path = os.path.join(out_dir, f"{stem}.json")
    with open(json_path, "w") as fh:
        json.dump(sidecar, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return {"map": raw_path, "overlay": overlay_path, "sidecar": json_path}


def feature_entropy(x: np.ndarray, bins: int = 256) -> float:
    """Shannon entropy (bits) of an equal-width histogram over [min, max].

    Constant tensors return 0. Invariant under strictly monotonic affine
    rescaling because the bin edges follow the data range.
    """
    if bins < 2:
        raise ValueError(f"bin count must be >= 2, got {bins}")
    flat = np.asarray(x, dtype=np.float64).ravel()
    lo, hi = float(flat.min()), float(flat.max())
    if lo == hi:
        return 0.0
    counts, _ = np.histogram(flat, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / flat.size
    return float(-(p * np.log2(p)).sum())


@dataclass
class EntropyReport:
    rows: list[tuple[str, str, float, int]]   # (tap, model label, bits, bins)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["tap", "model", "bits", "bins"])
            for tap, label, bits, b in self.rows:
                w.writerow([tap, label, f"{bits:.6f}", b])


def entropy_compare(model_a: Model, model_b: Model, x: np.ndarray,
                    bins: int = 256,
                    labels: tuple[str, str] = ("model_a", "model_b")) -> EntropyReport:
    """Entropy of the tensors entering GAP in two comparable models.

    Emitted as a diagnostic table; no ordering between the two values is
    asserted. Models must agree on block count and input size.
    """
    ca, cb = model_a.config, model_b.config
    if (ca.num_blocks, ca.input_size) != (cb.num_blocks, cb.input_size):
        raise ConfigError(
            "entropy_compare needs models with matching block count and "
            f"input size, got {ca.num_blocks}@{ca.input_size} vs "
            f"{cb.num_blocks}@{cb.input_size}")
    rows = []
    for model, label in ((model_a, labels[0]), (model_b, labels[1])):
        _, cache = model.forward(x, mode="infer")
        tap = model.gap_input
        rows.append((tap, label, feature_entropy(cache.outputs[tap], bins), bins))
    return EntropyReport(rows)
