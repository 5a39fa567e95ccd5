"""Epoch-driven training loop with per-epoch timing and history capture.

The loop is deliberately plain: seeded shuffle, fixed batch size, Adam with
the hold-then-decay schedule, full validation pass per epoch, no early
stopping, no augmentation. Run-directory artifacts (history.csv,
curves.svg, checkpoints) are written as the run progresses.
"""
from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import DatasetError, TrainingDiverged
from .layers import softmax_cross_entropy
from .model import Model, save_checkpoint
from .optim import TrainConfig, adam_step, lr_schedule
from .svgplot import render_curves

HISTORY_FIELDS = ("epoch", "lr", "train_loss", "train_acc",
                  "val_loss", "val_acc", "seconds")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float


class TrainHistory(list):
    """List of EpochRecord with CSV (de)serialization."""

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_FIELDS)
            for r in self:
                w.writerow([r.epoch, f"{r.lr:.12g}", f"{r.train_loss:.9g}",
                            f"{r.train_acc:.9g}", f"{r.val_loss:.9g}",
                            f"{r.val_acc:.9g}", f"{r.seconds:.3f}"])

    @classmethod
    def read_csv(cls, path: str) -> "TrainHistory":
        hist = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                hist.append(EpochRecord(
                    int(row["epoch"]), float(row["lr"]),
                    float(row["train_loss"]), float(row["train_acc"]),
                    float(row["val_loss"]), float(row["val_acc"]),
                    float(row["seconds"])))
        return hist


def evaluate_loss_acc(model: Model, dataset: Dataset, split: str,
                      batch_size: int = 8) -> tuple[float, float]:
    """Mean loss and accuracy over a split, in infer mode."""
    total, correct, loss_sum = 0, 0, 0.0
    for x, y in dataset.iter_batches(split, batch_size):
        logits, _ = model.forward(x, mode="infer")
        loss, _, probs = softmax_cross_entropy(logits, y)
        loss_sum += loss * len(y)
        correct += int((probs.argmax(axis=1) == y).sum())
        total += len(y)
    return loss_sum / total, correct / total


def write_run_curves(history: TrainHistory, path: str) -> None:
    epochs = [r.epoch for r in history]
    svg = render_curves(
        epochs,
        acc_series=[("train_acc", "#1f77b4", [r.train_acc for r in history]),
                    ("val_acc", "#2ca02c", [r.val_acc for r in history])],
        loss_series=[("train_loss", "#d62728", [r.train_loss for r in history]),
                     ("val_loss", "#9467bd", [r.val_loss for r in history])],
    )
    with open(path, "w") as fh:
        fh.write(svg)


def train(model: Model, dataset: Dataset, cfg: TrainConfig,
          run_dir: str | None = None,
          class_names: list[str] | None = None,
          log=None) -> TrainHistory:
    """Run the full protocol; returns one history record per epoch.

    With a run_dir, history.csv is rewritten after every epoch and the
    best-validation-accuracy and final checkpoints land in
    run_dir/checkpoints/. Determinism: equal (model, dataset, cfg) and
    thread settings reproduce losses bit-identically.
    """
    cfg.validate()
    train_recs = dataset.index.split_records("train")
    if not train_recs:
        raise DatasetError("train split is empty")
    if not dataset.index.split_records("val"):
        raise DatasetError("val split is empty")

    shuffle_rng = np.random.default_rng([cfg.seed, 1])
    history = TrainHistory()
    step = 0
    best_val_acc = -1.0
    ckpt_dir = None
    if run_dir is not None:
        ckpt_dir = os.path.join(run_dir, "checkpoints")
        os.makedirs(ckpt_dir, exist_ok=True)

    n_train = len(train_recs)
    steps_per_epoch = math.ceil(n_train / cfg.batch_size)
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.perf_counter()
        lr = lr_schedule(epoch, cfg)
        if cfg.shuffle:
            order = shuffle_rng.permutation(n_train)
        else:
            order = np.arange(n_train)
        seen, correct, loss_sum = 0, 0, 0.0
        for bstart in range(0, n_train, cfg.batch_size):
            x, y = dataset.batch([train_recs[i]
                                  for i in order[bstart:bstart + cfg.batch_size]])
            logits, cache = model.forward(x, mode="train", keep_ctx=True)
            loss, grad_logits, probs = softmax_cross_entropy(logits, y)
            if not math.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch}, step {step + 1}, "
                    f"lr {lr:.3g}")
            model.backward(cache, grad_logits)
            step += 1
            adam_step(model.store, lr, step, cfg)
            loss_sum += loss * len(y)
            correct += int((probs.argmax(axis=1) == y).sum())
            seen += len(y)
        val_loss, val_acc = evaluate_loss_acc(model, dataset, "val",
                                              cfg.batch_size)
        seconds = time.perf_counter() - t0
        rec = EpochRecord(epoch, lr, loss_sum / seen, correct / seen,
                          val_loss, val_acc, seconds)
        history.append(rec)
        if log:
            log(f"epoch {epoch:3d}/{cfg.epochs}  lr {lr:.3g}  "
                f"loss {rec.train_loss:.4f}  acc {rec.train_acc:.3f}  "
                f"val_loss {val_loss:.4f}  val_acc {val_acc:.3f}  "
                f"{seconds:.1f}s")
        if run_dir is not None:
            history.write_csv(os.path.join(run_dir, "history.csv"))
            if val_acc > best_val_acc:
                best_val_acc = val_acc
                save_checkpoint(model, os.path.join(ckpt_dir, "best"),
                                state={"epoch": epoch, "adam_step": step,
                                       "val_acc": val_acc,
                                       "split_seed": dataset.index.seed},
                                class_names=class_names)
    assert step == steps_per_epoch * cfg.epochs
    if run_dir is not None:
        save_checkpoint(model, os.path.join(ckpt_dir, "final"),
                        state={"epoch": cfg.epochs, "adam_step": step,
                               "val_acc": history[-1].val_acc,
                               "split_seed": dataset.index.seed},
                        class_names=class_names)
        write_run_curves(history, os.path.join(run_dir, "curves.svg"))
    return history
