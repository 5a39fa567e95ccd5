"""fibnet command line: train | eval | predict | count-params |
pool-preview | gradcam | report.

Flags mirror config fields one-to-one in kebab-case; unknown flags are hard
errors. Every command exits nonzero on failure. FIBNET_THREADS (read at
package import) caps the BLAS worker count, which is the only parallelism
in the pipeline, so equal settings reproduce runs bit-identically.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, dataclass

import numpy as np
from filelock import FileLock, Timeout

from . import data as D
from . import metrics as M
from .exceptions import ConfigError, DatasetError, FibnetError
from .explain import entropy_compare, gradcam, save_heatmap
from .layers import Avg2MaxPool, softmax
from .model import (ModelConfig, PcbSpec, _config_to_dict, build_model,
                    config_from_dict, count_params, load_checkpoint)
from .optim import TrainConfig
from .train import TrainHistory, train, write_run_curves

DEFAULT_SEED = 1337


@dataclass(frozen=True)
class RunConfig:
    """One run's full recipe: model + training + data root + output + seed.

    Together with splits.csv this determines a re-run exactly.
    """
    data_root: str
    out_dir: str
    seed: int
    model: ModelConfig
    train: TrainConfig

    def to_dict(self) -> dict:
        return {
            "data_root": self.data_root,
            "out_dir": self.out_dir,
            "seed": self.seed,
            "model": _config_to_dict(self.model),
            "train": asdict(self.train),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        return cls(
            data_root=d["data_root"],
            out_dir=d["out_dir"],
            seed=int(d["seed"]),
            model=config_from_dict(d["model"]),
            train=TrainConfig(**d["train"]),
        )

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def parse_pcbs(spec: str):
    """--pcb values: 'default', 'none', or comma-separated 'SRC-DST[:FILTERS]'
    entries, e.g. '2-4,3-5:24'."""
    if spec == "default":
        return None
    if spec == "none":
        return ()
    out = []
    for part in spec.split(","):
        part = part.strip()
        filters = None
        if ":" in part:
            part, fstr = part.split(":", 1)
            filters = int(fstr)
        try:
            src, dst = (int(v) for v in part.split("-"))
        except ValueError:
            raise ConfigError(
                f"bad --pcb entry {part!r}; expected SRC-DST[:FILTERS]") from None
        out.append(PcbSpec(src, dst, filters))
    return tuple(out)


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--blocks", type=int, default=7,
                   help="number of blocks (paper-sanctioned choices: 6, 7, 8)")
    p.add_argument("--convs-per-block", type=int, default=2)
    p.add_argument("--input-size", type=int, default=224)
    p.add_argument("--filter-schedule", type=str, default=None,
                   help="comma-separated custom schedule obeying the "
                        "sum-of-previous-two recurrence")
    p.add_argument("--pcb", type=str, default="default",
                   help="'default', 'none', or 'SRC-DST[:FILTERS],...'")
    p.add_argument("--pcb-conv-after-pool", action="store_true",
                   help="place the branch conv after Avg-2Max pooling")
    p.add_argument("--bn-momentum", type=float, default=0.99)
    p.add_argument("--bn-epsilon", type=float, default=1e-5)


def _model_config(args, num_classes: int) -> ModelConfig:
    schedule = None
    if args.filter_schedule:
        schedule = tuple(int(v) for v in args.filter_schedule.split(","))
    return ModelConfig(
        num_classes=num_classes,
        num_blocks=args.blocks,
        filter_schedule=schedule,
        pcbs=parse_pcbs(args.pcb),
        input_size=args.input_size,
        convs_per_block=args.convs_per_block,
        bn_momentum=args.bn_momentum,
        bn_epsilon=args.bn_epsilon,
        pcb_conv_after_pool=args.pcb_conv_after_pool,
    )


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--batch-size", type=int, default=8)
    p.add_argument("--base-lr", type=float, default=1e-4)
    p.add_argument("--lr-hold-epochs", type=int, default=13)
    p.add_argument("--lr-decay", type=float, default=0.9)
    p.add_argument("--adam-beta1", type=float, default=0.9)
    p.add_argument("--adam-beta2", type=float, default=0.999)
    p.add_argument("--adam-epsilon", type=float, default=1e-8)
    p.add_argument("--no-shuffle", action="store_true")


def _train_config(args, seed: int) -> TrainConfig:
    return TrainConfig(
        epochs=args.epochs,
        batch_size=args.batch_size,
        base_lr=args.base_lr,
        lr_hold_epochs=args.lr_hold_epochs,
        lr_decay=args.lr_decay,
        adam_beta1=args.adam_beta1,
        adam_beta2=args.adam_beta2,
        adam_epsilon=args.adam_epsilon,
        seed=seed,
        shuffle=not args.no_shuffle,
    )


def _load_index(data_root: str, splits_csv: str | None, seed: int):
    classes, records, skipped = D.scan_dataset(data_root)
    for rel, reason in skipped:
        print(f"skipped {rel}: {reason}", file=sys.stderr)
    if splits_csv:
        index = D.read_splits_csv(splits_csv)
        if list(index.classes) != classes:
            raise DatasetError(
                f"classes in {splits_csv} do not match the scanned corpus")
    else:
        index = D.stratified_split(classes, records, seed)
    return classes, index


def cmd_train(args) -> int:
    if args.config:
        rc = RunConfig.load(args.config)
        if args.data:
            rc = RunConfig(args.data, rc.out_dir, rc.seed, rc.model, rc.train)
        if args.out:
            rc = RunConfig(rc.data_root, args.out, rc.seed, rc.model, rc.train)
        classes, index = _load_index(rc.data_root, args.splits, rc.seed)
        if len(classes) != rc.model.num_classes:
            raise ConfigError(
                f"config expects {rc.model.num_classes} classes, corpus has "
                f"{len(classes)}")
    else:
        if not args.data or not args.out:
            raise ConfigError("train needs --data and --out (or --config)")
        classes, index = _load_index(args.data, args.splits, args.seed)
        rc = RunConfig(args.data, args.out, args.seed,
                       _model_config(args, len(classes)),
                       _train_config(args, args.seed))

    out = rc.out_dir
    os.makedirs(out, exist_ok=True)
    if os.path.isfile(os.path.join(out, "history.csv")):
        raise ConfigError(f"run directory {out} already holds a run")
    try:
        lock = FileLock(os.path.join(out, ".lock"))
        lock.acquire(timeout=0)
    except Timeout:
        raise ConfigError(f"run directory {out} is locked by another process")
    try:
        rc.save(os.path.join(out, "config.json"))
        D.write_splits_csv(index, os.path.join(out, "splits.csv"))
        model = build_model(rc.model, seed=rc.seed)
        print(f"model: {rc.model.num_blocks} blocks, "
              f"{model.store.num_trainable()} trainable parameters")
        dataset = D.Dataset(rc.data_root, index, rc.model.input_size)
        history = train(model, dataset, rc.train, run_dir=out,
                        class_names=list(classes), log=print)
        best = max(history, key=lambda r: r.val_acc)
        print(f"done: best val_acc {best.val_acc:.3f} (epoch {best.epoch}), "
              f"final val_acc {history[-1].val_acc:.3f}")
        print(f"artifacts in {out}")
    finally:
        lock.release()
    return 0


def _eval_probs(model, dataset, split):
    ys, ps = [], []
    for x, y in dataset.iter_batches(split, 8):
        logits, _ = model.forward(x, mode="infer")
        ps.append(softmax(logits.astype(np.float64)))
        ys.append(y)
    return np.concatenate(ys), np.concatenate(ps)


def cmd_eval(args) -> int:
    model, manifest = load_checkpoint(args.checkpoint)
    seed = args.seed if args.seed is not None else int(
        manifest["state"].get("split_seed", DEFAULT_SEED))
    classes, index = _load_index(args.data, args.splits, seed)
    stored = manifest.get("class_names")
    if stored and list(stored) != list(classes):
        raise ConfigError(
            "checkpoint class names do not match the scanned corpus")
    dataset = D.Dataset(args.data, index, model.config.input_size)
    true, probs = _eval_probs(model, dataset, args.split)
    report = M.build_report(true, probs, class_names=classes)
    os.makedirs(args.out, exist_ok=True)
    M.write_report_csv(report, os.path.join(args.out, "classification_report.csv"))
    M.write_confusion_csv(report.confusion,
                          os.path.join(args.out, "confusion_matrix.csv"),
                          class_names=classes)
    print(f"{args.split}: accuracy {report.accuracy:.4f}  "
          f"weighted_f1 {report.aggregate('f1', 'weighted'):.4f}  "
          f"macro_f1 {report.aggregate('f1', 'macro'):.4f}")
    print(f"reports in {args.out}")
    return 0


def cmd_predict(args) -> int:
    model, manifest = load_checkpoint(args.checkpoint)
    names = manifest.get("class_names") or [
        str(i) for i in range(model.config.num_classes)]
    for path in args.images:
        grid = D.load_image(path)
        x = D.to_sample(grid, model.config.input_size)
        logits, _ = model.forward(x, mode="infer")
        probs = softmax(logits.astype(np.float64))[0]
        top = np.argsort(probs)[::-1][:args.top]
        ranked = "  ".join(f"{names[i]}={probs[i]:.4f}" for i in top)
        print(f"{path}: {ranked}")
    return 0


def cmd_count_params(args) -> int:
    cfg = _model_config(args, args.classes)
    rows, total = count_params(cfg)
    width = max(len(r[0]) for r in rows)
    print(f"{'layer'.ljust(width)}  {'kind':5s}  {'in':>5s}  {'out':>5s}  {'params':>9s}")
    for name, kind, in_c, out_c, n in rows:
        print(f"{name.ljust(width)}  {kind:5s}  {in_c:5d}  {out_c:5d}  {n:9d}")
    print(f"{'total trainable'.ljust(width)}  {'':5s}  {'':5s}  {'':5s}  {total:9d}")
    print(f"({total / 1e5:.2f} lakh)")
    return 0


def cmd_pool_preview(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    pool = Avg2MaxPool()
    failures = 0
    for path in args.images:
        try:
            grid = D.load_image(path)
        except DatasetError as exc:
            print(f"skipping {path}: {exc}", file=sys.stderr)
            failures += 1
            continue
        x = grid.astype(np.float32)[None] / np.float32(255.0)
        y, _ = pool.forward(x)
        y = y[0]
        lo, hi = float(y.min()), float(y.max())
        if hi > lo:
            y = (y - lo) / (hi - lo)
        else:
            y = np.zeros_like(y)
        out8 = (y * 255.0 + 0.5).astype(np.uint8)
        stem = os.path.splitext(os.path.basename(path))[0]
        dest = os.path.join(args.out, f"{stem}_avg2max.png")
        from PIL import Image
        Image.fromarray(out8).save(dest)
        print(f"{path} -> {dest} ({out8.shape[1]}x{out8.shape[0]})")
    return 1 if failures else 0


def cmd_gradcam(args) -> int:
    model, manifest = load_checkpoint(args.checkpoint)
    grid = D.load_image(args.image)
    x = D.to_sample(grid, model.config.input_size)
    if args.target_class is None:
        logits, _ = model.forward(x, mode="infer")
        target = int(logits[0].argmax())
    else:
        target = args.target_class
    hm = gradcam(model, x, target, layer=args.layer)
    size = model.config.input_size
    display = (np.clip(
        D.resize_bilinear(grid.astype(np.float32), size, size), 0, 255)
        + 0.5).astype(np.uint8)
    stem = os.path.splitext(os.path.basename(args.image))[0]
    paths = save_heatmap(hm, display, args.out, stem=f"{stem}_c{target}")
    names = manifest.get("class_names")
    label = names[target] if names else str(target)
    print(f"class {label} via {hm.source_layer}: map max {hm.norm_max:.4g}")
    for k, v in paths.items():
        print(f"{k}: {v}")
    return 0


def cmd_report(args) -> int:
    hist_path = os.path.join(args.run, "history.csv")
    if not os.path.isfile(hist_path):
        raise ConfigError(f"no history.csv in {args.run}")
    history = TrainHistory.read_csv(hist_path)
    write_run_curves(history, os.path.join(args.run, "curves.svg"))
    best = max(history, key=lambda r: r.val_acc)
    final = history[-1]
    mean_secs = sum(r.seconds for r in history) / len(history)
    print(f"epochs: {len(history)}")
    print(f"best   val_acc {best.val_acc:.4f} at epoch {best.epoch}")
    print(f"final  val_acc {final.val_acc:.4f}  val_loss {final.val_loss:.4f}")
    print(f"mean secs/epoch {mean_secs:.2f}")
    print(f"curves: {os.path.join(args.run, 'curves.svg')}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fibnet",
                                 description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a directory-per-class corpus")
    p.add_argument("--data", type=str, default=None)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--config", type=str, default=None,
                   help="reuse a run's config.json")
    p.add_argument("--splits", type=str, default=None,
                   help="reuse a run's splits.csv")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--splits", type=str, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify images with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--top", type=int, default=3)
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("count-params", help="closed-form per-layer parameter table")
    p.add_argument("--classes", type=int, default=44)
    _add_model_flags(p)
    p.set_defaults(func=cmd_count_params)

    p = sub.add_parser("pool-preview",
                       help="apply Avg-2Max pooling to images and save PNGs")
    p.add_argument("--out", required=True)
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_pool_preview)

    p = sub.add_parser("gradcam", help="class-evidence heat map for one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--target-class", type=int, default=None)
    p.add_argument("--layer", type=str, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gradcam)

    p = sub.add_parser("report", help="render curves.svg and a run summary")
    p.add_argument("--run", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FibnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
