"""Model family construction: block schedule, concatenation-branch wiring,
graph execution, parameter counting and checkpoints.

A model is a static DAG: sequential blocks of (conv + BN + ReLU) units with
2x2/stride-2 max-pool downsampling in the first five blocks, a
depthwise-separable unit in each of the last two blocks, plus parallel
concatenation branches that tap an earlier block's output, pass it through
Avg-2Max pooling (optionally behind a small 3x3 conv) and rejoin the trunk
two blocks downstream. Global average pooling and one dense layer finish
the graph.
"""
from __future__ import annotations

import json
import math
import os
import shutil
from dataclasses import dataclass, field, asdict

import numpy as np

from . import layers as L
from .exceptions import CheckpointError, ConfigError, ShapeMismatchError
from .params import ParamStore
from .tensor import assert_finite

_FIB_SEED = (21, 34)
_MAX_BLOCKS = 8
_DOWNSAMPLE_THROUGH = 5  # blocks 1..5 end with 2x2/s2 max pooling
_DEFAULT_PCB_FILTERS = 24


def fibonacci_schedule(n: int) -> list[int]:
    """First n per-block filter counts: 21, 34, 55, 89, 144, 233, 377, 610."""
    if not 1 <= n <= _MAX_BLOCKS:
        raise ConfigError(f"block count must be in [1, {_MAX_BLOCKS}], got {n}")
    sched = list(_FIB_SEED)
    while len(sched) < n:
        sched.append(sched[-1] + sched[-2])
    return sched[:n]


@dataclass(frozen=True)
class PcbSpec:
    """One parallel concatenation branch.

    Taps the output of source_block, optionally applies a 3x3 conv with
    pre_pool_filters filters (plus BN and ReLU), applies Avg-2Max pooling,
    and concatenates with the trunk right before merge_before_block. The
    branch spans exactly one downsampling block so its single stride-2
    pooling restores spatial agreement.
    """
    source_block: int
    merge_before_block: int
    pre_pool_filters: int | None = None


@dataclass(frozen=True)
class BlockSpec:
    index: int
    filters: int
    kind: str               # "conv" | "dwsc"
    convs: int
    downsample: bool


@dataclass(frozen=True)
class ModelConfig:
    """Declarative description of one model instance.

    filter_schedule=None resolves to fibonacci_schedule(num_blocks); a
    custom schedule must still satisfy the recurrence s[i] = s[i-1] + s[i-2]
    from its own two seed values. pcbs=None resolves to the default pair
    ((2->4), (3->5, 24 filters)) when the model has at least 5 blocks and to
    no branches otherwise; pass an explicit tuple (possibly empty) to
    override. pcb_conv_after_pool flips the branch conv to sit after the
    Avg-2Max pooling instead of before it.
    """
    num_classes: int
    num_blocks: int = 7
    filter_schedule: tuple[int, ...] | None = None
    pcbs: tuple[PcbSpec, ...] | None = None
    input_size: int = 224
    convs_per_block: int = 2
    bn_momentum: float = 0.99
    bn_epsilon: float = 1e-5
    pcb_conv_after_pool: bool = False

    def resolve(self) -> "ResolvedConfig":
        if self.num_classes < 2:
            raise ConfigError(f"need at least 2 classes, got {self.num_classes}")
        if not 3 <= self.num_blocks <= _MAX_BLOCKS:
            raise ConfigError(
                f"num_blocks must be in [3, {_MAX_BLOCKS}], got {self.num_blocks}")
        if self.convs_per_block < 1:
            raise ConfigError("convs_per_block must be >= 1")
        if self.input_size < 1:
            raise ConfigError("input_size must be >= 1")
        if not 0.0 < self.bn_momentum < 1.0:
            raise ConfigError("bn_momentum must lie in (0, 1)")

        if self.filter_schedule is None:
            sched = tuple(fibonacci_schedule(self.num_blocks))
        else:
            sched = tuple(int(f) for f in self.filter_schedule)
            if len(sched) != self.num_blocks:
                raise ConfigError(
                    f"filter_schedule length {len(sched)} != num_blocks {self.num_blocks}")
            if any(f < 1 for f in sched):
                raise ConfigError("filter counts must be >= 1")
            for i in range(2, len(sched)):
                if sched[i] != sched[i - 1] + sched[i - 2]:
                    raise ConfigError(
                        f"filter_schedule breaks the recurrence at entry {i}: "
                        f"{sched[i]} != {sched[i - 1]} + {sched[i - 2]}")

        if self.pcbs is None:
            if self.num_blocks >= 5:
                pcbs = (PcbSpec(2, 4, None), PcbSpec(3, 5, _DEFAULT_PCB_FILTERS))
            else:
                pcbs = ()
        else:
            pcbs = tuple(self.pcbs)

        seen_sources = set()
        for p in pcbs:
            if p.merge_before_block != p.source_block + 2:
                raise ConfigError(
                    f"pcb {p.source_block}->{p.merge_before_block}: merge block "
                    f"must be source + 2")
            if p.source_block < 1 or p.merge_before_block > self.num_blocks:
                raise ConfigError(
                    f"pcb {p.source_block}->{p.merge_before_block} falls outside "
                    f"the {self.num_blocks}-block model")
            if p.source_block + 1 > _DOWNSAMPLE_THROUGH:
                raise ConfigError(
                    f"pcb {p.source_block}->{p.merge_before_block}: block "
                    f"{p.source_block + 1} does not downsample, so the branch "
                    f"cannot restore spatial agreement")
            if p.pre_pool_filters is not None and p.pre_pool_filters < 1:
                raise ConfigError("pre_pool_filters must be >= 1 or None")
            if p.source_block in seen_sources:
                raise ConfigError(f"duplicate pcb source block {p.source_block}")
            seen_sources.add(p.source_block)

        blocks = tuple(
            BlockSpec(
                index=i,
                filters=sched[i - 1],
                kind="dwsc" if i > self.num_blocks - 2 else "conv",
                convs=self.convs_per_block,
                downsample=i <= _DOWNSAMPLE_THROUGH,
            )
            for i in range(1, self.num_blocks + 1)
        )
        return ResolvedConfig(self, sched, pcbs, blocks)


@dataclass(frozen=True)
class ResolvedConfig:
    """ModelConfig with schedule, branches and block specs made explicit."""
    base: ModelConfig
    schedule: tuple[int, ...]
    pcbs: tuple[PcbSpec, ...]
    blocks: tuple[BlockSpec, ...]


@dataclass(frozen=True)
class LayerPlanEntry:
    """Wiring facts for one parameterized layer; enough for closed-form
    parameter counting without allocating anything."""
    name: str
    kind: str        # conv | dwsc | bn | dense
    in_c: int
    out_c: int


def plan_layers(cfg: ModelConfig) -> tuple[list[LayerPlanEntry], dict]:
    """Channel/spatial propagation through the wiring.

    Returns the ordered parameterized-layer plan plus structural facts used
    by tests and the builder: spatial side and channel count entering each
    block, merge-point channel sums, and the side entering GAP.
    """
    rc = cfg.resolve()
    merges = {p.merge_before_block: p for p in rc.pcbs}
    entries: list[LayerPlanEntry] = []
    side = cfg.input_size
    ch = 3
    block_out_channels: dict[int, int] = {}
    block_out_side: dict[int, int] = {}
    block_in: dict[int, tuple[int, int]] = {}
    merge_channels: dict[int, int] = {}

    for b in rc.blocks:
        if b.index in merges:
            p = merges[b.index]
            src_c = block_out_channels[p.source_block]
            src_side = block_out_side[p.source_block]
            branch_c = src_c
            if p.pre_pool_filters is not None:
                tag = f"pcb{p.source_block}_{p.merge_before_block}"
                entries.append(LayerPlanEntry(f"{tag}/conv", "conv", src_c,
                                              p.pre_pool_filters))
                entries.append(LayerPlanEntry(f"{tag}/bn", "bn",
                                              p.pre_pool_filters, p.pre_pool_filters))
                branch_c = p.pre_pool_filters
            branch_side = math.ceil(src_side / 2)
            if branch_side != side:
                raise ConfigError(
                    f"pcb {p.source_block}->{p.merge_before_block}: branch side "
                    f"{branch_side} does not match trunk side {side} at the merge")
            merge_channels[b.index] = ch + branch_c
            ch = ch + branch_c
        block_in[b.index] = (side, ch)
        if b.kind == "conv":
            for j in range(1, b.convs + 1):
                name = f"block{b.index}/conv{j}"
                entries.append(LayerPlanEntry(name, "conv", ch, b.filters))
                entries.append(LayerPlanEntry(f"block{b.index}/bn{j}", "bn",
                                              b.filters, b.filters))
                ch = b.filters
        else:
            entries.append(LayerPlanEntry(f"block{b.index}/dwsc", "dwsc",
                                          ch, b.filters))
            entries.append(LayerPlanEntry(f"block{b.index}/bn", "bn",
                                          b.filters, b.filters))
            ch = b.filters
        if b.downsample:
            side = math.ceil(side / 2)
        block_out_channels[b.index] = ch
        block_out_side[b.index] = side

    entries.append(LayerPlanEntry("head/dense", "dense", ch, cfg.num_classes))
    info = {
        "gap_side": side,
        "gap_channels": ch,
        "block_in": block_in,
        "merge_channels": merge_channels,
        "block_out_side": block_out_side,
    }
    return entries, info


_PARAM_FORMULAS = {
    "conv": lambda i, o: (9 * i + 1) * o,
    "dwsc": lambda i, o: 10 * i + (i + 1) * o,
    "bn": lambda i, o: 2 * o,
    "dense": lambda i, o: (i + 1) * o,
}


def count_params(cfg: ModelConfig) -> tuple[list[tuple[str, str, int, int, int]], int]:
    """Closed-form per-layer trainable counts and their total.

    Conv layers hold (9*in + 1)*out, DWSC 10*in + (in + 1)*out, batch norm
    2*channels (running stats are not trainable), dense (in + 1)*out.
    """
    entries, _ = plan_layers(cfg)
    rows = []
    total = 0
    for e in entries:
        n = _PARAM_FORMULAS[e.kind](e.in_c, e.out_c)
        rows.append((e.name, e.kind, e.in_c, e.out_c, n))
        total += n
    return rows, total


@dataclass
class Node:
    name: str
    layer: object
    inputs: tuple[str, ...]


class Graph:
    """Static DAG executed in insertion (topological) order."""

    INPUT = "input"

    def __init__(self):
        self.nodes: list[Node] = []
        self._names: set[str] = {self.INPUT}

    def add(self, name: str, layer, inputs) -> str:
        if name in self._names:
            raise ConfigError(f"duplicate node name {name}")
        for i in inputs:
            if i not in self._names:
                raise ConfigError(f"node {name} references unknown input {i}")
        self._names.add(name)
        self.nodes.append(Node(name, layer, tuple(inputs)))
        return name

    @property
    def output_name(self) -> str:
        return self.nodes[-1].name

    def node_names(self) -> list[str]:
        return [n.name for n in self.nodes]

    def forward(self, x: np.ndarray, mode: str = "infer", keep_ctx: bool = False):
        """Run all nodes; returns (output, cache). The cache holds every
        node output and, when keep_ctx is set, the per-node backward ctx."""
        outs = {self.INPUT: x}
        ctxs = {} if keep_ctx else None
        for node in self.nodes:
            args = [outs[i] for i in node.inputs]
            y, ctx = node.layer.forward(*args, mode=mode)
            assert_finite(y, node.name)
            outs[node.name] = y
            if keep_ctx:
                ctxs[node.name] = ctx
        return outs[self.output_name], ForwardCache(outs, ctxs, mode)

    def backward(self, cache: "ForwardCache", grad_out: np.ndarray) -> dict:
        """Reverse-order sweep; consumes the cache's ctxs exactly once.

        Returns the gradient of the weighted output sum with respect to
        every node output (and the graph input), with fan-out taps
        accumulated. Parameter gradients land in their Param entries.
        """
        if cache.ctxs is None:
            raise ValueError("forward was run without keep_ctx=True")
        grads = {self.output_name: grad_out}
        result = {}
        for node in reversed(self.nodes):
            g = grads.pop(node.name, None)
            if g is None:
                continue
            result[node.name] = g
            ctx = cache.ctxs.pop(node.name)
            gxs = node.layer.backward(ctx, g)
            for inp, gx in zip(node.inputs, gxs):
                assert_finite(gx, f"{node.name}<-")
                if inp in grads:
                    grads[inp] = grads[inp] + gx
                else:
                    grads[inp] = gx
        result[self.INPUT] = grads.pop(self.INPUT)
        return result


@dataclass
class ForwardCache:
    outputs: dict
    ctxs: dict | None
    mode: str


@dataclass
class Model:
    """A built graph plus its parameters and naming metadata."""
    config: ModelConfig
    resolved: ResolvedConfig
    graph: Graph
    store: ParamStore
    seed: int
    dtype: object
    gap_input: str
    cam_default: str
    conv_outputs: tuple[str, ...]

    def forward(self, x, mode="infer", keep_ctx=False):
        n, h, w, c = x.shape
        s = self.config.input_size
        if (h, w, c) != (s, s, 3):
            raise ShapeMismatchError(
                f"model expects input (n,{s},{s},3), got {x.shape}")
        return self.graph.forward(x, mode=mode, keep_ctx=keep_ctx)

    def backward(self, cache, grad_logits):
        return self.graph.backward(cache, grad_logits)


def build_model(cfg: ModelConfig, seed: int, dtype=np.float32) -> Model:
    """Construct the graph and initialize all weights from the seed.

    Weight draws happen in construction order from one seeded generator, so
    equal (cfg, seed, dtype) always produce bit-identical stores.
    """
    rc = cfg.resolve()
    plan_entries, info = plan_layers(cfg)  # validates the wiring up front
    rng = np.random.default_rng([seed, 0])
    store = ParamStore()
    g = Graph()
    merges = {p.merge_before_block: p for p in rc.pcbs}
    block_out: dict[int, str] = {}
    conv_outputs: list[str] = []
    cur = Graph.INPUT
    cur_c = 3

    def conv_bn_relu(tag: str, inp: str, in_c: int, out_c: int,
                     suffix: str = "") -> str:
        conv = g.add(f"{tag}/conv{suffix}", L.Conv2D(
            store, f"{tag}/conv{suffix}", in_c, out_c, rng=rng, dtype=dtype),
            [inp])
        bn = g.add(f"{tag}/bn{suffix}", L.BatchNorm(
            store, f"{tag}/bn{suffix}", out_c, cfg.bn_momentum, cfg.bn_epsilon,
            dtype=dtype), [conv])
        return g.add(f"{tag}/relu{suffix}", L.ReLU(), [bn])

    for b in rc.blocks:
        if b.index in merges:
            p = merges[b.index]
            tag = f"pcb{p.source_block}_{p.merge_before_block}"
            branch = block_out[p.source_block]
            branch_c = rc.blocks[p.source_block - 1].filters
            if p.pre_pool_filters is not None and not cfg.pcb_conv_after_pool:
                branch = conv_bn_relu(tag, branch, branch_c, p.pre_pool_filters)
                branch_c = p.pre_pool_filters
            branch = g.add(f"{tag}/pool", L.Avg2MaxPool(), [branch])
            if p.pre_pool_filters is not None and cfg.pcb_conv_after_pool:
                branch = conv_bn_relu(tag, branch, branch_c, p.pre_pool_filters)
                branch_c = p.pre_pool_filters
            cur = g.add(f"{tag}/concat", L.Concat(), [cur, branch])
            cur_c += branch_c
        tag = f"block{b.index}"
        if b.kind == "conv":
            for j in range(1, b.convs + 1):
                cur = conv_bn_relu(tag, cur, cur_c, b.filters, suffix=str(j))
                cur_c = b.filters
        else:
            dwsc = g.add(f"{tag}/dwsc", L.DepthwiseSeparableConv(
                store, f"{tag}/dwsc", cur_c, b.filters, rng=rng, dtype=dtype),
                [cur])
            bn = g.add(f"{tag}/bn", L.BatchNorm(
                store, f"{tag}/bn", b.filters, cfg.bn_momentum, cfg.bn_epsilon,
                dtype=dtype), [dwsc])
            cur = g.add(f"{tag}/relu", L.ReLU(), [bn])
            cur_c = b.filters
        if b.downsample:
            cur = g.add(f"{tag}/pool", L.MaxPool2D(2, 2, "same"), [cur])
        block_out[b.index] = cur
        conv_outputs.append(cur)

    gap_input = cur
    cur = g.add("head/gap", L.GlobalAvgPool(), [cur])
    g.add("head/dense", L.Dense(store, "head/dense", cur_c, cfg.num_classes,
                                rng=rng, dtype=dtype), [cur])

    # deepest standard-conv block output: finest resolution before the tail
    last_conv_block = max(b.index for b in rc.blocks if b.kind == "conv")
    cam_default = block_out[last_conv_block]

    model = Model(cfg, rc, g, store, seed, dtype, gap_input, cam_default,
                  tuple(conv_outputs))

    total_closed = sum(r[-1] for r in count_params(cfg)[0])
    if total_closed != store.num_trainable():
        raise ConfigError(
            f"internal wiring error: closed-form count {total_closed} != "
            f"allocated {store.num_trainable()}")
    return model


# --- checkpoints -----------------------------------------------------------

_MANIFEST = "manifest.json"
_WEIGHTS = "weights.bin"


def _config_to_dict(cfg: ModelConfig) -> dict:
    rc = cfg.resolve()
    d = asdict(cfg)
    d["filter_schedule"] = list(rc.schedule)
    d["pcbs"] = [[p.source_block, p.merge_before_block, p.pre_pool_filters]
                 for p in rc.pcbs]
    return d


def config_from_dict(d: dict) -> ModelConfig:
    d = dict(d)
    if d.get("pcbs") is not None:
        d["pcbs"] = tuple(PcbSpec(int(s), int(m), None if f is None else int(f))
                          for s, m, f in d["pcbs"])
    if d.get("filter_schedule") is not None:
        d["filter_schedule"] = tuple(int(f) for f in d["filter_schedule"])
    return ModelConfig(**d)


def save_checkpoint(model: Model, path: str, state: dict | None = None,
                    class_names: list[str] | None = None) -> None:
    """Write manifest.json + weights.bin, atomically via a tmp directory.

    weights.bin holds every store entry as little-endian float32 in store
    order; the manifest records name/shape/dtype/offset/trainable per entry
    plus the resolved model config and caller-supplied training state.
    """
    tmp = path + ".tmp"
    if os.path.exists(tmp):
        shutil.rmtree(tmp)
    os.makedirs(tmp)
    entries = []
    offset = 0
    with open(os.path.join(tmp, _WEIGHTS), "wb") as fh:
        for p in model.store:
            raw = np.ascontiguousarray(p.value, dtype="<f4").tobytes()
            entries.append({
                "name": p.name,
                "shape": list(p.value.shape),
                "dtype": "float32",
                "offset": offset,
                "trainable": p.trainable,
            })
            fh.write(raw)
            offset += len(raw)
    manifest = {
        "format": "fibnet-checkpoint",
        "version": 1,
        "config": _config_to_dict(model.config),
        "seed": model.seed,
        "params": entries,
        "state": state or {},
        "class_names": class_names,
    }
    with open(os.path.join(tmp, _MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    if os.path.exists(path):
        shutil.rmtree(path)
    os.replace(tmp, path)


def load_checkpoint(path: str, dtype=np.float32) -> tuple[Model, dict]:
    """Rebuild the model from its stored config and load the weights.

    Shapes are verified entry by entry against a freshly built graph.
    """
    mpath = os.path.join(path, _MANIFEST)
    if not os.path.isfile(mpath):
        raise CheckpointError(f"no {_MANIFEST} in {path}")
    with open(mpath) as fh:
        manifest = json.load(fh)
    if manifest.get("format") != "fibnet-checkpoint":
        raise CheckpointError(f"{path} is not a fibnet checkpoint")
    cfg = config_from_dict(manifest["config"])
    model = build_model(cfg, seed=int(manifest.get("seed", 0)), dtype=dtype)
    entries = manifest["params"]
    store_params = list(model.store)
    if len(entries) != len(store_params):
        raise CheckpointError(
            f"checkpoint has {len(entries)} entries, model has {len(store_params)}")
    blob = open(os.path.join(path, _WEIGHTS), "rb").read()
    for e, p in zip(entries, store_params):
        if e["name"] != p.name or tuple(e["shape"]) != p.value.shape:
            raise CheckpointError(
                f"checkpoint entry {e['name']} {tuple(e['shape'])} does not match "
                f"model entry {p.name} {p.value.shape}")
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        raw = np.frombuffer(blob, dtype="<f4", count=count, offset=e["offset"])
        p.value = raw.reshape(p.value.shape).astype(dtype)
    return model, manifest
