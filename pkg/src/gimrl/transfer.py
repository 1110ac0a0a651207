"""Moving a trained Q-network onto a related database with a different item vocabulary.

Hidden blocks carry over unchanged.  The first layer's input columns and the
output layer's action rows are indexed by item, so they are re-indexed by
external id: shared items keep their trained weights, items unknown to the
source are freshly He-initialised, items unknown to the target are dropped.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .agent import spec_for_task
from .dataset import Task, TransactionDatabase, split_source_target
from .neuralnet import NetworkSpec, QNetwork
from .trainer import MiningResult, RunConfig, prepare, run


class TransferError(ValueError):
    pass


@dataclass(frozen=True)
class ItemAlignment:
    shared: tuple[tuple[int, int], ...]  # (source id, target id)
    source_only: tuple[int, ...]
    target_only: tuple[int, ...]
    n_source: int
    n_target: int

    def __post_init__(self):
        if len(self.shared) + len(self.source_only) != self.n_source:
            raise TransferError("alignment does not partition the source vocabulary")
        if len(self.shared) + len(self.target_only) != self.n_target:
            raise TransferError("alignment does not partition the target vocabulary")


def align_items(src_db: TransactionDatabase, tgt_db: TransactionDatabase) -> ItemAlignment:
    src = src_db.external_to_internal
    tgt = tgt_db.external_to_internal
    shared = tuple(sorted((src[x], tgt[x]) for x in src.keys() & tgt.keys()))
    return ItemAlignment(
        shared=shared,
        source_only=tuple(sorted(src[x] for x in src.keys() - tgt.keys())),
        target_only=tuple(sorted(tgt[x] for x in tgt.keys() - src.keys())),
        n_source=src_db.n_items,
        n_target=tgt_db.n_items,
    )


def _input_groups(spec: NetworkSpec, n_items: int) -> int:
    groups, rem = divmod(spec.input_dim, n_items)
    if rem:
        raise TransferError(f"input width {spec.input_dim} is not a multiple of {n_items} items")
    return groups


def transfer_network(src_net: QNetwork, alignment: ItemAlignment, tgt_spec: NetworkSpec,
                     rng: np.random.Generator, reset_bn_stats: bool = False) -> QNetwork:
    """Build a target-vocabulary network from ``src_net``.

    The redraw action's output row is copied as a shared action.  With
    ``reset_bn_stats`` the running means/variances restart at 0/1.
    """
    src_spec = src_net.spec
    if src_spec.hidden_widths != tgt_spec.hidden_widths:
        raise TransferError(f"hidden widths differ: {src_spec.hidden_widths} vs {tgt_spec.hidden_widths}")
    if src_spec.input_batchnorm != tgt_spec.input_batchnorm:
        raise TransferError("input batch-norm layout differs")
    if src_spec.output_dim != alignment.n_source + 1 or tgt_spec.output_dim != alignment.n_target + 1:
        raise TransferError("alignment sizes do not match the network output layers")
    groups = _input_groups(src_spec, alignment.n_source)
    if _input_groups(tgt_spec, alignment.n_target) != groups:
        raise TransferError("source and target state layouts differ")

    net = QNetwork.initialize(tgt_spec, rng)
    src_p, src_b = src_net.params, src_net.buffers
    p, b = net.params, net.buffers
    # hidden blocks: everything except the first layer's weights and the output layer
    for name, arr in src_p.items():
        if name.startswith(("out.", "in_bn.")) or name == "fc0.W":
            continue
        p[name] = arr.copy()
    for name, arr in src_b.items():
        if not name.startswith("in_bn."):
            b[name] = arr.copy()

    s_idx = np.array([s for s, _ in alignment.shared], dtype=np.int64)
    t_idx = np.array([t for _, t in alignment.shared], dtype=np.int64)
    ms, mt = alignment.n_source, alignment.n_target
    # the AR state holds one M-wide slice per component
    src_cols = np.concatenate([s_idx + g * ms for g in range(groups)])
    tgt_cols = np.concatenate([t_idx + g * mt for g in range(groups)])
    p["fc0.W"][:, tgt_cols] = src_p["fc0.W"][:, src_cols]
    if tgt_spec.input_batchnorm:
        for key in ("in_bn.gamma", "in_bn.beta"):
            p[key][tgt_cols] = src_p[key][src_cols]
        for key in ("in_bn.running_mean", "in_bn.running_var"):
            b[key][tgt_cols] = src_b[key][src_cols]

    p["out.W"][t_idx] = src_p["out.W"][s_idx]
    p["out.b"][t_idx] = src_p["out.b"][s_idx]
    p["out.W"][mt] = src_p["out.W"][ms]
    p["out.b"][mt] = src_p["out.b"][ms]

    if reset_bn_stats:
        for name, arr in b.items():
            arr[...] = 1.0 if name.endswith("running_var") else 0.0
    return net


def fresh_column_std(fan_in: int, slope: float) -> float:
    """Standard deviation of a He-initialised first-layer weight."""
    return float(np.sqrt(2.0 / ((1.0 + slope**2) * fan_in)))


# Fusion-weight settings for (source, target) training, per task.
TRANSFER_LAMBDAS: dict[Task, tuple[tuple[float, float], tuple[float, float]]] = {
    Task.HUI: ((0.999, 0.5), (0.5, 0.5)),
    Task.FI: ((0.999, 0.6), (0.999, 0.6)),
    Task.AR: ((0.5, 0.5), (0.999, 0.5)),
}


@dataclass
class TransferReport:
    source: MiningResult
    target: MiningResult
    scratch: MiningResult
    alignment: ItemAlignment

    @property
    def tgt_curve(self) -> list[int]:
        return [log.cumulative_unique for log in self.target.logs]

    @property
    def scratch_curve(self) -> list[int]:
        return [log.cumulative_unique for log in self.scratch.logs]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["episode", "tgt_cumulative", "scratch_cumulative"])
        for e, (a, c) in enumerate(zip(self.tgt_curve, self.scratch_curve)):
            w.writerow([e, a, c])
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def transfer_experiment(db: TransactionDatabase, config: RunConfig, use_presets: bool = True,
                        reset_bn_stats: bool = False, source_db: TransactionDatabase | None = None,
                        target_db: TransactionDatabase | None = None) -> TransferReport:
    """Train on the source partition, transfer, then retrain on the target next to a scratch run.

    Partitions default to the first 60% / last 40% of ``db``.  Thresholds given
    as percentages are resolved per partition.  Target and scratch runs share
    the seed, so they differ only in the starting network.
    """
    if config.agent not in ("basic", "fusion"):
        raise TransferError("transfer needs a training agent (basic or fusion)")
    if source_db is None or target_db is None:
        source_db, target_db = split_source_target(db)
    src_cfg, tgt_cfg = config, config
    if use_presets:
        (ls, le), (lt, lte) = TRANSFER_LAMBDAS[Task(config.task)]
        src_cfg = replace(config, lam_start=ls, lam_end=le)
        tgt_cfg = replace(config, lam_start=lt, lam_end=lte)

    source = run(source_db, src_cfg)
    tgt_pruned, _ = prepare(target_db, tgt_cfg)
    alignment = align_items(source.db, tgt_pruned)
    tgt_spec = spec_for_task(config.task, tgt_pruned.n_items, config.widths)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    start = transfer_network(source.net, alignment, tgt_spec, rng, reset_bn_stats)
    target = run(target_db, tgt_cfg, initial_net=start)
    scratch = run(target_db, tgt_cfg)
    return TransferReport(source, target, scratch, alignment)
