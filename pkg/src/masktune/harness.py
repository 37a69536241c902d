"""End-to-end pipelines: pretraining, masked fine-tuning, evaluation, ablations.

A run is a deterministic state machine: all randomness derives from one seed
through named sub-streams (head init, subset split, epoch shuffles), so the
same config replays the same trajectory bit for bit.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, TaskPair, partition_subsets, select_mask_subset
from .errors import ConfigError, NumericError, ShapeError
from .linalg import Rng
from .losses import RegConfig, combined_grad, resolve_regular_layers
from .masking import GradientMaskSet, compute_mask_set, trainable_fraction
from .model import ModelParams, forward, init_model, reinit_head
from .optim import OptimConfig, cosine_warmup_lr, init_adam_state, masked_adam_step

# sub-stream tags; fixed so trajectories are reproducible by construction
_STREAM_HEAD = 1
_STREAM_SUBSET = 2
_STREAM_SHUFFLE = 3


@dataclass(frozen=True)
class FineTuneConfig:
    k: int
    variant: str  # row | col | sparse | full
    reg: RegConfig
    tau: float
    subsets_n: int
    optim: OptimConfig
    batch_size: int
    seed: int

    def __post_init__(self):
        if self.variant not in ("row", "col", "sparse", "full"):
            raise ConfigError(f"unknown variant {self.variant!r}")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.subsets_n < 1:
            raise ConfigError("subsets_n must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class EpochStats:
    epoch: int
    lr: float
    loss_r: float
    ce_loss: float
    test_accuracy: float


@dataclass
class TrainReport:
    epochs: list[EpochStats]
    final_accuracy: float
    trainable_fraction: float
    storage_bits: int
    weight_distances: list[float]  # per-layer ||W - W_pre||_F
    mask_subset_index: int
    seconds: float
    config: dict

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "final_accuracy": self.final_accuracy,
            "trainable_fraction": self.trainable_fraction,
            "storage_bits": self.storage_bits,
            "weight_distances": self.weight_distances,
            "mask_subset_index": self.mask_subset_index,
            "seconds": self.seconds,
            "epochs": [dataclasses.asdict(e) for e in self.epochs],
        }


def evaluate(model: ModelParams, data: Dataset) -> float:
    """Fraction of argmax-correct predictions; argmax ties go to the lowest class."""
    if model.num_classes != data.num_classes:
        raise ShapeError(f"head width {model.num_classes} != classes {data.num_classes}")
    logits, _, _ = forward(model, data.x)
    return float(np.mean(np.argmax(logits, axis=1) == data.y))


def _batches(n: int, batch_size: int, order: np.ndarray):
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _train(model: ModelParams, anchor: ModelParams, masks: GradientMaskSet,
           train: Dataset, test: Dataset, reg: RegConfig, optim: OptimConfig,
           batch_size: int, shuffle_rng: Rng) -> tuple[ModelParams, list[EpochStats]]:
    state = init_adam_state(model)
    stats: list[EpochStats] = []
    for epoch in range(optim.total_epochs):
        lr = cosine_warmup_lr(epoch, optim)
        order = shuffle_rng.permutation(len(train))
        loss_sum = ce_sum = 0.0
        for idx in _batches(len(train), batch_size, order):
            loss_r, ce, grads = combined_grad(model, anchor, train.x[idx], train.y[idx], reg)
            if not np.isfinite(loss_r):
                raise NumericError(f"non-finite loss at epoch {epoch}")
            model, state = masked_adam_step(model, state, grads, masks, lr, optim)
            loss_sum += loss_r * len(idx)
            ce_sum += ce * len(idx)
        n = len(train)
        stats.append(EpochStats(epoch, lr, loss_sum / n, ce_sum / n, evaluate(model, test)))
    return model, stats


def pretrain(task: TaskPair, dims: list[int], epochs: int, optim: OptimConfig,
             seed: int, batch_size: int = 32) -> ModelParams:
    """Full (unmasked) cross-entropy training on the source dataset."""
    rng = Rng(seed)
    model = init_model(dims, rng.child(0))
    if epochs == 0:
        return model
    optim = dataclasses.replace(optim, total_epochs=epochs)
    reg = RegConfig(lam=0.0, norm="none")
    masks = GradientMaskSet.all_full(model)
    model, _ = _train(model, model.copy(), masks, task.source, task.source,
                      reg, optim, batch_size, rng.child(_STREAM_SHUFFLE))
    return model


def _finetune_with_masks(pre: ModelParams, task: TaskPair, cfg: FineTuneConfig,
                         masks: GradientMaskSet | None) -> tuple[ModelParams, TrainReport]:
    tic = time.perf_counter()
    rng = Rng(cfg.seed)
    model = reinit_head(pre, task.target_train.num_classes, rng.child(_STREAM_HEAD))
    anchor = model.copy()

    subset_index = 0
    if masks is None:
        subsets = partition_subsets(task.target_train, cfg.subsets_n,
                                    rng.child(_STREAM_SUBSET))
        subset_index, mask_data = select_mask_subset(anchor, subsets, cfg.tau)
        masks = compute_mask_set(anchor, mask_data.x, mask_data.y,
                                 cfg.k, cfg.variant, cfg.tau)

    model, stats = _train(model, anchor, masks, task.target_train, task.target_test,
                          cfg.reg, cfg.optim, cfg.batch_size, rng.child(_STREAM_SHUFFLE))
    distances = [float(np.sqrt(np.sum((m.weight - a.weight) ** 2)))
                 for m, a in zip(model.layers, anchor.layers)]
    report = TrainReport(
        epochs=stats,
        final_accuracy=stats[-1].test_accuracy,
        trainable_fraction=trainable_fraction(model, masks),
        storage_bits=masks.total_storage_bits(),
        weight_distances=distances,
        mask_subset_index=subset_index,
        seconds=time.perf_counter() - tic,
        config=cfg.to_dict(),
    )
    return model, report


def finetune(pre: ModelParams, task: TaskPair,
             cfg: FineTuneConfig) -> tuple[ModelParams, TrainReport]:
    """Subset selection, mask computation at the pretrained weights, masked training."""
    return _finetune_with_masks(pre, task, cfg, None)


def finetune_masks(pre: ModelParams, task: TaskPair, cfg: FineTuneConfig) -> GradientMaskSet:
    """The mask set a finetune run with this config would train under."""
    rng = Rng(cfg.seed)
    anchor = reinit_head(pre, task.target_train.num_classes, rng.child(_STREAM_HEAD))
    subsets = partition_subsets(task.target_train, cfg.subsets_n,
                                rng.child(_STREAM_SUBSET))
    _, mask_data = select_mask_subset(anchor, subsets, cfg.tau)
    return compute_mask_set(anchor, mask_data.x, mask_data.y, cfg.k, cfg.variant, cfg.tau)


def linear_probe(pre: ModelParams, task: TaskPair,
                 cfg: FineTuneConfig) -> tuple[ModelParams, TrainReport]:
    """Head-only fine-tuning baseline under the same budget."""
    masks = GradientMaskSet.head_only(pre)
    return _finetune_with_masks(pre, task, cfg, masks)


ABLATION_AXES = ("k", "lambda", "regular_blocks", "subsets_n", "variant", "norm")


def _with_axis_value(cfg: FineTuneConfig, axis: str, value) -> FineTuneConfig:
    if axis == "k":
        return dataclasses.replace(cfg, k=int(value))
    if axis == "lambda":
        return dataclasses.replace(cfg, reg=dataclasses.replace(cfg.reg, lam=float(value)))
    if axis == "regular_blocks":
        regular = dataclasses.replace(cfg.reg.regular, last_l=int(value))
        return dataclasses.replace(cfg, reg=dataclasses.replace(cfg.reg, regular=regular))
    if axis == "subsets_n":
        return dataclasses.replace(cfg, subsets_n=int(value))
    if axis == "variant":
        return dataclasses.replace(cfg, variant=str(value))
    if axis == "norm":
        return dataclasses.replace(cfg, reg=dataclasses.replace(cfg.reg, norm=str(value)))
    raise ConfigError(f"unknown ablation axis {axis!r}")


def ablate(pre: ModelParams, task: TaskPair, base_cfg: FineTuneConfig,
           axis: str, values: list) -> list[TrainReport]:
    """Run finetune once per value with everything else (seeds included) fixed."""
    if not values:
        raise ConfigError("values must be non-empty")
    reports = []
    for value in values:
        _, report = finetune(pre, task, _with_axis_value(base_cfg, axis, value))
        reports.append(report)
    return reports


def write_report_json(report: TrainReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(report.to_dict(), indent=1))


def write_report_csv(report: TrainReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "lr", "loss_R", "ce_loss", "test_acc"])
        for e in report.epochs:
            writer.writerow([e.epoch, repr(e.lr), repr(e.loss_r),
                             repr(e.ce_loss), repr(e.test_accuracy)])
