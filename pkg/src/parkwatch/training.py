"""Training protocol: Adam, batches of 64, cross-entropy, plateau LR decay,
early stopping on validation accuracy, seeded repetition.

The determinism contract covers data order, majority-class subsampling, and
augmentation draws; bit-level float reproducibility across hardware is not
promised.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
from torch import nn

from .augment import AugmentParams, apply_draw, draw_for
from .backbones import (
    BackboneSpec,
    ModelHandle,
    build_model,
    patches_to_tensor,
    resize_patches,
    save_model,
)
from .errors import DataError, TrainingDiverged
from .records import LABELS, SampleRecord, load_patch
from .splits import ScenarioSplit, temporal_split

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    initial_lr: float = 1e-3
    lr_factor: float = 0.1
    lr_patience: int = 3  # epochs without val improvement before decay
    max_epochs: int = 30
    early_stop_patience: int = 7
    augment: AugmentParams = AugmentParams()
    augment_at_patch_resolution: bool = True  # rotate at stored size, then resize
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")
        if self.initial_lr <= 0:
            raise DataError("initial_lr must be > 0")
        if self.max_epochs < 1:
            raise DataError("max_epochs must be >= 1")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "initial_lr": self.initial_lr,
            "lr_factor": self.lr_factor,
            "lr_patience": self.lr_patience,
            "max_epochs": self.max_epochs,
            "early_stop_patience": self.early_stop_patience,
            "augment": self.augment.to_dict(),
            "augment_at_patch_resolution": self.augment_at_patch_resolution,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "augment" in d:
            d["augment"] = AugmentParams.from_dict(d["augment"])
        return cls(**d)


@dataclass
class TrainRun:
    """Outcome of one seeded training: the restored-best model + history."""

    model: ModelHandle
    history: list[dict]
    chosen_epoch: int  # 1-based; argmax of val accuracy, ties earliest
    seed: int

    def val_accuracies(self) -> list[float]:
        return [row["val_acc"] for row in self.history]


class BestEpochTracker:
    """Tracks the best validation accuracy; ties keep the earliest epoch."""

    def __init__(self):
        self.best_acc = -math.inf
        self.best_epoch = 0
        self.epochs_since_best = 0
        self.epoch = 0

    def update(self, val_acc: float) -> bool:
        """Record one epoch's accuracy; returns True on strict improvement."""
        self.epoch += 1
        if val_acc > self.best_acc:
            self.best_acc = val_acc
            self.best_epoch = self.epoch
            self.epochs_since_best = 0
            return True
        self.epochs_since_best += 1
        return False

    def should_stop(self, patience: int) -> bool:
        return self.epochs_since_best >= patience


class PlateauLR:
    """Multiply LR by `factor` after `patience` epochs without improvement."""

    def __init__(self, optimizer: torch.optim.Optimizer, factor: float, patience: int):
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.best = -math.inf
        self.stale = 0

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    def step(self, val_acc: float) -> None:
        if val_acc > self.best:
            self.best = val_acc
            self.stale = 0
            return
        self.stale += 1
        if self.stale >= self.patience:
            for group in self.optimizer.param_groups:
                group["lr"] *= self.factor
            self.stale = 0


class _PatchSource:
    """Loads record patches, with an in-memory cache for small corpora."""

    def __init__(self, records: Sequence[SampleRecord], cache_limit: int = 50_000):
        self.records = list(records)
        self._cache: dict[str, np.ndarray] = {}
        self._cache_enabled = len(self.records) <= cache_limit

    def patch(self, record: SampleRecord) -> np.ndarray:
        if self._cache_enabled and record.patch_path in self._cache:
            return self._cache[record.patch_path]
        img = load_patch(record)
        if self._cache_enabled:
            self._cache[record.patch_path] = img
        return img


def _records_to_arrays(
    records: Sequence[SampleRecord],
    source: _PatchSource,
    input_size: int,
    class_of: Callable[[SampleRecord], int],
) -> tuple[np.ndarray, np.ndarray]:
    patches = np.stack(
        [resize_patches(source.patch(r)[None], input_size)[0] for r in records]
    )
    ys = np.array([class_of(r) for r in records], dtype=np.int64)
    return patches, ys


def _eval_accuracy(module: nn.Module, spec: BackboneSpec, patches: np.ndarray,
                   ys: np.ndarray, batch_size: int = 256) -> float:
    module.eval()
    correct = 0
    with torch.no_grad():
        for i in range(0, len(patches), batch_size):
            x = patches_to_tensor(patches[i : i + batch_size], spec)
            pred = module(x).argmax(dim=1).numpy()
            correct += int((pred == ys[i : i + batch_size]).sum())
    return correct / len(ys)


def occupancy_class(record: SampleRecord) -> int:
    return LABELS.index(record.label)


def fit_classifier(
    model: ModelHandle,
    train_records: Sequence[SampleRecord],
    val_records: Sequence[SampleRecord],
    config: TrainConfig,
    class_of: Callable[[SampleRecord], int] = occupancy_class,
) -> TrainRun:
    """Shared training loop for occupancy models and scenario selectors.

    Restores the weights of the best-validation epoch before returning.
    """
    if not train_records:
        raise DataError("training set is empty")
    if not val_records:
        raise DataError("validation set is empty")

    torch.manual_seed(config.seed)
    spec = model.spec
    module = model.module
    source = _PatchSource(list(train_records) + list(val_records))
    val_patches, val_ys = _records_to_arrays(val_records, source, spec.input_size, class_of)

    trainable = [p for p in module.parameters() if p.requires_grad]
    optimizer = torch.optim.Adam(trainable, lr=config.initial_lr)
    scheduler = PlateauLR(optimizer, config.lr_factor, config.lr_patience)
    loss_fn = nn.CrossEntropyLoss()
    tracker = BestEpochTracker()
    best_state: dict | None = None

    history: list[dict] = []
    train_list = list(train_records)
    global_step = 0
    for epoch in range(1, config.max_epochs + 1):
        lr_in_effect = scheduler.lr
        order = np.random.default_rng(
            np.random.SeedSequence([config.seed & 0xFFFFFFFF, epoch])
        ).permutation(len(train_list))
        module.train()
        losses: list[float] = []
        correct = 0
        for start in range(0, len(order), config.batch_size):
            idx = order[start : start + config.batch_size]
            batch_records = [train_list[i] for i in idx]
            patches = []
            for j, rec in enumerate(batch_records):
                p = source.patch(rec)
                d = draw_for(config.augment, global_step, j)
                if config.augment_at_patch_resolution:
                    p = apply_draw(p, d)
                    p = resize_patches(p[None], spec.input_size)[0]
                else:
                    p = resize_patches(p[None], spec.input_size)[0]
                    p = apply_draw(p, d)
                patches.append(p)
            x = patches_to_tensor(np.stack(patches), spec)
            y = torch.tensor([class_of(r) for r in batch_records], dtype=torch.long)
            optimizer.zero_grad()
            logits = module(x)
            loss = loss_fn(logits, y)
            if not torch.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, step {global_step}"
                )
            loss.backward()
            optimizer.step()
            losses.append(float(loss.detach()))
            correct += int((logits.argmax(dim=1) == y).sum())
            global_step += 1

        val_acc = _eval_accuracy(module, spec, val_patches, val_ys)
        history.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(losses)),
                "train_acc": correct / len(train_list),
                "val_acc": val_acc,
                "lr": lr_in_effect,
            }
        )
        if tracker.update(val_acc):
            best_state = copy.deepcopy(module.state_dict())
        scheduler.step(val_acc)
        if tracker.should_stop(config.early_stop_patience):
            log.info("early stop after epoch %d (best epoch %d)", epoch, tracker.best_epoch)
            break

    if best_state is not None:
        module.load_state_dict(best_state)
    model.metadata.update(
        {
            "seed": config.seed,
            "chosen_epoch": tracker.best_epoch,
            "val_accuracy": tracker.best_acc,
        }
    )
    return TrainRun(model=model, history=history, chosen_epoch=tracker.best_epoch, seed=config.seed)


def union_records(
    splits: ScenarioSplit | Sequence[ScenarioSplit],
) -> tuple[list[SampleRecord], list[SampleRecord]]:
    """Concatenate train and val sets across splits (single-model recipe)."""
    if isinstance(splits, ScenarioSplit):
        splits = [splits]
    train: list[SampleRecord] = []
    val: list[SampleRecord] = []
    for s in splits:
        train.extend(s.train)
        val.extend(s.val)
    return train, val


def train(
    model: ModelHandle,
    splits: ScenarioSplit | Sequence[ScenarioSplit],
    config: TrainConfig,
) -> TrainRun:
    """Train an occupancy classifier over one split or a union of splits."""
    train_records, val_records = union_records(splits)
    run = fit_classifier(model, train_records, val_records, config)
    keys = [splits.scenario_key] if isinstance(splits, ScenarioSplit) else [
        s.scenario_key for s in splits
    ]
    model.metadata["scenario_keys"] = keys
    return run


def persist_run(run: TrainRun, directory: str | Path, config: TrainConfig) -> None:
    """Write config copy, history.csv, and the model directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2) + "\n", encoding="utf-8"
    )
    with (directory / "history.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=["epoch", "train_loss", "train_acc", "val_acc", "lr"]
        )
        writer.writeheader()
        writer.writerows(run.history)
    save_model(run.model, directory / "model")


def run_seeds(
    index,
    scenario_keys: Sequence[str],
    spec: BackboneSpec,
    config_template: TrainConfig,
    n: int = 10,
    seeds: Sequence[int] | None = None,
    out_root: str | Path | None = None,
    load_pretrained: bool | None = None,
) -> list[TrainRun]:
    """Repeat the single-model experiment with distinct seeds.

    Each seed re-splits (so the balancing subsample differs), re-initializes
    the model, and re-seeds the augmentation stream.
    """
    if n < 1:
        raise DataError("run_seeds needs n >= 1")
    if seeds is None:
        seeds = [config_template.seed + i for i in range(n)]
    seeds = list(seeds)[:n]
    if len(set(seeds)) != len(seeds):
        raise DataError(f"seeds must be distinct, got {seeds}")

    runs: list[TrainRun] = []
    for seed in seeds:
        splits = [temporal_split(index, key, seed=seed) for key in scenario_keys]
        config = replace(
            config_template, seed=seed, augment=replace(config_template.augment, seed=seed)
        )
        model = build_model(spec, init_seed=seed, load_pretrained=load_pretrained)
        run = train(model, splits, config)
        runs.append(run)
        if out_root is not None:
            persist_run(run, Path(out_root) / f"run-seed{seed:04d}", config)
    return runs
