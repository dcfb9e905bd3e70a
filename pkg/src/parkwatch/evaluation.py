"""Cross-dataset evaluation harness.

Frameworks are wrapped as predictors that map patch batches to labels and
confidences; the harness scores them on target scenarios their training
corpus never saw, then aggregates seeded runs into mean (std) cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .backbones import ModelHandle, predict_proba, resize_patches
from .errors import CrossDatasetViolation, DataError
from .fusion import (
    MetaModel,
    Pool,
    dynse_predict_batch,
    fuse_votes,
    pool_posteriors,
    stacking_predict_batch,
)
from .records import LABELS, OCCUPIED, DatasetIndex, SampleRecord, load_patch

FRAMEWORK_LABELS = {
    "single_model": "Single Model",
    "dynamic_selection": "Dynamic Sel",
    "majority_vote": "Majority Vote",
    "stacking_svm": "Stacking (SVM)",
    "stacking_mlp": "Stacking (MLP)",
}

BACKBONE_LABELS = {
    "conv3": "3-Conv. Layers Architecture",
    "mobilenetv3_large": "MobileNetV3 Architecture",
    "resnet50": "ResNet-50 Architecture",
}


class SingleModelPredictor:
    kind = "single_model"

    def __init__(self, model: ModelHandle, source_dataset_ids: Iterable[str]):
        self.model = model
        self.backbone_family = model.spec.family
        self.input_size = model.input_size
        self.source_dataset_ids = frozenset(source_dataset_ids)

    def predict(self, patches: np.ndarray) -> tuple[list[str], np.ndarray]:
        probs = predict_proba(self.model, resize_patches(patches, self.input_size))
        idx = probs.argmax(axis=1)
        return [LABELS[i] for i in idx], probs.max(axis=1)


class MajorityVotePredictor:
    kind = "majority_vote"

    def __init__(self, pool: Pool, source_dataset_ids: Iterable[str]):
        self.pool = pool
        self.backbone_family = pool.family
        self.input_size = pool.members[0][1].input_size
        self.source_dataset_ids = frozenset(source_dataset_ids)

    def predict(self, patches: np.ndarray) -> tuple[list[str], np.ndarray]:
        member_probs = pool_posteriors(self.pool, patches).reshape(
            len(patches), len(self.pool), 2
        )
        labels: list[str] = []
        confs = np.empty(len(patches))
        for i, block in enumerate(member_probs):
            label, tally = fuse_votes(block)
            labels.append(label)
            confs[i] = max(tally["mean_posterior"])
        return labels, confs


class StackingPredictor:
    def __init__(self, pool: Pool, meta: MetaModel, source_dataset_ids: Iterable[str]):
        self.pool = pool
        self.meta = meta
        self.kind = meta.kind  # stacking_svm / stacking_mlp
        self.backbone_family = pool.family
        self.input_size = pool.members[0][1].input_size
        self.source_dataset_ids = frozenset(source_dataset_ids)

    def predict(self, patches: np.ndarray) -> tuple[list[str], np.ndarray]:
        idx, confs = stacking_predict_batch(self.pool, self.meta, patches)
        return [LABELS[i] for i in idx], confs


class DynamicSelectionPredictor:
    kind = "dynamic_selection"

    def __init__(self, pool: Pool, selector: MetaModel, source_dataset_ids: Iterable[str]):
        self.pool = pool
        self.selector = selector
        self.backbone_family = pool.family
        self.input_size = pool.members[0][1].input_size
        self.source_dataset_ids = frozenset(source_dataset_ids)

    def predict(self, patches: np.ndarray) -> tuple[list[str], np.ndarray]:
        idx, confs, _ = dynse_predict_batch(self.pool, self.selector, patches)
        return [LABELS[i] for i in idx], confs


def evaluate_framework(
    predictor,
    target: DatasetIndex | Sequence[SampleRecord],
    batch_size: int = 256,
) -> float:
    """Accuracy of a framework over all target records, no test-time balancing.

    The target must come from datasets outside the framework's training
    corpus; any overlap is a cross-dataset violation.
    """
    records = list(target.records if isinstance(target, DatasetIndex) else target)
    if not records:
        raise DataError("evaluation target is empty")
    overlap = {r.dataset_id for r in records} & set(predictor.source_dataset_ids)
    if overlap:
        raise CrossDatasetViolation(
            f"cross-dataset violation: target contains source dataset(s) {sorted(overlap)}"
        )
    correct = 0
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        patches = np.stack(
            [resize_patches(load_patch(r)[None], predictor.input_size)[0] for r in chunk]
        )
        labels, _ = predictor.predict(patches)
        correct += sum(1 for r, y in zip(chunk, labels) if r.label == y)
    return correct / len(records)


def aggregate_runs(accuracies: Sequence[float]) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation over seeded runs."""
    if len(accuracies) == 0:
        raise DataError("aggregate_runs needs at least one value")
    arr = np.asarray(accuracies, dtype=np.float64)
    if np.all(arr == arr[0]):  # equal values have zero dispersion, exactly
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std())


def format_cell(mean: float, std: float) -> str:
    """Render a fraction pair as percent: '95.0 (5.0)'."""
    return f"{mean * 100:.1f} ({std * 100:.1f})"


@dataclass(frozen=True)
class EvalCell:
    framework: str
    backbone: str
    target: str
    accuracies: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "accuracies", tuple(float(a) for a in self.accuracies))
        if not self.accuracies:
            raise DataError("EvalCell needs at least one accuracy")
        for a in self.accuracies:
            if not 0.0 <= a <= 1.0:
                raise DataError(f"accuracy out of range: {a}")

    @property
    def mean(self) -> float:
        return aggregate_runs(self.accuracies)[0]

    @property
    def std(self) -> float:
        return aggregate_runs(self.accuracies)[1]


@dataclass
class EvalReport:
    """The Tables III/IV shape: frameworks x target scenarios, plus Average.

    Per-cell std is across seeded runs; the Average column's std is across
    the row's per-target means.
    """

    source_dataset: str
    targets: tuple[str, ...]
    cells: tuple[EvalCell, ...]
    target_class_ratios: dict[str, tuple[int, int]] = field(default_factory=dict)

    def row_keys(self) -> list[tuple[str, str]]:
        seen: dict[tuple[str, str], None] = {}
        for c in self.cells:
            seen.setdefault((c.backbone, c.framework), None)
        return list(seen)

    def cell(self, backbone: str, framework: str, target: str) -> EvalCell | None:
        for c in self.cells:
            if (c.backbone, c.framework, c.target) == (backbone, framework, target):
                return c
        return None

    def average_row(self, backbone: str, framework: str) -> tuple[float, float] | None:
        means = [
            c.mean
            for t in self.targets
            if (c := self.cell(backbone, framework, t)) is not None
        ]
        if not means:
            return None
        return aggregate_runs(means)

    def to_dict(self) -> dict:
        return {
            "source_dataset": self.source_dataset,
            "targets": list(self.targets),
            "cells": [
                {
                    "framework": c.framework,
                    "backbone": c.backbone,
                    "target": c.target,
                    "accuracies": list(c.accuracies),
                }
                for c in self.cells
            ],
            "target_class_ratios": {
                k: list(v) for k, v in self.target_class_ratios.items()
            },
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            source_dataset=d["source_dataset"],
            targets=tuple(d["targets"]),
            cells=tuple(
                EvalCell(
                    framework=c["framework"],
                    backbone=c["backbone"],
                    target=c["target"],
                    accuracies=tuple(c["accuracies"]),
                )
                for c in d["cells"]
            ),
            target_class_ratios={
                k: (int(v[0]), int(v[1]))
                for k, v in d.get("target_class_ratios", {}).items()
            },
        )


def _row_cells(report: EvalReport, backbone: str, framework: str) -> list[str]:
    out = []
    for t in report.targets:
        c = report.cell(backbone, framework, t)
        out.append(format_cell(c.mean, c.std) if c is not None else "—")
    avg = report.average_row(backbone, framework)
    out.append(format_cell(*avg) if avg is not None else "—")
    return out


def _footer_lines(report: EvalReport) -> list[str]:
    lines = []
    for target in report.targets:
        ratio = report.target_class_ratios.get(target)
        if ratio is None:
            continue
        occ, emp = ratio
        total = occ + emp
        pct = 100.0 * occ / total if total else 0.0
        lines.append(f"{target}: {occ} occupied / {emp} empty ({pct:.1f}% occupied)")
    return lines


def render_report(report: EvalReport, fmt: str = "csv") -> str:
    """Deterministic CSV or markdown rendering; missing cells print an em dash."""
    if fmt not in ("csv", "markdown"):
        raise DataError(f"unknown report format {fmt!r}")
    header = ["Target Dataset / Frameworks", *report.targets, "Average"]
    if fmt == "csv":
        lines = [",".join(header)]
        for backbone, framework in report.row_keys():
            label = f"{FRAMEWORK_LABELS.get(framework, framework)} [{backbone}]"
            lines.append(",".join([label, *_row_cells(report, backbone, framework)]))
        footer = _footer_lines(report)
        if footer:
            lines.append("# target class ratios: " + "; ".join(footer))
        return "\n".join(lines) + "\n"

    lines = [
        f"# Cross-dataset accuracies, source: {report.source_dataset}",
        "",
        "| " + " | ".join(header) + " |",
        "|" + "|".join(["---"] * len(header)) + "|",
    ]
    current_backbone = None
    for backbone, framework in report.row_keys():
        if backbone != current_backbone:
            title = BACKBONE_LABELS.get(backbone, backbone)
            lines.append(
                "| " + " | ".join([f"**{title}**"] + [""] * (len(header) - 1)) + " |"
            )
            current_backbone = backbone
        row = [FRAMEWORK_LABELS.get(framework, framework)]
        row += _row_cells(report, backbone, framework)
        lines.append("| " + " | ".join(row) + " |")
    footer = _footer_lines(report)
    if footer:
        lines += ["", "Target class ratios: " + "; ".join(footer)]
    return "\n".join(lines) + "\n"


def class_ratios(records: Iterable[SampleRecord]) -> tuple[int, int]:
    occ = emp = 0
    for r in records:
        if r.label == OCCUPIED:
            occ += 1
        else:
            emp += 1
    return occ, emp


def write_report(report: EvalReport, directory: str | Path) -> None:
    """report.csv and report.md under the experiment directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "report.csv").write_text(render_report(report, "csv"), encoding="utf-8")
    (directory / "report.md").write_text(render_report(report, "markdown"), encoding="utf-8")
