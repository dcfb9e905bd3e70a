"""Temporally disjoint, class-balanced scenario splits.

The split unit is the calendar day: the earliest half of a scenario's days
feeds training, and the remaining days are halved in temporal order into
validation and test. This keeps a car parked across consecutive frames (or an
empty spot under unchanged light) from leaking between train and test.
"""

from __future__ import annotations

import datetime as dt
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, SplitError
from .records import EMPTY, OCCUPIED, DatasetIndex, SampleRecord

log = logging.getLogger(__name__)

MIN_TRAINABLE_DAYS = 3


@dataclass(frozen=True)
class ScenarioSplit:
    """Train/val/test record lists for one scenario.

    val_carved_from_train marks the degenerate fallback where a scenario has
    exactly 3 days: validation is then the temporal tail of the training
    pool's samples and shares its days, which the validator exempts.
    """

    scenario_key: str
    train: tuple[SampleRecord, ...]
    val: tuple[SampleRecord, ...]
    test: tuple[SampleRecord, ...]
    split_seed: int
    val_carved_from_train: bool = False

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(self.train))
        object.__setattr__(self, "val", tuple(self.val))
        object.__setattr__(self, "test", tuple(self.test))
        self.validate()

    def validate(self) -> None:
        train_days = {r.day for r in self.train}
        val_days = {r.day for r in self.val}
        test_days = {r.day for r in self.test}
        if train_days & test_days or val_days & test_days:
            raise SplitError(f"{self.scenario_key}: test days overlap train/val days")
        if not self.val_carved_from_train:
            if train_days & val_days:
                raise SplitError(f"{self.scenario_key}: val days overlap train days")
            if train_days and val_days and max(train_days) >= min(val_days):
                raise SplitError(f"{self.scenario_key}: val days not after train days")
        if val_days and test_days and max(val_days) >= min(test_days):
            raise SplitError(f"{self.scenario_key}: test days not after val days")
        counts = {EMPTY: 0, OCCUPIED: 0}
        for r in self.train:
            counts[r.label] += 1
        if counts[EMPTY] != counts[OCCUPIED]:
            raise SplitError(
                f"{self.scenario_key}: train not balanced "
                f"({counts[OCCUPIED]} occupied vs {counts[EMPTY]} empty)"
            )


def balance_classes(
    records: list[SampleRecord] | tuple[SampleRecord, ...], seed: int
) -> list[SampleRecord]:
    """Subsample the majority class down to the minority count, seeded.

    Records are put in canonical order first, so the retained set depends
    only on (records-as-a-set, seed), not on input order. The result is
    deterministically shuffled.
    """
    recs = sorted(records, key=SampleRecord.sort_key)
    occ = [r for r in recs if r.label == OCCUPIED]
    emp = [r for r in recs if r.label == EMPTY]
    if not occ or not emp:
        raise DataError("balance_classes needs both classes present")
    rng = np.random.default_rng(seed)
    if len(occ) > len(emp):
        keep = rng.choice(len(occ), size=len(emp), replace=False)
        occ = [occ[i] for i in sorted(keep)]
    elif len(emp) > len(occ):
        keep = rng.choice(len(emp), size=len(occ), replace=False)
        emp = [emp[i] for i in sorted(keep)]
    merged = occ + emp
    order = rng.permutation(len(merged))
    return [merged[i] for i in order]


def _temporal_order(records: list[SampleRecord]) -> list[SampleRecord]:
    midnight = dt.time(0, 0)
    return sorted(
        records, key=lambda r: (r.day, r.timestamp or midnight, r.patch_path)
    )


def temporal_split(
    index: DatasetIndex,
    scenario_key: str,
    train_ratio: float = 0.5,
    seed: int = 0,
) -> ScenarioSplit:
    """Split one scenario by day: earliest ceil(ratio*D) days train, the rest
    halved in temporal order into validation (first) and test (second).

    Scenarios with fewer than 3 distinct days cannot be split and are
    evaluation-only. With exactly 3 days the remaining day goes to test and
    validation falls back to the last 10% of the train pool's samples.
    """
    records = index.for_scenario(scenario_key)
    if not records:
        raise SplitError(f"unknown scenario {scenario_key!r}")
    days = sorted({r.day for r in records})
    if len(days) < MIN_TRAINABLE_DAYS:
        raise SplitError(
            f"scenario {scenario_key!r} has {len(days)} day(s); "
            "scenario unusable for training; evaluation-only"
        )

    n_train_days = math.ceil(train_ratio * len(days))
    train_days = set(days[:n_train_days])
    remaining = days[n_train_days:]
    n_val_days = len(remaining) // 2
    val_days = set(remaining[:n_val_days])
    test_days = set(remaining[n_val_days:])

    train_pool = [r for r in records if r.day in train_days]
    val = [r for r in records if r.day in val_days]
    test = [r for r in records if r.day in test_days]

    carved = False
    if not val:
        # Degenerate day count: carve a 10% temporal tail of the train pool.
        ordered = _temporal_order(train_pool)
        n_val = max(1, math.ceil(0.10 * len(ordered)))
        val = ordered[-n_val:]
        train_pool = ordered[:-n_val]
        carved = True
        log.warning(
            "scenario %s: no whole day left for validation; "
            "falling back to a 10%% temporal tail of train (%d samples)",
            scenario_key,
            n_val,
        )

    train = balance_classes(train_pool, seed)
    return ScenarioSplit(
        scenario_key=scenario_key,
        train=tuple(train),
        val=tuple(_temporal_order(val)),
        test=tuple(_temporal_order(test)),
        split_seed=seed,
        val_carved_from_train=carved,
    )
