"""Normalized, provenance-tagged patch samples and the JSON-lines manifest.

Every adapter ends here: one SampleRecord per labeled patch, carrying where
it came from (dataset, scenario, camera, day) so splits can stay temporally
honest and evaluation can stay cross-dataset.
"""

from __future__ import annotations

import datetime as dt
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import cv2
import numpy as np

from .errors import DataError, ManifestError

EMPTY = "empty"
OCCUPIED = "occupied"
LABELS = (EMPTY, OCCUPIED)  # index 0 / 1 everywhere, including posteriors

KNOWN_DATASETS = ("PKLot", "CNRExt", "NDISPark", "BarryStreet")

# JSON-lines manifest field order (dates ISO-8601, optional fields omitted)
_MANIFEST_FIELDS = (
    "dataset_id",
    "scenario_key",
    "camera_id",
    "day",
    "timestamp",
    "spot_id",
    "label",
    "patch_path",
    "weather_tag",
    "day_synthetic",
)


@dataclass(frozen=True, order=True)
class SampleRecord:
    """One labeled parking-spot patch with full provenance."""

    dataset_id: str
    scenario_key: str
    camera_id: str
    day: dt.date
    spot_id: str
    label: str
    patch_path: str
    timestamp: dt.time | None = None
    weather_tag: str | None = None
    day_synthetic: bool = False  # day derived from file order, not capture time

    def __post_init__(self):
        if self.label not in LABELS:
            raise DataError(f"label must be one of {LABELS}, got {self.label!r}")
        if not isinstance(self.day, dt.date):
            raise DataError(f"day must be a date, got {type(self.day).__name__}")

    def sort_key(self) -> tuple:
        """Canonical ordering used for deterministic merges and sampling."""
        ts = self.timestamp.isoformat() if self.timestamp else ""
        return (
            self.dataset_id,
            self.scenario_key,
            self.day.isoformat(),
            ts,
            self.camera_id,
            self.spot_id,
            self.patch_path,
        )

    def to_json_obj(self) -> dict:
        obj = {
            "dataset_id": self.dataset_id,
            "scenario_key": self.scenario_key,
            "camera_id": self.camera_id,
            "day": self.day.isoformat(),
            "spot_id": self.spot_id,
            "label": self.label,
            "patch_path": self.patch_path,
        }
        if self.timestamp is not None:
            obj["timestamp"] = self.timestamp.isoformat()
        if self.weather_tag is not None:
            obj["weather_tag"] = self.weather_tag
        if self.day_synthetic:
            obj["day_synthetic"] = True
        return obj

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SampleRecord":
        ts = obj.get("timestamp")
        return cls(
            dataset_id=str(obj["dataset_id"]),
            scenario_key=str(obj["scenario_key"]),
            camera_id=str(obj["camera_id"]),
            day=dt.date.fromisoformat(obj["day"]),
            spot_id=str(obj["spot_id"]),
            label=str(obj["label"]),
            patch_path=str(obj["patch_path"]),
            timestamp=dt.time.fromisoformat(ts) if ts else None,
            weather_tag=obj.get("weather_tag"),
            day_synthetic=bool(obj.get("day_synthetic", False)),
        )


class DatasetIndex:
    """An ordered collection of SampleRecords with per-scenario bookkeeping.

    Counts and day sets are recomputed from the records, so they can never
    drift out of sync with them.
    """

    def __init__(self, records: Iterable[SampleRecord]):
        self.records: tuple[SampleRecord, ...] = tuple(records)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[SampleRecord]:
        return iter(self.records)

    def __eq__(self, other) -> bool:
        return isinstance(other, DatasetIndex) and self.records == other.records

    def scenarios(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.scenario_key, None)
        return list(seen)

    def dataset_ids(self) -> set[str]:
        return {r.dataset_id for r in self.records}

    def for_scenario(self, scenario_key: str) -> list[SampleRecord]:
        return [r for r in self.records if r.scenario_key == scenario_key]

    def label_counts(self, scenario_key: str | None = None) -> Counter:
        recs = self.records if scenario_key is None else self.for_scenario(scenario_key)
        return Counter(r.label for r in recs)

    def days(self, scenario_key: str | None = None) -> list[dt.date]:
        recs = self.records if scenario_key is None else self.for_scenario(scenario_key)
        return sorted({r.day for r in recs})

    def summary(self) -> str:
        lines = [f"total samples: {len(self.records)}"]
        for key in self.scenarios():
            counts = self.label_counts(key)
            days = self.days(key)
            lines.append(
                f"  {key}: {sum(counts.values())} samples "
                f"({counts[OCCUPIED]} occupied / {counts[EMPTY]} empty), "
                f"{len(days)} day(s)"
            )
        return "\n".join(lines)


def write_manifest(index: DatasetIndex, path: str | Path) -> None:
    """One JSON object per line, UTF-8, in record order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in index.records:
            fh.write(json.dumps(rec.to_json_obj(), separators=(",", ":")) + "\n")


def read_manifest(path: str | Path, verify_patches: bool = False) -> DatasetIndex:
    """Parse a JSON-lines manifest; any malformed line is a hard error."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    records: list[SampleRecord] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}: line {lineno}: invalid JSON ({exc.msg})") from exc
            try:
                records.append(SampleRecord.from_json_obj(obj))
            except (KeyError, ValueError, DataError) as exc:
                raise ManifestError(f"{path}: line {lineno}: {exc}") from exc
    index = DatasetIndex(records)
    if verify_patches:
        missing = verify_patch_files(index)
        if missing:
            raise ManifestError(
                f"{path}: {len(missing)} patch file(s) missing or unreadable, "
                f"first: {missing[0]}"
            )
    return index


def load_patch(record: SampleRecord) -> np.ndarray:
    """Decode a record's patch as an RGB uint8 array."""
    img = cv2.imread(record.patch_path, cv2.IMREAD_COLOR)
    if img is None:
        raise DataError(f"cannot decode patch {record.patch_path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def verify_patch_files(index: DatasetIndex) -> list[str]:
    """Paths whose patch file is absent; does not decode (fast check)."""
    return [r.patch_path for r in index.records if not Path(r.patch_path).is_file()]
