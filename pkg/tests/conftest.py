from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np
import pytest

from parkwatch.augment import AugmentParams
from parkwatch.backbones import default_spec
from parkwatch.fusion import (
    MetaModel,
    Pool,
    build_single_model,
    train_dynse_selector,
    train_pool,
    train_stacking_meta,
)
from parkwatch.records import DatasetIndex, SampleRecord
from parkwatch.splits import temporal_split
from parkwatch.synthetic import generate_corpus
from parkwatch.training import TrainConfig


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion, after capture ends."""
    try:
        from test_acceptance import VERDICTS
    except ImportError:
        return
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)


def make_record(
    i: int = 0,
    label: str = "occupied",
    day: dt.date = dt.date(2024, 1, 1),
    scenario: str = "A",
    dataset: str = "PKLot",
    patch_path: str | None = None,
    timestamp: dt.time | None = None,
) -> SampleRecord:
    """Metadata-only record for logic tests that never touch the patch file."""
    return SampleRecord(
        dataset_id=dataset,
        scenario_key=scenario,
        camera_id=scenario,
        day=day,
        timestamp=timestamp,
        spot_id=f"S{i}",
        label=label,
        patch_path=patch_path or f"/nonexistent/{scenario}/{i}.png",
    )


def write_png(path: Path, img: np.ndarray) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    assert cv2.imwrite(str(path), cv2.cvtColor(img, cv2.COLOR_RGB2BGR))


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> DatasetIndex:
    """3 synthetic scenarios x 160 samples x 4 days, 40 px patches."""
    root = tmp_path_factory.mktemp("corpus")
    return generate_corpus(
        root,
        scenarios=("alpha", "beta", "gamma"),
        samples_per_scenario=160,
        days=4,
        size=40,
        seed=11,
    )


@dataclass
class TrainedArtifacts:
    pool: Pool
    single: object
    stack_svm: MetaModel
    stack_mlp: MetaModel
    selector: MetaModel
    splits: list
    corpus: DatasetIndex
    config: TrainConfig


@pytest.fixture(scope="session")
def trained(small_corpus) -> TrainedArtifacts:
    """conv3 pool + single model + metas trained on alpha/beta (fast config)."""
    config = TrainConfig(
        batch_size=32,
        max_epochs=20,
        early_stop_patience=8,
        augment=AugmentParams(seed=5),
        seed=5,
    )
    splits = [temporal_split(small_corpus, k, seed=5) for k in ("alpha", "beta")]
    spec = default_spec("conv3")
    pool = train_pool(splits, spec, config)
    single = build_single_model(splits, spec, config)
    train_records = [r for s in splits for r in s.train]
    stack_svm = train_stacking_meta(pool, train_records, kind="svm", seed=5)
    stack_mlp = train_stacking_meta(pool, train_records, kind="mlp", seed=5)
    selector = train_dynse_selector(splits, spec, config)
    return TrainedArtifacts(
        pool=pool,
        single=single,
        stack_svm=stack_svm,
        stack_mlp=stack_mlp,
        selector=selector,
        splits=splits,
        corpus=small_corpus,
        config=config,
    )


# ------------------------------------------------ fixture dataset trees ----


def build_pklot_segmented_tree(root: Path, per_day: int = 4) -> int:
    """Miniature PKLotSegmented layout; returns expected record count."""
    rng = np.random.default_rng(3)
    count = 0
    for scenario in ("UFPR04", "UFPR05"):
        for weather in ("Sunny", "Rainy"):
            for day_idx in range(3):
                day = dt.date(2012, 9, 10 + day_idx)
                for label_dir, n in (("Empty", per_day), ("Occupied", per_day)):
                    for k in range(n):
                        stem = f"{day.isoformat()}_{8 + k:02d}_{5 * k % 60:02d}_00#{k + 1:03d}"
                        path = (
                            root / "PKLotSegmented" / scenario / weather
                            / day.isoformat() / label_dir / f"{stem}.jpg"
                        )
                        img = rng.integers(0, 255, size=(24, 20, 3), dtype=np.uint8)
                        write_png(path.with_suffix(".png"), img)
                        path.with_suffix(".png").rename(path)
                        count += 1
    return count


def build_pklot_xml_tree(root: Path) -> int:
    """Miniature full-frame PKLot layout with per-frame XML; returns count."""
    rng = np.random.default_rng(4)
    count = 0
    scenario_dir = root / "PKLot" / "PUCPR" / "Cloudy"
    for day_idx in range(3):
        day = dt.date(2012, 10, 1 + day_idx)
        day_dir = scenario_dir / day.isoformat()
        day_dir.mkdir(parents=True, exist_ok=True)
        for f_idx in range(2):
            stem = f"{day.isoformat()}_{9 + f_idx:02d}_30_00"
            frame = rng.integers(0, 255, size=(120, 160, 3), dtype=np.uint8)
            assert cv2.imwrite(str(day_dir / f"{stem}.jpg"), frame)
            spaces = []
            for s_idx in range(3):
                x = 10 + 45 * s_idx
                occupied = (f_idx + s_idx) % 2
                spaces.append(
                    f'<space id="{s_idx + 1}" occupied="{occupied}">'
                    "<rotatedRect>"
                    f'<center x="{x + 15}" y="50"/><size w="30" h="40"/><angle d="0"/>'
                    "</rotatedRect><contour>"
                    f'<point x="{x}" y="30"/><point x="{x + 30}" y="32"/>'
                    f'<point x="{x + 32}" y="70"/><point x="{x - 2}" y="68"/>'
                    "</contour></space>"
                )
                count += 1
            xml = f'<parking id="PUCPR">{"".join(spaces)}</parking>'
            (day_dir / f"{stem}.xml").write_text(xml)
    return count


def build_cnr_tree(root: Path, cameras: int = 2, per_camera: int = 6) -> int:
    """Miniature CNR-EXT patch layout with LABELS/all.txt; returns count."""
    rng = np.random.default_rng(5)
    lines = []
    count = 0
    for cam in range(1, cameras + 1):
        for day_idx in range(3):
            day = dt.date(2015, 11, 12 + day_idx)
            for k in range(per_camera):
                rel = (
                    f"SUNNY/{day.isoformat()}/camera{cam}/"
                    f"S_{day.isoformat()}_{7 + k:02d}.{5 * k % 60:02d}_C{cam:02d}_{k}.jpg"
                )
                path = root / "PATCHES" / rel
                img = rng.integers(0, 255, size=(30, 30, 3), dtype=np.uint8)
                write_png(path.with_suffix(".png"), img)
                path.with_suffix(".png").rename(path)
                lines.append(f"{rel} {k % 2}")
                count += 1
    labels = root / "LABELS"
    labels.mkdir(parents=True, exist_ok=True)
    (labels / "all.txt").write_text("\n".join(lines) + "\n")
    return count


def build_frame_json_tree(root: Path, frames: int = 3, spots: int = 4,
                          with_days: bool = True) -> int:
    """Miniature frames/ + annotations/ layout; returns labeled spot count."""
    rng = np.random.default_rng(6)
    count = 0
    for f_idx in range(frames):
        frame = rng.integers(0, 255, size=(90, 140, 3), dtype=np.uint8)
        name = f"frame_{f_idx:03d}"
        fpath = root / "frames" / f"{name}.png"
        fpath.parent.mkdir(parents=True, exist_ok=True)
        assert cv2.imwrite(str(fpath), frame)
        spot_list = []
        for s_idx in range(spots):
            x = 5 + 32 * s_idx
            spot_list.append(
                {
                    "spot_id": f"S{s_idx + 1}",
                    "points": [[x, 20], [x + 25, 22], [x + 27, 60], [x - 1, 58]],
                    "label": "occupied" if (f_idx + s_idx) % 2 == 0 else "empty",
                }
            )
            count += 1
        ann = {
            "camera_id": "cam1",
            "spots": spot_list,
        }
        if with_days:
            ann["day"] = (dt.date(2021, 3, 1) + dt.timedelta(days=f_idx)).isoformat()
            ann["time"] = f"{10 + f_idx:02d}:30:00"
        apath = root / "annotations" / f"{name}.json"
        apath.parent.mkdir(parents=True, exist_ok=True)
        apath.write_text(json.dumps(ann))
    return count
