"""Per-dataset ingestion adapters producing the normalized manifest.

Upstream layouts differ wildly (per-frame XML, CSV patch lists, per-image
JSON sidecars); each adapter owns its layout and emits SampleRecords. The
documented layouts live in docs/datasets.md. Unparseable annotations are
skipped with a warning and counted in the ingestion summary, never silently
dropped.
"""

from __future__ import annotations

import datetime as dt
import logging
import re
import xml.etree.ElementTree as ET
from pathlib import Path

import cv2
import json

from .errors import DataError, DatasetLayoutError, GeometryError
from .geometry import SpotGeometry, crop_spot
from .records import EMPTY, OCCUPIED, DatasetIndex, SampleRecord

log = logging.getLogger(__name__)

PKLOT_SCENARIOS = ("UFPR04", "UFPR05", "PUCPR")
_IMG_EXTS = (".jpg", ".jpeg", ".png")

_DATASET_ALIASES = {
    "pklot": "PKLot",
    "cnrext": "CNRExt",
    "cnrpark": "CNRExt",
    "cnr": "CNRExt",
    "ndispark": "NDISPark",
    "ndis": "NDISPark",
    "barrystreet": "BarryStreet",
    "barry": "BarryStreet",
}


def canonical_dataset_id(name: str) -> str:
    key = name.replace("-", "").replace("_", "").lower()
    if key not in _DATASET_ALIASES:
        raise DataError(f"unknown dataset id {name!r}; expected one of "
                        f"{sorted(set(_DATASET_ALIASES.values()))}")
    return _DATASET_ALIASES[key]


class _SkipCounter:
    def __init__(self, dataset_id: str):
        self.dataset_id = dataset_id
        self.count = 0

    def skip(self, what: str, reason: str) -> None:
        self.count += 1
        log.warning("%s: skipped %s: %s", self.dataset_id, what, reason)


def load_dataset(
    root: str | Path, dataset_id: str, patch_dir: str | Path | None = None
) -> DatasetIndex:
    """Ingest one upstream dataset tree into a DatasetIndex.

    patch_dir receives crops for frame-based layouts (default:
    <root>/_parkwatch_patches); patch-based layouts reference upstream files
    as-is.
    """
    root = Path(root)
    dataset_id = canonical_dataset_id(dataset_id)
    if not root.is_dir() or not any(root.iterdir()):
        raise DatasetLayoutError(f"dataset root not found/empty: {root}")
    if patch_dir is None:
        patch_dir = root / "_parkwatch_patches"

    if dataset_id == "PKLot":
        index = _load_pklot(root, Path(patch_dir))
    elif dataset_id == "CNRExt":
        index = _load_cnrext(root)
    else:
        index = _load_frame_json(root, dataset_id, Path(patch_dir))

    log.info("%s ingested from %s:\n%s", dataset_id, root, index.summary())
    return index


# ---------------------------------------------------------------- PKLot ----

_PKLOT_STEM = re.compile(r"^(\d{4}-\d{2}-\d{2})_(\d{2})_(\d{2})_(\d{2})(?:#(\d+))?$")


def _parse_pklot_stem(stem: str) -> tuple[dt.date, dt.time, str | None] | None:
    m = _PKLOT_STEM.match(stem)
    if not m:
        return None
    day = dt.date.fromisoformat(m.group(1))
    t = dt.time(int(m.group(2)), int(m.group(3)), int(m.group(4)))
    return day, t, m.group(5)


def _pklot_scenario_dirs(root: Path) -> list[Path]:
    candidates = [root, root / "PKLot", root / "PKLotSegmented",
                  root / "PKLot" / "PKLot", root / "PKLot" / "PKLotSegmented"]
    out: list[Path] = []
    seen: set[str] = set()
    for base in candidates:
        if not base.is_dir():
            continue
        for child in sorted(base.iterdir()):
            if child.is_dir() and child.name in PKLOT_SCENARIOS and str(child) not in seen:
                out.append(child)
                seen.add(str(child))
    return out


def _load_pklot(root: Path, patch_dir: Path) -> DatasetIndex:
    """PKLot: <scenario>/<weather>/<YYYY-MM-DD>/ holding either segmented
    Empty|Occupied patch dirs or full frames with per-frame XML demarcations.
    """
    scenario_dirs = _pklot_scenario_dirs(root)
    if not scenario_dirs:
        raise DatasetLayoutError(
            f"no PKLot scenario directories ({'/'.join(PKLOT_SCENARIOS)}) under {root}"
        )
    skips = _SkipCounter("PKLot")
    records: list[SampleRecord] = []
    for scen_dir in scenario_dirs:
        scenario = scen_dir.name
        for weather_dir in sorted(p for p in scen_dir.iterdir() if p.is_dir()):
            weather = weather_dir.name
            for date_dir in sorted(p for p in weather_dir.iterdir() if p.is_dir()):
                try:
                    day = dt.date.fromisoformat(date_dir.name)
                except ValueError:
                    skips.skip(str(date_dir), "directory name is not a date")
                    continue
                if (date_dir / "Empty").is_dir() or (date_dir / "Occupied").is_dir():
                    records.extend(
                        _pklot_segmented_day(date_dir, scenario, weather, day, skips)
                    )
                else:
                    records.extend(
                        _pklot_frames_day(date_dir, scenario, weather, day, patch_dir, skips)
                    )
    if skips.count:
        log.warning("PKLot: %d item(s) skipped in total", skips.count)
    records.sort(key=SampleRecord.sort_key)
    return DatasetIndex(records)


def _pklot_segmented_day(date_dir: Path, scenario: str, weather: str,
                         day: dt.date, skips: _SkipCounter) -> list[SampleRecord]:
    out = []
    for label_name, label in (("Empty", EMPTY), ("Occupied", OCCUPIED)):
        label_dir = date_dir / label_name
        if not label_dir.is_dir():
            continue
        for img in sorted(label_dir.iterdir()):
            if img.suffix.lower() not in _IMG_EXTS:
                continue
            parsed = _parse_pklot_stem(img.stem)
            if parsed is None:
                skips.skip(str(img), "unrecognized patch filename")
                continue
            _, ptime, spot = parsed
            out.append(
                SampleRecord(
                    dataset_id="PKLot",
                    scenario_key=scenario,
                    camera_id=scenario,
                    day=day,
                    timestamp=ptime,
                    spot_id=spot or img.stem,
                    label=label,
                    patch_path=str(img),
                    weather_tag=weather,
                )
            )
    return out


def _pklot_frames_day(date_dir: Path, scenario: str, weather: str, day: dt.date,
                      patch_dir: Path, skips: _SkipCounter) -> list[SampleRecord]:
    out = []
    for xml_path in sorted(date_dir.glob("*.xml")):
        frame_path = None
        for ext in _IMG_EXTS:
            cand = xml_path.with_suffix(ext)
            if cand.exists():
                frame_path = cand
                break
        if frame_path is None:
            skips.skip(str(xml_path), "no frame image next to annotation")
            continue
        try:
            spaces = _parse_pklot_xml(xml_path)
        except ET.ParseError as exc:
            skips.skip(str(xml_path), f"unparseable XML ({exc})")
            continue
        frame = cv2.imread(str(frame_path), cv2.IMREAD_COLOR)
        if frame is None:
            skips.skip(str(frame_path), "frame does not decode")
            continue
        parsed = _parse_pklot_stem(xml_path.stem)
        ptime = parsed[1] if parsed else None
        for spot_id, occupied, points in spaces:
            if occupied is None:
                skips.skip(f"{xml_path}#{spot_id}", "missing occupied attribute")
                continue
            try:
                geom = SpotGeometry(spot_id=spot_id, kind="quadrilateral",
                                    points=points)
                patch = crop_spot(frame, geom, "warp_rectify", out_size=64)
            except GeometryError as exc:
                skips.skip(f"{xml_path}#{spot_id}", str(exc))
                continue
            rel = date_dir.relative_to(date_dir.parents[2])
            dest = patch_dir / "PKLot" / rel / f"{xml_path.stem}#{spot_id}.png"
            dest.parent.mkdir(parents=True, exist_ok=True)
            cv2.imwrite(str(dest), patch)
            out.append(
                SampleRecord(
                    dataset_id="PKLot",
                    scenario_key=scenario,
                    camera_id=scenario,
                    day=day,
                    timestamp=ptime,
                    spot_id=spot_id,
                    label=OCCUPIED if occupied else EMPTY,
                    patch_path=str(dest),
                    weather_tag=weather,
                )
            )
    return out


def _parse_pklot_xml(path: Path) -> list[tuple[str, bool | None, tuple]]:
    """Yield (spot_id, occupied, contour points) per space element."""
    tree = ET.parse(path)
    out = []
    for space in tree.getroot().iter("space"):
        spot_id = space.get("id", "")
        occ_attr = space.get("occupied")
        occupied = None if occ_attr is None else occ_attr.strip() == "1"
        contour = space.find("contour")
        if contour is None:
            continue
        pts = [
            (float(p.get("x")), float(p.get("y"))) for p in contour.findall("point")
        ]
        if len(pts) != 4:
            continue
        out.append((spot_id, occupied, tuple(pts)))
    return out


# -------------------------------------------------------------- CNR-EXT ----

_CNR_CAMERA = re.compile(r"camera(\d+)", re.IGNORECASE)
_CNR_TIME = re.compile(r"_(\d{2})[.:](\d{2})_")


def _load_cnrext(root: Path) -> DatasetIndex:
    """CNR-EXT patch distribution: LABELS/*.txt lines of
    '<WEATHER>/<date>/camera<N>/<patch>.jpg <0|1>' resolved against PATCHES/.
    """
    labels_dir = root / "LABELS"
    patches_dir = root / "PATCHES"
    if not labels_dir.is_dir() or not patches_dir.is_dir():
        raise DatasetLayoutError(
            f"CNR-EXT root must contain LABELS/ and PATCHES/: {root}"
        )
    label_files = [labels_dir / "all.txt"] if (labels_dir / "all.txt").exists() else \
        sorted(labels_dir.glob("*.txt"))
    if not label_files:
        raise DatasetLayoutError(f"no label files under {labels_dir}")

    skips = _SkipCounter("CNRExt")
    records: list[SampleRecord] = []
    seen_paths: set[str] = set()
    for label_file in label_files:
        for lineno, line in enumerate(
            label_file.read_text(encoding="utf-8").splitlines(), start=1
        ):
            line = line.strip()
            if not line:
                continue
            parts = line.rsplit(None, 1)
            if len(parts) != 2 or parts[1] not in ("0", "1"):
                skips.skip(f"{label_file}:{lineno}", "malformed label line")
                continue
            rel, flag = parts
            if rel in seen_paths:
                continue
            seen_paths.add(rel)
            patch_path = patches_dir / rel
            if not patch_path.exists():
                skips.skip(rel, "patch file missing")
                continue
            segs = Path(rel).parts
            cam_match = next((m for s in segs if (m := _CNR_CAMERA.fullmatch(s))), None)
            day = None
            for s in segs:
                try:
                    day = dt.date.fromisoformat(s)
                    break
                except ValueError:
                    continue
            if cam_match is None or day is None:
                skips.skip(rel, "cannot derive camera/date from path")
                continue
            tmatch = _CNR_TIME.search(Path(rel).name)
            ts = dt.time(int(tmatch.group(1)), int(tmatch.group(2))) if tmatch else None
            weather = segs[0] if len(segs) >= 3 else None
            records.append(
                SampleRecord(
                    dataset_id="CNRExt",
                    scenario_key=f"CAM{int(cam_match.group(1))}",
                    camera_id=f"camera{int(cam_match.group(1))}",
                    day=day,
                    timestamp=ts,
                    spot_id=Path(rel).stem,
                    label=OCCUPIED if flag == "1" else EMPTY,
                    patch_path=str(patch_path),
                    weather_tag=weather,
                )
            )
    if skips.count:
        log.warning("CNRExt: %d item(s) skipped in total", skips.count)
    records.sort(key=SampleRecord.sort_key)
    return DatasetIndex(records)


# ------------------------------------------------- NDISPark/BarryStreet ----


def _load_frame_json(root: Path, dataset_id: str, patch_dir: Path) -> DatasetIndex:
    """Frame + JSON-sidecar layout: frames/*.{jpg,png} with
    annotations/<stem>.json listing labeled spot quadrilaterals.

    Frames without a capture day get synthetic days from their lexicographic
    rank, flagged day_synthetic in the manifest.
    """
    frames_dir = root / "frames"
    ann_dir = root / "annotations"
    if not frames_dir.is_dir() or not ann_dir.is_dir():
        raise DatasetLayoutError(
            f"{dataset_id} root must contain frames/ and annotations/: {root}"
        )
    skips = _SkipCounter(dataset_id)
    records: list[SampleRecord] = []
    frame_paths = sorted(
        p for p in frames_dir.iterdir() if p.suffix.lower() in _IMG_EXTS
    )
    epoch = dt.date(1970, 1, 1)
    for rank, frame_path in enumerate(frame_paths):
        ann_path = ann_dir / (frame_path.stem + ".json")
        if not ann_path.exists():
            skips.skip(str(frame_path), "no JSON annotation")
            continue
        try:
            ann = json.loads(ann_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            skips.skip(str(ann_path), f"unparseable JSON ({exc.msg})")
            continue
        frame = cv2.imread(str(frame_path), cv2.IMREAD_COLOR)
        if frame is None:
            skips.skip(str(frame_path), "frame does not decode")
            continue
        camera = str(ann.get("camera_id", "cam0"))
        scenario = str(ann.get("scenario", camera))
        day_str = ann.get("day")
        synthetic = day_str is None
        day = (
            epoch + dt.timedelta(days=rank)
            if synthetic
            else dt.date.fromisoformat(day_str)
        )
        ts = dt.time.fromisoformat(ann["time"]) if ann.get("time") else None
        for spot in ann.get("spots", []):
            spot_id = str(spot.get("spot_id", ""))
            label = spot.get("label")
            if label not in (EMPTY, OCCUPIED):
                skips.skip(f"{ann_path}#{spot_id}", f"bad label {label!r}")
                continue
            try:
                geom = SpotGeometry(
                    spot_id=spot_id,
                    kind=spot.get("kind", "quadrilateral"),
                    points=tuple((float(x), float(y)) for x, y in spot["points"]),
                )
                patch = crop_spot(frame, geom, "warp_rectify", out_size=64)
            except (GeometryError, KeyError, TypeError, ValueError) as exc:
                skips.skip(f"{ann_path}#{spot_id}", str(exc))
                continue
            dest = patch_dir / dataset_id / f"{frame_path.stem}__{spot_id}.png"
            dest.parent.mkdir(parents=True, exist_ok=True)
            cv2.imwrite(str(dest), patch)
            records.append(
                SampleRecord(
                    dataset_id=dataset_id,
                    scenario_key=scenario,
                    camera_id=camera,
                    day=day,
                    timestamp=ts,
                    spot_id=spot_id,
                    label=label,
                    patch_path=str(dest),
                    weather_tag=ann.get("weather"),
                    day_synthetic=synthetic,
                )
            )
    if skips.count:
        log.warning("%s: %d item(s) skipped in total", dataset_id, skips.count)
    records.sort(key=SampleRecord.sort_key)
    return DatasetIndex(records)
