"""Synthetic parking corpora for CI, smoke tests, and demos.

Three texture families stand in for distinct camera scenarios; occupancy is
the presence of a rendered vehicle-like shape, so the task is separable by
construction and any sound pipeline should score near-perfectly across
scenarios.
"""

from __future__ import annotations

import datetime as dt
from pathlib import Path

import cv2
import numpy as np

from .geometry import SpotGeometry, SpotMap, rect_points
from .records import EMPTY, OCCUPIED, DatasetIndex, SampleRecord

SCENARIO_TEXTURES = ("grating0", "grating30", "grating60")

_TEXTURES = {
    # grating angle (deg), base RGB tint; tints stay small so scenario
    # identity lives in orientation, not in any channel statistic
    "grating0": (0.0, (168.0, 172.0, 165.0)),
    "grating30": (30.0, (166.0, 169.0, 176.0)),
    "grating60": (60.0, (176.0, 171.0, 164.0)),
}


def _background(texture: str, rng: np.random.Generator, size: int) -> np.ndarray:
    """Gratings of one family, distinct per scenario only in orientation and
    hue, with matched frequency and amplitude: no background statistic
    separates occupied from empty, so the rendered vehicle is the only class
    signal that holds across scenarios.
    """
    if texture not in _TEXTURES:
        raise ValueError(f"unknown texture {texture!r}")
    angle_deg, base_rgb = _TEXTURES[texture]
    yy, xx = np.mgrid[0:size, 0:size]
    phase = rng.uniform(0, 2 * np.pi)
    period = rng.integers(5, 12)
    rad = np.radians(angle_deg)
    carrier = xx * np.sin(rad) + yy * np.cos(rad)
    base = np.array(base_rgb, dtype=np.float64)
    wave = 12 * np.sin(2 * np.pi * carrier / period + phase)
    img = base[None, None, :] + wave[..., None]
    if rng.random() < 0.35:  # distractor: a small dark speck, far from car-sized
        cx, cy = rng.integers(2, size - 2, size=2)
        cv2.circle(img, (int(cx), int(cy)), int(rng.integers(1, 3)),
                   rng.uniform(30, 80, size=3).tolist(), thickness=-1)
    img *= rng.uniform(0.88, 1.12)  # per-patch exposure jitter
    img += rng.normal(0, 6.0, size=img.shape)
    return np.clip(img, 0, 255)


def _rotated_box(cx, cy, w, h, angle_deg) -> np.ndarray:
    rad = np.radians(angle_deg)
    c, s = np.cos(rad), np.sin(rad)
    pts = []
    for dx, dy in ((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)):
        pts.append((cx + dx * c - dy * s, cy + dx * s + dy * c))
    return np.array(pts, dtype=np.int32)


def _draw_vehicle(img: np.ndarray, rng: np.random.Generator) -> None:
    size = img.shape[0]
    w = size * rng.uniform(0.5, 0.75)
    h = size * rng.uniform(0.42, 0.62)
    cx = size * rng.uniform(0.35, 0.65)
    cy = size * rng.uniform(0.35, 0.65)
    tilt = rng.uniform(-12, 12)
    body = rng.uniform(20, 90, size=3)  # dark body vs ~165 background
    cv2.fillPoly(img, [_rotated_box(cx, cy, w, h, tilt)], body.tolist())
    # windshield: bright band across the upper body
    shield = rng.uniform(190, 245, size=3)
    band = _rotated_box(cx, cy - h * 0.22, w * 0.76, h * 0.20, tilt)
    cv2.fillPoly(img, [band], shield.tolist())


def render_patch(
    texture: str, occupied: bool, rng: np.random.Generator, size: int = 48
) -> np.ndarray:
    img = _background(texture, rng, size)
    if occupied:
        _draw_vehicle(img, rng)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def generate_corpus(
    root: str | Path,
    scenarios: tuple[str, ...] = ("alpha", "beta", "gamma"),
    samples_per_scenario: int = 600,
    days: int = 6,
    size: int = 48,
    seed: int = 2024,
    start_day: dt.date = dt.date(2024, 3, 1),
) -> DatasetIndex:
    """Write a labeled multi-scenario corpus of PNG patches under root.

    Each scenario carries its own dataset_id ("synth-<name>") so held-out
    scenarios count as foreign datasets for cross-dataset evaluation.
    """
    root = Path(root)
    records: list[SampleRecord] = []
    per_day = max(1, samples_per_scenario // days)
    for s_idx, scenario in enumerate(scenarios):
        texture = SCENARIO_TEXTURES[s_idx % len(SCENARIO_TEXTURES)]
        for i in range(samples_per_scenario):
            day_idx = min(i // per_day, days - 1)
            day = start_day + dt.timedelta(days=day_idx)
            occupied = i % 2 == 0
            rng = np.random.default_rng(
                np.random.SeedSequence([seed, s_idx, day_idx, i])
            )
            patch = render_patch(texture, occupied, rng, size)
            label = OCCUPIED if occupied else EMPTY
            dest = root / scenario / day.isoformat() / f"{i:05d}_{label}.png"
            dest.parent.mkdir(parents=True, exist_ok=True)
            cv2.imwrite(str(dest), cv2.cvtColor(patch, cv2.COLOR_RGB2BGR))
            minute = (i * 7) % 60
            hour = 7 + (i // 60) % 10
            records.append(
                SampleRecord(
                    dataset_id=f"synth-{scenario}",
                    scenario_key=scenario,
                    camera_id=f"cam-{scenario}",
                    day=day,
                    timestamp=dt.time(hour, minute),
                    spot_id=f"S{i % 30}",
                    label=label,
                    patch_path=str(dest),
                )
            )
    records.sort(key=SampleRecord.sort_key)
    return DatasetIndex(records)


def render_lot_frame(
    width: int = 480,
    height: int = 360,
    rows: int = 3,
    cols: int = 5,
    occupied_fraction: float = 0.5,
    texture: str = "grating0",
    seed: int = 7,
) -> tuple[np.ndarray, SpotMap, dict[str, str]]:
    """A whole synthetic lot frame plus its SpotMap and ground-truth labels.

    Spots form a rows x cols grid; roughly occupied_fraction of them get a
    vehicle. Useful for exercising classify_frame and the annotator.
    """
    rng = np.random.default_rng(seed)
    frame = _background(texture, rng, max(width, height))[:height, :width]
    spots = []
    truth: dict[str, str] = {}
    cell_w = width // (cols + 1)
    cell_h = height // (rows + 1)
    margin_x = cell_w // 2
    margin_y = cell_h // 2
    k = 0
    for r in range(rows):
        for c in range(cols):
            x0 = margin_x + c * cell_w
            y0 = margin_y + r * cell_h
            w = int(cell_w * 0.8)
            h = int(cell_h * 0.8)
            spot_id = f"S{k + 1}"
            occupied = rng.random() < occupied_fraction
            if occupied:
                sub = frame[y0 : y0 + h, x0 : x0 + w]
                _draw_vehicle(sub, rng)
                frame[y0 : y0 + h, x0 : x0 + w] = sub
            spots.append(
                SpotGeometry(
                    spot_id=spot_id,
                    kind="axis_aligned_box",
                    points=rect_points(x0, y0, w, h),
                )
            )
            truth[spot_id] = OCCUPIED if occupied else EMPTY
            k += 1
    frame_u8 = np.clip(np.rint(frame), 0, 255).astype(np.uint8)
    spot_map = SpotMap(
        camera_id="synthetic-lot",
        reference_frame=(width, height),
        spots=tuple(spots),
        version=0,
    )
    return frame_u8, spot_map, truth
