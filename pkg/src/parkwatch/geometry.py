"""Parking-spot geometry: demarcated quadrilaterals and per-spot cropping.

Coordinates live in the continuous image domain [0, width] x [0, height] with
the origin at the top-left corner and y growing downward. A spot is always
four points; the convention is clockwise order starting from the top-left
corner of the space. Cropping maps those four corners onto the corner pixel
centers of a square output patch.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .errors import GeometryError

SPOT_KINDS = ("rotated_rect", "quadrilateral", "axis_aligned_box")
CROP_POLICIES = ("warp_rectify", "bounding_box", "fixed_square")

Point = tuple[float, float]


@dataclass(frozen=True)
class SpotGeometry:
    """One demarcated parking space: four image-coordinate corners."""

    spot_id: str
    kind: str
    points: tuple[Point, Point, Point, Point]
    angle: float | None = None  # degrees, rotated_rect only

    def __post_init__(self):
        if self.kind not in SPOT_KINDS:
            raise GeometryError(f"spot {self.spot_id!r}: unknown kind {self.kind!r}")
        if len(self.points) != 4:
            raise GeometryError(
                f"spot {self.spot_id!r}: expected 4 points, got {len(self.points)}"
            )
        pts = tuple((float(x), float(y)) for x, y in self.points)
        object.__setattr__(self, "points", pts)
        for x, y in pts:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise GeometryError(f"spot {self.spot_id!r}: non-finite coordinate")
        if abs(polygon_area(pts)) <= 0.0:
            raise GeometryError(f"spot {self.spot_id!r}: polygon area is zero")
        if not is_simple_quad(pts):
            raise GeometryError(f"spot {self.spot_id!r}: polygon self-intersects")

    def bounds(self) -> tuple[float, float, float, float]:
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return min(xs), min(ys), max(xs), max(ys)

    def centroid(self) -> Point:
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return sum(xs) / 4.0, sum(ys) / 4.0

    def within_frame(self, width: int, height: int) -> bool:
        x0, y0, x1, y1 = self.bounds()
        return x0 >= 0 and y0 >= 0 and x1 <= width and y1 <= height

    def to_dict(self) -> dict:
        d = {
            "spot_id": self.spot_id,
            "kind": self.kind,
            "points": [[x, y] for x, y in self.points],
        }
        if self.angle is not None:
            d["angle"] = self.angle
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpotGeometry":
        return cls(
            spot_id=str(d["spot_id"]),
            kind=d["kind"],
            points=tuple((float(x), float(y)) for x, y in d["points"]),
            angle=float(d["angle"]) if d.get("angle") is not None else None,
        )


@dataclass(frozen=True)
class SpotMap:
    """All demarcated spots for one camera, versioned.

    The once-only setup artifact: drawn by hand in the annotator, stored by
    the service, and reused for every classified frame afterwards.
    """

    camera_id: str
    reference_frame: tuple[int, int]  # (width, height) in pixels
    spots: tuple[SpotGeometry, ...] = field(default_factory=tuple)
    version: int = 0

    def __post_init__(self):
        object.__setattr__(self, "spots", tuple(self.spots))
        w, h = self.reference_frame
        if w <= 0 or h <= 0:
            raise GeometryError(f"camera {self.camera_id!r}: bad reference frame {w}x{h}")
        offenders = self.invalid_spot_ids()
        if offenders:
            raise GeometryError(
                f"camera {self.camera_id!r}: spots outside reference frame "
                f"or duplicated ids: {sorted(offenders)}"
            )

    def invalid_spot_ids(self) -> set[str]:
        """Spot ids that break SpotMap invariants (bounds or uniqueness)."""
        w, h = self.reference_frame
        bad = {s.spot_id for s in self.spots if not s.within_frame(w, h)}
        seen: set[str] = set()
        for s in self.spots:
            if s.spot_id in seen:
                bad.add(s.spot_id)
            seen.add(s.spot_id)
        return bad

    def spot_ids(self) -> list[str]:
        return [s.spot_id for s in self.spots]

    def to_dict(self) -> dict:
        w, h = self.reference_frame
        return {
            "camera_id": self.camera_id,
            "width": w,
            "height": h,
            "version": self.version,
            "spots": [s.to_dict() for s in self.spots],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SpotMap":
        return cls(
            camera_id=str(d["camera_id"]),
            reference_frame=(int(d["width"]), int(d["height"])),
            spots=tuple(SpotGeometry.from_dict(s) for s in d.get("spots", [])),
            version=int(d.get("version", 0)),
        )


def write_spot_map(spot_map: SpotMap, path: str | Path) -> None:
    """Write a SpotMap as a single JSON document, atomically."""
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(spot_map.to_dict(), indent=2) + "\n", encoding="utf-8")
    os.replace(tmp, path)


def read_spot_map(path: str | Path) -> SpotMap:
    return SpotMap.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def polygon_area(points: Sequence[Point]) -> float:
    """Signed shoelace area; positive for clockwise order in image coords."""
    acc = 0.0
    n = len(points)
    for i in range(n):
        x0, y0 = points[i]
        x1, y1 = points[(i + 1) % n]
        acc += x0 * y1 - x1 * y0
    return acc / 2.0


def _segments_properly_intersect(p1: Point, p2: Point, q1: Point, q2: Point) -> bool:
    def orient(a: Point, b: Point, c: Point) -> float:
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def is_simple_quad(points: Sequence[Point]) -> bool:
    """True unless opposite edges cross (the bow-tie degeneracy)."""
    a, b, c, d = points
    return not (
        _segments_properly_intersect(a, b, c, d)
        or _segments_properly_intersect(b, c, d, a)
    )


def perspective_matrix(src: Sequence[Point], dst: Sequence[Point]) -> np.ndarray:
    """3x3 homography mapping the 4 src points onto the 4 dst points.

    Solves the standard 8x8 linear system with h33 fixed at 1.
    """
    if len(src) != 4 or len(dst) != 4:
        raise GeometryError("perspective_matrix needs exactly 4 point pairs")
    a = np.zeros((8, 8), dtype=np.float64)
    b = np.zeros(8, dtype=np.float64)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i] = u
        b[2 * i + 1] = v
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise GeometryError(f"degenerate point configuration: {exc}") from exc
    return np.append(h, 1.0).reshape(3, 3)


def _bilinear_sample(frame: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Vectorized bilinear sampling at float coordinates (pixel centers)."""
    h, w = frame.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0)[..., None]
    fy = (ys - y0)[..., None]
    img = frame.astype(np.float64)
    top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
    bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _validate_crop_inputs(frame: np.ndarray, geometry: SpotGeometry, out_size: int) -> None:
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise GeometryError("frame must be a 3-channel image")
    if out_size < 1:
        raise GeometryError(f"out_size must be >= 1, got {out_size}")
    h, w = frame.shape[:2]
    if not geometry.within_frame(w, h):
        x0, y0, x1, y1 = geometry.bounds()
        raise GeometryError(
            f"spot {geometry.spot_id!r} bounds ({x0:.1f},{y0:.1f})-({x1:.1f},{y1:.1f}) "
            f"exceed frame {w}x{h}"
        )


def _resize(patch: np.ndarray, out_size: int) -> np.ndarray:
    if patch.shape[0] == out_size and patch.shape[1] == out_size:
        return patch
    interp = cv2.INTER_AREA if patch.shape[0] > out_size else cv2.INTER_LINEAR
    return cv2.resize(patch, (out_size, out_size), interpolation=interp)


def crop_spot(
    frame: np.ndarray,
    geometry: SpotGeometry,
    policy: str = "warp_rectify",
    out_size: int = 32,
) -> np.ndarray:
    """Crop one spot from a frame into an out_size x out_size 3-channel patch.

    warp_rectify: perspective-rectify the quadrilateral so its corners land on
    the output patch corners. bounding_box: crop the axis-aligned hull, then
    resize. fixed_square: crop a square centered on the centroid (side = the
    larger hull dimension), then resize; the window shifts inward if the
    centroid sits near a frame edge, but the geometry itself must be in-bounds.
    Geometry exceeding frame bounds raises; nothing is clamped silently.
    """
    _validate_crop_inputs(frame, geometry, out_size)
    h, w = frame.shape[:2]

    if policy == "warp_rectify":
        s = float(out_size - 1) if out_size > 1 else 1.0
        dst = [(0.0, 0.0), (s, 0.0), (s, s), (0.0, 0.0 + s)]
        hmat = perspective_matrix(geometry.points, dst)
        hinv = np.linalg.inv(hmat)
        u, v = np.meshgrid(
            np.arange(out_size, dtype=np.float64),
            np.arange(out_size, dtype=np.float64),
        )
        denom = hinv[2, 0] * u + hinv[2, 1] * v + hinv[2, 2]
        xs = (hinv[0, 0] * u + hinv[0, 1] * v + hinv[0, 2]) / denom
        ys = (hinv[1, 0] * u + hinv[1, 1] * v + hinv[1, 2]) / denom
        out = _bilinear_sample(frame, xs, ys)
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)

    if policy == "bounding_box":
        x0, y0, x1, y1 = geometry.bounds()
        ix0, iy0 = int(math.floor(x0)), int(math.floor(y0))
        ix1, iy1 = int(math.ceil(x1)), int(math.ceil(y1))
        patch = frame[iy0:iy1, ix0:ix1]
        return _resize(patch, out_size)

    if policy == "fixed_square":
        x0, y0, x1, y1 = geometry.bounds()
        side = int(math.ceil(max(x1 - x0, y1 - y0)))
        side = max(side, 1)
        if side > min(w, h):
            raise GeometryError(
                f"spot {geometry.spot_id!r}: fixed square side {side} exceeds frame {w}x{h}"
            )
        cx, cy = geometry.centroid()
        ix0 = int(round(cx - side / 2.0))
        iy0 = int(round(cy - side / 2.0))
        ix0 = min(max(ix0, 0), w - side)
        iy0 = min(max(iy0, 0), h - side)
        patch = frame[iy0 : iy0 + side, ix0 : ix0 + side]
        return _resize(patch, out_size)

    raise GeometryError(f"unknown crop policy {policy!r}")


def default_policy_for(geometry: SpotGeometry) -> str:
    """warp_rectify for anything oblique, bounding_box for axis-aligned boxes."""
    return "bounding_box" if geometry.kind == "axis_aligned_box" else "warp_rectify"


def rect_points(x: float, y: float, w: float, h: float) -> tuple[Point, Point, Point, Point]:
    """Axis-aligned box corners, clockwise from top-left."""
    return ((x, y), (x + w, y), (x + w, y + h), (x, y + h))


def rotated_rect_points(
    cx: float, cy: float, w: float, h: float, angle_deg: float
) -> tuple[Point, Point, Point, Point]:
    """Corners of a rotated rectangle, clockwise from the rotated top-left."""
    rad = math.radians(angle_deg)
    c, s = math.cos(rad), math.sin(rad)
    out = []
    for dx, dy in ((-w / 2, -h / 2), (w / 2, -h / 2), (w / 2, h / 2), (-w / 2, h / 2)):
        out.append((cx + dx * c - dy * s, cy + dx * s + dy * c))
    return tuple(out)  # type: ignore[return-value]
