"""Per-batch synthetic augmentation: rotation, brightness, contrast.

Mimics camera-angle and lighting variation on training batches. Every draw is
keyed on (seed, step, index-in-batch), so a training run replays bit-for-bit
and parallel data workers cannot perturb the stream.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class AugmentParams:
    """Ranges must contain the identity (0 deg rotation, factor 1.0)."""

    rotation_range: float = 15.0  # degrees, +/-
    brightness_range: tuple[float, float] = (0.7, 1.3)
    contrast_range: tuple[float, float] = (0.7, 1.3)
    apply_probability: float = 0.5  # per transform, per patch
    seed: int = 0

    def __post_init__(self):
        if self.rotation_range < 0:
            raise DataError("rotation_range must be >= 0")
        for name, (lo, hi) in (
            ("brightness_range", self.brightness_range),
            ("contrast_range", self.contrast_range),
        ):
            if not (lo <= 1.0 <= hi):
                raise DataError(f"{name} must contain the identity factor 1.0")
        if not 0.0 <= self.apply_probability <= 1.0:
            raise DataError("apply_probability must be in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "rotation_range": self.rotation_range,
            "brightness_range": list(self.brightness_range),
            "contrast_range": list(self.contrast_range),
            "apply_probability": self.apply_probability,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentParams":
        return cls(
            rotation_range=float(d.get("rotation_range", 15.0)),
            brightness_range=tuple(d.get("brightness_range", (0.7, 1.3))),
            contrast_range=tuple(d.get("contrast_range", (0.7, 1.3))),
            apply_probability=float(d.get("apply_probability", 0.5)),
            seed=int(d.get("seed", 0)),
        )


@dataclass(frozen=True)
class TransformDraw:
    """The sampled transform for one patch; identity values mean no-op."""

    rotation_deg: float
    brightness: float
    contrast: float


def draw_for(params: AugmentParams, step: int, index: int) -> TransformDraw:
    """Deterministic per-patch draw keyed on (seed, step, index)."""
    key = [params.seed & 0xFFFFFFFF, step & 0xFFFFFFFF, index & 0xFFFFFFFF]
    rng = np.random.default_rng(np.random.SeedSequence(key))
    apply = rng.random(3) < params.apply_probability
    rot = rng.uniform(-params.rotation_range, params.rotation_range)
    bri = rng.uniform(*params.brightness_range)
    con = rng.uniform(*params.contrast_range)
    return TransformDraw(
        rotation_deg=float(rot) if apply[0] else 0.0,
        brightness=float(bri) if apply[1] else 1.0,
        contrast=float(con) if apply[2] else 1.0,
    )


def plan_batch(params: AugmentParams, step: int, n: int) -> list[TransformDraw]:
    return [draw_for(params, step, i) for i in range(n)]


def _rotate(patch: np.ndarray, degrees: float) -> np.ndarray:
    h, w = patch.shape[:2]
    m = cv2.getRotationMatrix2D((w / 2.0 - 0.5, h / 2.0 - 0.5), degrees, 1.0)
    return cv2.warpAffine(
        patch, m, (w, h), flags=cv2.INTER_LINEAR, borderMode=cv2.BORDER_REFLECT_101
    )


def apply_draw(patch: np.ndarray, d: TransformDraw) -> np.ndarray:
    """Apply one sampled transform to a single patch (identity is a no-op)."""
    return _apply(patch, d)


def _apply(patch: np.ndarray, d: TransformDraw) -> np.ndarray:
    out = patch
    if d.rotation_deg != 0.0:
        out = _rotate(out, d.rotation_deg)
    if d.brightness != 1.0:
        out = np.clip(np.rint(out.astype(np.float64) * d.brightness), 0, 255).astype(np.uint8)
    if d.contrast != 1.0:
        pivot = float(out.mean())
        shifted = (out.astype(np.float64) - pivot) * d.contrast + pivot
        out = np.clip(np.rint(shifted), 0, 255).astype(np.uint8)
    return out


def augment_batch(
    batch: list[tuple[np.ndarray, object]],
    params: AugmentParams,
    step: int,
) -> list[tuple[np.ndarray, object]]:
    """Transform each (patch, label) pair independently; labels pass through.

    Patches must share one spatial size; rotation fills borders by reflection
    so the output size equals the input size. An all-identity draw returns the
    input array untouched (bit-identical).
    """
    if not batch:
        return []
    shape = batch[0][0].shape
    for patch, _ in batch:
        if patch.shape != shape:
            raise DataError(
                f"augment_batch needs uniform patch sizes, got {patch.shape} vs {shape}"
            )
    out = []
    for i, (patch, label) in enumerate(batch):
        out.append((_apply(patch, draw_for(params, step, i)), label))
    return out
