"""Monitoring service: classify live frames against stored spot maps.

HTTP+JSON surface:
  POST /cameras/{id}/frames          image body -> OccupancyResult
  GET  /cameras/{id}/spotmap         latest committed SpotMap
  PUT  /cameras/{id}/spotmap         optimistic commit (body.version = base)
  GET  /cameras/{id}/frames/latest   reference image for the annotator
  PUT  /cameras/{id}/frames/latest   upload/replace the reference image
  GET  /healthz

Spot maps persist as JSON documents with atomic replace-on-write; writes are
serialized per camera, reads are lock-free against the latest committed file.
"""

from __future__ import annotations

import hashlib
import logging
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import cv2
import numpy as np
import yaml
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from .backbones import load_model
from .errors import DataError, GeometryError, RuntimeFailure
from .evaluation import (
    DynamicSelectionPredictor,
    MajorityVotePredictor,
    SingleModelPredictor,
    StackingPredictor,
)
from .fusion import load_meta, load_pool
from .geometry import SpotMap, crop_spot, default_policy_for, read_spot_map, write_spot_map
log = logging.getLogger(__name__)


class VersionConflict(DataError):
    """Optimistic concurrency check failed: the stored map moved on."""


class UnknownCamera(DataError):
    pass


class SpotMapStore:
    """Versioned, per-camera JSON store with atomic writes."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def _lock_for(self, camera_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(camera_id, threading.Lock())

    def _path(self, camera_id: str) -> Path:
        safe = camera_id.replace("/", "_")
        return self.root / f"{safe}.json"

    def cameras(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))

    def get(self, camera_id: str) -> SpotMap:
        path = self._path(camera_id)
        if not path.exists():
            raise UnknownCamera(f"no spot map for camera {camera_id!r}")
        return read_spot_map(path)

    def put(self, camera_id: str, spot_map: SpotMap,
            expected_version: int | None = None) -> int:
        """Commit a new map version; returns the committed version number.

        expected_version enables optimistic concurrency: the commit succeeds
        only if it equals the currently stored version (0 when absent).
        Passing None skips the check (last writer wins, still serialized).
        """
        offenders = spot_map.invalid_spot_ids()
        if offenders:
            raise GeometryError(f"invalid spots: {sorted(offenders)}")
        with self._lock_for(camera_id):
            path = self._path(camera_id)
            current = read_spot_map(path).version if path.exists() else 0
            if expected_version is not None and expected_version != current:
                raise VersionConflict(
                    f"camera {camera_id!r}: expected version {expected_version}, "
                    f"stored version is {current}"
                )
            committed = SpotMap(
                camera_id=camera_id,
                reference_frame=spot_map.reference_frame,
                spots=spot_map.spots,
                version=current + 1,
            )
            write_spot_map(committed, path)
            return committed.version


@dataclass
class ServiceConfig:
    """Deployment wiring: which framework artifacts to serve, and where from.

    framework.kind selects the fusion strategy; artifact paths must load at
    startup or the service refuses to come up.
    """

    framework_kind: str
    model_dir: str | None = None  # single_model
    pool_dir: str | None = None  # pool-based frameworks
    meta_dir: str | None = None  # stacking / dynamic_selection
    store_path: str = "spotmaps"
    listen: str = "127.0.0.1:8000"
    max_frame_bytes: int = 16 * 1024 * 1024
    crop_policy: str | None = None  # None: per-spot default by geometry kind
    source_datasets: tuple[str, ...] = ()

    @classmethod
    def from_file(cls, path: str | Path) -> "ServiceConfig":
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8")) or {}
        fw = raw.get("framework", {})
        return cls(
            framework_kind=fw.get("kind", "single_model"),
            model_dir=fw.get("model_dir"),
            pool_dir=fw.get("pool_dir"),
            meta_dir=fw.get("meta_dir"),
            store_path=raw.get("store_path", "spotmaps"),
            listen=raw.get("listen", "127.0.0.1:8000"),
            max_frame_bytes=int(raw.get("max_frame_bytes", 16 * 1024 * 1024)),
            crop_policy=raw.get("crop_policy"),
            source_datasets=tuple(raw.get("source_datasets", ())),
        )


def load_predictor(config: ServiceConfig):
    """Materialize the configured framework; failures here are fatal."""
    kind = config.framework_kind
    sources: Iterable[str] = config.source_datasets
    try:
        if kind == "single_model":
            if not config.model_dir:
                raise RuntimeFailure("single_model needs framework.model_dir")
            return SingleModelPredictor(load_model(config.model_dir), sources)
        if kind == "majority_vote":
            if not config.pool_dir:
                raise RuntimeFailure(f"{kind} needs framework.pool_dir")
            return MajorityVotePredictor(load_pool(config.pool_dir), sources)
        if kind == "stacking":
            if not (config.pool_dir and config.meta_dir):
                raise RuntimeFailure("stacking needs framework.pool_dir and meta_dir")
            return StackingPredictor(
                load_pool(config.pool_dir), load_meta(config.meta_dir), sources
            )
        if kind == "dynamic_selection":
            if not (config.pool_dir and config.meta_dir):
                raise RuntimeFailure(
                    "dynamic_selection needs framework.pool_dir and meta_dir"
                )
            return DynamicSelectionPredictor(
                load_pool(config.pool_dir), load_meta(config.meta_dir), sources
            )
    except RuntimeFailure:
        raise
    except Exception as exc:
        raise RuntimeFailure(f"failed to load {kind} artifacts: {exc}") from exc
    raise RuntimeFailure(f"unknown framework kind {config.framework_kind!r}")


class FrameClassifier:
    """Crops every demarcated spot and classifies it with one predictor."""

    def __init__(self, predictor, crop_policy: str | None = None):
        self.predictor = predictor
        self.crop_policy = crop_policy

    def classify_frame(self, camera_id: str, frame: np.ndarray,
                       spot_map: SpotMap) -> dict:
        h, w = frame.shape[:2]
        ref_w, ref_h = spot_map.reference_frame
        if (w, h) != (ref_w, ref_h):
            raise DataError(
                f"frame is {w}x{h} but camera {camera_id!r} expects "
                f"{ref_w}x{ref_h} (stored reference dimensions)"
            )
        started = time.perf_counter()
        spots_out = []
        if spot_map.spots:
            patches = np.stack(
                [
                    crop_spot(
                        frame,
                        geom,
                        self.crop_policy or default_policy_for(geom),
                        out_size=self.predictor.input_size,
                    )
                    for geom in spot_map.spots
                ]
            )
            labels, confidences = self.predictor.predict(patches)
            for geom, label, conf in zip(spot_map.spots, labels, confidences):
                spots_out.append(
                    {
                        "spot_id": geom.spot_id,
                        "label": label,
                        "confidence": round(float(conf), 6),
                        "framework": self.predictor.kind,
                    }
                )
        latency_ms = (time.perf_counter() - started) * 1000.0
        frame_id = hashlib.sha1(frame.tobytes()).hexdigest()[:12]
        return {
            "camera_id": camera_id,
            "frame_id": frame_id,
            "spots": spots_out,
            "latency_ms": round(latency_ms, 3),
            "spot_map_version": spot_map.version,
        }


def _decode_image(body: bytes) -> np.ndarray:
    arr = np.frombuffer(body, dtype=np.uint8)
    img = cv2.imdecode(arr, cv2.IMREAD_COLOR)
    if img is None:
        raise DataError("request body is not a decodable PNG/JPEG image")
    return img


def create_app(config: ServiceConfig) -> FastAPI:
    """Build the FastAPI app; loads all artifacts eagerly."""
    predictor = load_predictor(config)
    classifier = FrameClassifier(predictor, config.crop_policy)
    store = SpotMapStore(config.store_path)
    frames_dir = Path(config.store_path) / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    app = FastAPI(title="parkwatch", version="0.1.0")
    app.state.store = store
    app.state.predictor = predictor

    def _frame_path(camera_id: str) -> Path:
        return frames_dir / f"{camera_id.replace('/', '_')}.png"

    def _error(status: int, message: str) -> JSONResponse:
        return JSONResponse(status_code=status, content={"detail": message})

    @app.get("/healthz")
    def healthz():
        return {
            "status": "ok",
            "framework": predictor.kind,
            "backbone": predictor.backbone_family,
        }

    @app.get("/cameras/{camera_id}/spotmap")
    def get_spotmap(camera_id: str):
        try:
            return store.get(camera_id).to_dict()
        except UnknownCamera as exc:
            return _error(404, str(exc))

    @app.put("/cameras/{camera_id}/spotmap")
    async def put_spotmap(camera_id: str, request: Request):
        try:
            payload = await request.json()
        except Exception:
            return _error(400, "body must be a SpotMap JSON document")
        try:
            base_version = int(payload.get("version", 0))
            spot_map = SpotMap.from_dict({**payload, "camera_id": camera_id, "version": 0})
            version = store.put(camera_id, spot_map, expected_version=base_version)
        except VersionConflict as exc:
            return _error(409, str(exc))
        except (GeometryError, DataError, KeyError, ValueError, TypeError) as exc:
            return _error(422, f"invalid spot map: {exc}")
        return {"camera_id": camera_id, "version": version}

    @app.post("/cameras/{camera_id}/frames")
    async def post_frame(camera_id: str, request: Request):
        body = await request.body()
        if len(body) > config.max_frame_bytes:
            return _error(413, f"frame exceeds {config.max_frame_bytes} bytes")
        try:
            spot_map = store.get(camera_id)
        except UnknownCamera as exc:
            return _error(404, str(exc))
        try:
            frame = _decode_image(body)
            result = classifier.classify_frame(camera_id, frame, spot_map)
        except DataError as exc:
            return _error(400, str(exc))
        _frame_path(camera_id).write_bytes(body)
        return result

    @app.put("/cameras/{camera_id}/frames/latest")
    async def put_latest_frame(camera_id: str, request: Request):
        body = await request.body()
        if len(body) > config.max_frame_bytes:
            return _error(413, f"frame exceeds {config.max_frame_bytes} bytes")
        try:
            img = _decode_image(body)
        except DataError as exc:
            return _error(400, str(exc))
        _frame_path(camera_id).write_bytes(body)
        return {"camera_id": camera_id, "width": img.shape[1], "height": img.shape[0]}

    @app.get("/cameras/{camera_id}/frames/latest")
    def get_latest_frame(camera_id: str):
        path = _frame_path(camera_id)
        if not path.exists():
            return _error(404, f"no stored frame for camera {camera_id!r}")
        return Response(content=path.read_bytes(), media_type="image/png")

    return app
