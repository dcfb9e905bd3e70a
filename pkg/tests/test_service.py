import threading
from concurrent.futures import ThreadPoolExecutor

import cv2
import numpy as np
import pytest
import torch
from fastapi.testclient import TestClient

from parkwatch.backbones import build_model, default_spec, save_model
from parkwatch.errors import GeometryError, RuntimeFailure
from parkwatch.geometry import SpotGeometry, SpotMap, rect_points
from parkwatch.service import (
    ServiceConfig,
    SpotMapStore,
    UnknownCamera,
    VersionConflict,
    create_app,
    load_predictor,
)
from parkwatch.synthetic import render_lot_frame


def biased_conv3(tmp_path, toward="occupied"):
    """conv3 whose final layer always predicts one class with high margin."""
    model = build_model(default_spec("conv3"), init_seed=0)
    final = model.module.classifier[-1]
    with torch.no_grad():
        final.weight.zero_()
        bias = [0.0, 10.0] if toward == "occupied" else [10.0, 0.0]
        final.bias.copy_(torch.tensor(bias))
    save_model(model, tmp_path / "model")
    return tmp_path / "model"


def png_bytes(img: np.ndarray) -> bytes:
    ok, buf = cv2.imencode(".png", img)
    assert ok
    return buf.tobytes()


@pytest.fixture()
def client(tmp_path):
    model_dir = biased_conv3(tmp_path)
    config = ServiceConfig(
        framework_kind="single_model",
        model_dir=str(model_dir),
        store_path=str(tmp_path / "store"),
    )
    app = create_app(config)
    return TestClient(app)


def sample_map_doc(n_spots=3, width=480, height=360, version=0):
    spots = [
        {
            "spot_id": f"S{i + 1}",
            "kind": "quadrilateral",
            "points": [[20 + 50 * i, 30], [60 + 50 * i, 30],
                       [60 + 50 * i, 90], [20 + 50 * i, 90]],
        }
        for i in range(n_spots)
    ]
    return {"camera_id": "cam1", "width": width, "height": height,
            "version": version, "spots": spots}


class TestSpotMapStore:
    def test_put_get_roundtrip_version_increment(self, tmp_path):
        store = SpotMapStore(tmp_path)
        m = SpotMap("cam", (100, 100), (
            SpotGeometry("a", "quadrilateral", rect_points(5, 5, 20, 20)),
        ))
        v1 = store.put("cam", m)
        assert v1 == 1
        got = store.get("cam")
        assert got.version == 1
        assert got.spots[0].points == m.spots[0].points
        v2 = store.put("cam", got)
        assert v2 == 2

    def test_unknown_camera(self, tmp_path):
        with pytest.raises(UnknownCamera):
            SpotMapStore(tmp_path).get("ghost")

    def test_optimistic_conflict(self, tmp_path):
        store = SpotMapStore(tmp_path)
        m = SpotMap("cam", (50, 50), ())
        store.put("cam", m, expected_version=0)
        with pytest.raises(VersionConflict):
            store.put("cam", m, expected_version=0)

    def test_concurrent_cas_one_winner(self, tmp_path):
        store = SpotMapStore(tmp_path)
        m = SpotMap("cam", (50, 50), ())
        results = []

        def attempt():
            try:
                results.append(store.put("cam", m, expected_version=0))
            except VersionConflict:
                results.append(None)

        with ThreadPoolExecutor(max_workers=8) as pool:
            for _ in range(8):
                pool.submit(attempt)
        wins = [r for r in results if r is not None]
        assert wins == [1]

    def test_concurrent_retries_strictly_increasing(self, tmp_path):
        store = SpotMapStore(tmp_path)
        store.put("cam", SpotMap("cam", (50, 50), ()))
        committed = []
        lock = threading.Lock()

        def writer():
            while True:
                current = store.get("cam")
                try:
                    v = store.put("cam", current, expected_version=current.version)
                except VersionConflict:
                    continue
                with lock:
                    committed.append(v)
                return

        with ThreadPoolExecutor(max_workers=6) as pool:
            for _ in range(12):
                pool.submit(writer)
        assert sorted(committed) == list(range(2, 14))  # no lost update

    def test_rejects_invalid_spots(self, tmp_path):
        store = SpotMapStore(tmp_path)
        with pytest.raises(GeometryError):
            SpotMap("cam", (10, 10), (
                SpotGeometry("big", "quadrilateral", rect_points(0, 0, 50, 50)),
            ))


class TestSpotMapEndpoints:
    def test_put_then_get_identical_geometry(self, client):
        doc = sample_map_doc()
        r = client.put("/cameras/cam1/spotmap", json=doc)
        assert r.status_code == 200
        assert r.json()["version"] == 1
        got = client.get("/cameras/cam1/spotmap").json()
        assert got["version"] == 1
        assert got["spots"] == doc["spots"]

    def test_self_intersecting_polygon_rejected(self, client):
        doc = sample_map_doc(n_spots=1)
        doc["spots"][0]["points"] = [[0, 0], [50, 50], [50, 0], [0, 30]]
        r = client.put("/cameras/cam1/spotmap", json=doc)
        assert r.status_code == 422
        assert "S1" in r.json()["detail"]

    def test_version_conflict_409(self, client):
        doc = sample_map_doc()
        assert client.put("/cameras/cam1/spotmap", json=doc).status_code == 200
        r = client.put("/cameras/cam1/spotmap", json=doc)  # stale version 0
        assert r.status_code == 409

    def test_get_unknown_camera_404(self, client):
        assert client.get("/cameras/ghost/spotmap").status_code == 404

    def test_out_of_frame_spot_rejected_with_ids(self, client):
        doc = sample_map_doc(n_spots=1, width=100, height=100)
        doc["spots"][0]["points"] = [[-5, 10], [40, 10], [40, 40], [-5, 40]]
        r = client.put("/cameras/cam1/spotmap", json=doc)
        assert r.status_code == 422
        assert "S1" in r.json()["detail"]


class TestClassifyFrame:
    def test_all_occupied_passthrough(self, client):
        frame, spot_map, _ = render_lot_frame(width=480, height=360, rows=2, cols=3)
        doc = spot_map.to_dict()
        doc["camera_id"] = "cam1"
        assert client.put("/cameras/cam1/spotmap", json=doc).status_code == 200
        r = client.post("/cameras/cam1/frames", content=png_bytes(frame))
        assert r.status_code == 200
        body = r.json()
        assert len(body["spots"]) == 6
        # biased model claims everything occupied, confidences in [0.5, 1]
        for entry in body["spots"]:
            assert entry["label"] == "occupied"
            assert 0.5 <= entry["confidence"] <= 1.0
            assert entry["framework"] == "single_model"
        assert body["spot_map_version"] == 1
        assert body["latency_ms"] >= 0

    def test_spot_ids_match_active_map(self, client):
        frame, spot_map, _ = render_lot_frame(width=320, height=240, rows=2, cols=2)
        doc = spot_map.to_dict()
        assert client.put("/cameras/c2/spotmap", json=doc).status_code == 200
        r = client.post("/cameras/c2/frames", content=png_bytes(frame))
        got_ids = {e["spot_id"] for e in r.json()["spots"]}
        assert got_ids == set(s.spot_id for s in spot_map.spots)

    def test_zero_spot_map_empty_result(self, client):
        doc = {"camera_id": "c3", "width": 64, "height": 64, "version": 0, "spots": []}
        assert client.put("/cameras/c3/spotmap", json=doc).status_code == 200
        frame = np.zeros((64, 64, 3), dtype=np.uint8)
        r = client.post("/cameras/c3/frames", content=png_bytes(frame))
        assert r.status_code == 200
        assert r.json()["spots"] == []

    def test_thirty_spot_map_thirty_entries(self, client):
        frame, spot_map, _ = render_lot_frame(width=600, height=400, rows=5, cols=6)
        doc = spot_map.to_dict()
        assert client.put("/cameras/c30/spotmap", json=doc).status_code == 200
        r = client.post("/cameras/c30/frames", content=png_bytes(frame))
        assert len(r.json()["spots"]) == 30

    def test_dimension_mismatch_cites_reference(self, client):
        doc = sample_map_doc(width=480, height=360)
        assert client.put("/cameras/c4/spotmap", json=doc).status_code == 200
        wrong = np.zeros((100, 100, 3), dtype=np.uint8)
        r = client.post("/cameras/c4/frames", content=png_bytes(wrong))
        assert r.status_code == 400
        assert "480x360" in r.json()["detail"]

    def test_unknown_camera_404(self, client):
        frame = np.zeros((32, 32, 3), dtype=np.uint8)
        r = client.post("/cameras/ghost/frames", content=png_bytes(frame))
        assert r.status_code == 404

    def test_undecodable_body_400(self, client):
        doc = sample_map_doc()
        client.put("/cameras/c5/spotmap", json=doc)
        r = client.post("/cameras/c5/frames", content=b"not an image")
        assert r.status_code == 400

    def test_concurrent_classification_identical(self, client):
        frame, spot_map, _ = render_lot_frame(width=320, height=240, rows=2, cols=2)
        doc = spot_map.to_dict()
        client.put("/cameras/c6/spotmap", json=doc)
        body = png_bytes(frame)

        def call():
            return client.post("/cameras/c6/frames", content=body).json()["spots"]

        with ThreadPoolExecutor(max_workers=4) as pool:
            outs = list(pool.map(lambda _: call(), range(8)))
        assert all(o == outs[0] for o in outs)


class TestFrameStore:
    def test_latest_frame_roundtrip(self, client):
        frame = np.full((40, 60, 3), 90, dtype=np.uint8)
        body = png_bytes(frame)
        r = client.put("/cameras/c7/frames/latest", content=body)
        assert r.status_code == 200
        assert r.json() == {"camera_id": "c7", "width": 60, "height": 40}
        got = client.get("/cameras/c7/frames/latest")
        assert got.status_code == 200
        assert got.content == body

    def test_latest_missing_404(self, client):
        assert client.get("/cameras/ghost/frames/latest").status_code == 404


class TestHealthAndStartup:
    def test_healthz(self, client):
        body = client.get("/healthz").json()
        assert body["status"] == "ok"
        assert body["framework"] == "single_model"

    def test_missing_artifacts_fail_startup(self, tmp_path):
        config = ServiceConfig(
            framework_kind="single_model",
            model_dir=str(tmp_path / "missing"),
            store_path=str(tmp_path / "store"),
        )
        with pytest.raises(RuntimeFailure):
            create_app(config)

    def test_pool_framework_loading(self, tmp_path, trained):
        from parkwatch.fusion import save_meta, save_pool

        save_pool(trained.pool, tmp_path / "pool")
        save_meta(trained.stack_svm, tmp_path / "meta")
        save_meta(trained.selector, tmp_path / "dynse")
        for kind, meta in (("majority_vote", None), ("stacking", "meta"),
                           ("dynamic_selection", "dynse")):
            config = ServiceConfig(
                framework_kind=kind,
                pool_dir=str(tmp_path / "pool"),
                meta_dir=str(tmp_path / meta) if meta else None,
                store_path=str(tmp_path / "store"),
            )
            predictor = load_predictor(config)
            assert predictor.kind.startswith(kind.split("_")[0])

    def test_config_file_parsing(self, tmp_path):
        cfg = tmp_path / "svc.yaml"
        cfg.write_text(
            "framework:\n  kind: single_model\n  model_dir: /m\n"
            "store_path: /s\nlisten: 0.0.0.0:9001\n"
        )
        config = ServiceConfig.from_file(cfg)
        assert config.framework_kind == "single_model"
        assert config.model_dir == "/m"
        assert config.listen == "0.0.0.0:9001"
