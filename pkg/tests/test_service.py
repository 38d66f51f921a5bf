import json
import time
import warnings

import pytest
from fastapi.testclient import TestClient

from flimsod.encoder import BlockSpec
from flimsod.markers import canonical_json, marker_set_from_dict
from flimsod.pipeline import PipelineConfig, synth_dataset
from flimsod.service import create_app


@pytest.fixture(scope="module")
def service_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("svc") / "ds"
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        synth_dataset(root, seed=11, n_images=8, size=128, marked=2,
                      object_area=(400, 900), impurities=(2, 5))
    return root


@pytest.fixture()
def client(service_root):
    config = PipelineConfig(
        dataset=service_root,
        mode="bofp",
        blocks=[BlockSpec(kernels_per_marker=1), BlockSpec(kernels_per_marker=1)],
    )
    config.postproc.min_area = 150
    config.postproc.max_area = 1800
    app = create_app(config)
    with TestClient(app) as c:
        yield c


def wait_done(client, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        status = client.get("/train/status").json()
        if status["status"] in ("done", "failed"):
            return status
        time.sleep(0.25)
    raise TimeoutError("training did not finish")


def train(client, **body):
    r = client.post("/train", json=body or {})
    assert r.status_code == 200, r.text
    status = wait_done(client)
    assert status["status"] == "done", status
    return status


class TestImages:
    def test_listing(self, client):
        data = client.get("/images").json()
        assert len(data["images"]) == 8
        marked = [e for e in data["images"] if e["marked"]]
        assert len(marked) == 2
        assert all(set(e) >= {"id", "width", "height"} for e in data["images"])

    def test_png_bytes(self, client):
        r = client.get("/images/img003")
        assert r.status_code == 200
        assert r.headers["content-type"] == "image/png"
        assert r.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_image(self, client):
        assert client.get("/images/none").status_code == 404

    def test_no_absolute_paths_in_responses(self, client, service_root):
        for endpoint in ("/images", "/train/status", "/validation/scores"):
            body = client.get(endpoint).text
            assert str(service_root) not in body


class TestMarkers:
    def test_roundtrip_is_byte_canonical(self, client):
        payload = {
            "image": "img004",
            "markers": [
                {"id": 2, "x": 40, "y": 50, "radius": 3.0, "label": "background"},
                {"id": 1, "x": 10, "y": 12, "radius": 3.0, "label": "foreground"},
            ],
        }
        r = client.put("/images/img004/markers", json=payload)
        assert r.status_code == 200, r.text
        got = client.get("/images/img004/markers")
        assert got.text == canonical_json(marker_set_from_dict(payload))
        # clean up: empty marker set removes the file
        r = client.put("/images/img004/markers",
                       json={"image": "img004", "markers": []})
        assert r.status_code == 200

    def test_malformed_markers_400_with_field(self, client):
        r = client.put("/images/img004/markers",
                       json={"image": "img004",
                             "markers": [{"id": 1, "x": 3}]})
        assert r.status_code == 400
        assert "markers[0]" in r.json()["error"]

    def test_out_of_bounds_center_400(self, client):
        r = client.put("/images/img004/markers",
                       json={"image": "img004",
                             "markers": [{"id": 1, "x": 4000, "y": 2,
                                          "radius": 3.0,
                                          "label": "foreground"}]})
        assert r.status_code == 400
        assert "markers[0]" in json.dumps(r.json())

    def test_unknown_image_404(self, client):
        r = client.put("/images/none/markers", json={"image": "none",
                                                     "markers": []})
        assert r.status_code == 404


class TestTraining:
    def test_full_cycle(self, client):
        status = train(client, mode="bofp", seed=3)
        assert status["model_depth"] == 2
        assert set(status["stages"]) == {"train", "validate"}

        # saliency for each block renders as PNG
        for block in (1, 2):
            r = client.get(f"/images/img005/saliency?block={block}")
            assert r.status_code == 200
            assert r.content[:8] == b"\x89PNG\r\n\x1a\n"
            assert r.headers["x-model-stale"] == "false"
        # refined variant
        r = client.get("/images/img005/saliency?block=2&refined=true")
        assert r.status_code == 200

        # out-of-range block explains itself
        r = client.get("/images/img005/saliency?block=9")
        assert r.status_code == 404
        assert "2 blocks" in r.json()["detail"]

        scores = client.get("/validation/scores").json()["scores"]
        assert len(scores) == 6  # 8 images minus 2 training
        assert all(0.0 <= v["f_beta"] <= 1.0 for v in scores.values())

        suggestion = client.get("/suggest-next").json()["suggestion"]
        assert suggestion == min(scores.items(),
                                 key=lambda kv: (kv[1]["f_beta"], kv[0]))[0]

    def test_saliency_404_before_training(self, client):
        r = client.get("/images/img001/saliency?block=1")
        assert r.status_code == 404
        assert "train" in r.json()["detail"]

    def test_conflict_while_running(self, client):
        r1 = client.post("/train", json={})
        assert r1.status_code == 200
        r2 = client.post("/train", json={})
        # either the first finished extremely fast, or we get a 409
        if r2.status_code == 409:
            assert "already running" in r2.json()["error"]
        wait_done(client)

    def test_marker_change_marks_model_stale(self, client):
        train(client)
        assert client.get("/train/status").json()["model_stale"] is False
        payload = {"image": "img006",
                   "markers": [{"id": 1, "x": 30, "y": 30, "radius": 3.0,
                                "label": "foreground"}]}
        assert client.put("/images/img006/markers", json=payload).status_code == 200
        assert client.get("/train/status").json()["model_stale"] is True
        r = client.get("/images/img005/saliency?block=1")
        assert r.headers["x-model-stale"] == "true"
        # restore
        client.put("/images/img006/markers",
                   json={"image": "img006", "markers": []})

    def test_bad_blockspecs_rejected(self, client):
        r = client.post("/train", json={"blockspecs": [{"k": 4}]})
        assert r.status_code == 400
        assert r.json()["field"] == "blockspecs"

    def test_train_on_400px_images_completes_in_seconds(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("svc400") / "ds"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            synth_dataset(root, seed=21, n_images=4, size=400, marked=2)
        config = PipelineConfig(dataset=root, mode="bofp",
                                blocks=[BlockSpec(kernels_per_marker=1)] * 2)
        with TestClient(create_app(config)) as client:
            t0 = time.perf_counter()
            client.post("/train", json={"mode": "bofp"})
            status = wait_done(client, timeout=120)
            elapsed = time.perf_counter() - t0
        assert status["status"] == "done"
        assert elapsed < 30.0, f"training round-trip took {elapsed:.1f}s"
