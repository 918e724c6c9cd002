import json
import shutil
from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from cpcssl.core.config import APP_NAME, CHECKPOINT_FILE, EFFECTIVE_CONFIG_FILE, RUNS_DIR
from cpcssl.training.trainer import Trainer
from cpcssl.verify.suites import tiny_config
from main import app

client = TestClient(app)


@pytest.fixture(scope="module")
def trained_run():
    run_dir = Path(RUNS_DIR) / "api-run"
    Trainer(tiny_config(), run_dir).run()
    yield run_dir.name
    shutil.rmtree(run_dir, ignore_errors=True)


@pytest.fixture
def bare_run():
    run_dir = Path(RUNS_DIR) / "bare-run"
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / EFFECTIVE_CONFIG_FILE).write_text(json.dumps(tiny_config().model_dump(mode="json")))
    yield run_dir.name
    shutil.rmtree(run_dir, ignore_errors=True)


class TestHealth:
    def test_health(self):
        response = client.get("/api/v1/health")
        assert response.status_code == 200
        body = response.json()
        assert body["app"] == APP_NAME
        assert body["status"] in ("ok", "degraded")


class TestRuns:
    def test_list_runs(self, trained_run):
        response = client.get("/api/v1/runs/", params={"skip": 0, "limit": 50})
        assert response.status_code == 200
        body = response.json()
        assert body["success"] is True
        run = next(r for r in body["runs"] if r["run_id"] == trained_run)
        assert run["mode"] == "cpc" and run["epochs_done"] == 1 and run["has_checkpoint"] is True

    def test_list_rejects_negative_skip(self):
        assert client.get("/api/v1/runs/", params={"skip": -1}).status_code == 422

    def test_metrics_and_config(self, trained_run):
        metrics = client.get(f"/api/v1/runs/{trained_run}/metrics").json()
        assert metrics["total"] == 1 and metrics["metrics"][0]["epoch"] == 1
        config = client.get(f"/api/v1/runs/{trained_run}/config").json()
        assert config["config"]["model"]["N"] == 3

    def test_eval(self, trained_run):
        response = client.post(f"/api/v1/runs/{trained_run}/eval", json={"k_list": [2]})
        assert response.status_code == 200
        body = response.json()
        assert body["run_id"] == trained_run and body["epoch"] == 1
        assert set(body["accuracy"]) == {"1", "2"}

    def test_eval_keeps_effective_config(self, trained_run):
        path = Path(RUNS_DIR) / trained_run / EFFECTIVE_CONFIG_FILE
        path.write_text(json.dumps(json.loads(path.read_text())))
        before = path.read_bytes()
        assert client.post(f"/api/v1/runs/{trained_run}/eval", json={"k_list": [1]}).status_code == 200
        assert path.read_bytes() == before

    def test_eval_rejects_zero_k(self, trained_run):
        assert client.post(f"/api/v1/runs/{trained_run}/eval", json={"k_list": [0]}).status_code == 422

    def test_unknown_run(self):
        assert client.get("/api/v1/runs/missing-run/metrics").status_code == 404
        assert client.post("/api/v1/runs/missing-run/eval", json={}).status_code == 404

    def test_eval_without_checkpoint(self, bare_run):
        response = client.post(f"/api/v1/runs/{bare_run}/eval", json={"k_list": [1]})
        assert response.status_code == 404

    def test_corrupt_checkpoint_maps_to_error_body(self, bare_run, trained_run):
        source = Path(RUNS_DIR) / trained_run / CHECKPOINT_FILE
        raw = bytearray(source.read_bytes())
        raw[-1] ^= 0xFF
        (Path(RUNS_DIR) / bare_run / CHECKPOINT_FILE).write_bytes(bytes(raw))
        response = client.post(f"/api/v1/runs/{bare_run}/eval", json={"k_list": [1]})
        assert response.status_code == 500
        assert response.json()["error"] == "E_CHECKSUM"


class TestVerify:
    def test_list_suites(self):
        suites = client.get("/api/v1/verify/").json()["suites"]
        assert "gradients" in suites and "ssl-gain" in suites

    def test_unknown_suite(self):
        assert client.post("/api/v1/verify/nonsense").status_code == 404

    def test_entropy_suite(self):
        response = client.post("/api/v1/verify/entropy", params={"quick": True})
        assert response.status_code == 200
        body = response.json()
        assert body["suite"] == "entropy"
        assert body["passed"] is True and len(body["checks"]) >= 2
