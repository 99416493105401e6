import pytest
from fastapi.testclient import TestClient

from contextscan.pipeline import MISSING, CandidateRegion
from contextscan.runstore import export_crops, write_run
from contextscan.server import create_app
from contextscan.world import WorldConfig, generate_scene


@pytest.fixture()
def runs_root(tmp_path):
    img = generate_scene(WorldConfig(seed=60), 0)
    regions = [CandidateRegion(box=(10, 10, 48, 48), score=0.9, rank=1,
                               image_id=img.id),
               CandidateRegion(box=(60, 60, 48, 48), score=0.6, rank=2,
                               image_id=img.id)]
    run_dir = tmp_path / "demo"
    write_run(run_dir, config_text="seed = 0\n", mode=MISSING,
              regions=regions, gt_by_image={img.id: [(20, 20, 16, 16)]},
              auto_flags=[True, False], data_dir=str(tmp_path))
    export_crops(run_dir, regions, {img.id: img})
    return tmp_path


@pytest.fixture()
def client(runs_root):
    return TestClient(create_app(str(runs_root)))


class TestRuns:
    def test_lists_run_directories(self, client):
        assert client.get("/runs").json() == {"runs": ["demo"]}

    def test_empty_root(self, tmp_path):
        c = TestClient(create_app(str(tmp_path / "void")))
        assert c.get("/runs").json() == {"runs": []}


class TestRegions:
    def test_regions_with_default_verdicts(self, client):
        body = client.get("/regions", params={"run": "demo"}).json()
        assert body["mode"] == "missing"
        assert [r["rank"] for r in body["regions"]] == [1, 2]
        assert all(r["verdict"] == "unlabeled" for r in body["regions"])

    def test_unknown_run_404(self, client):
        assert client.get("/regions", params={"run": "nope"}).status_code == 404


class TestCrops:
    def test_serves_png(self, client):
        resp = client.get("/crops/1.png", params={"run": "demo"})
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        assert resp.content.startswith(b"\x89PNG")

    def test_unknown_rank_404(self, client):
        assert client.get("/crops/99.png",
                          params={"run": "demo"}).status_code == 404


class TestLabels:
    def test_label_persists_and_shows_in_regions(self, client):
        resp = client.post("/labels", params={"run": "demo"},
                           json={"rank": 1, "verdict": "true"})
        assert resp.status_code == 200
        regions = client.get("/regions", params={"run": "demo"}).json()["regions"]
        assert regions[0]["verdict"] == "true"
        assert regions[1]["verdict"] == "unlabeled"

    def test_relabeling_takes_last_value(self, client):
        for verdict in ("true", "false"):
            client.post("/labels", params={"run": "demo"},
                        json={"rank": 2, "verdict": verdict})
        regions = client.get("/regions", params={"run": "demo"}).json()["regions"]
        assert regions[1]["verdict"] == "false"

    def test_bad_verdict_400(self, client):
        resp = client.post("/labels", params={"run": "demo"},
                           json={"rank": 1, "verdict": "perhaps"})
        assert resp.status_code == 400

    def test_unknown_rank_404(self, client):
        resp = client.post("/labels", params={"run": "demo"},
                           json={"rank": 42, "verdict": "true"})
        assert resp.status_code == 404


class TestMetrics:
    def test_auto_curve_from_manifest(self, client):
        body = client.get("/metrics", params={"run": "demo"}).json()
        assert body["gt_total"] == 1
        assert body["k"] == [1, 2]
        assert body["auto"] == [1.0, 1.0]
        assert body["human"] == [0.0, 0.0]

    def test_human_curve_follows_labels(self, client):
        client.post("/labels", params={"run": "demo"},
                    json={"rank": 2, "verdict": "true"})
        body = client.get("/metrics", params={"run": "demo"}).json()
        assert body["human"] == [0.0, 1.0]
