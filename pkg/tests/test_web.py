import json
import time

import pytest

from permitwatch import create_app
from permitwatch.services import jobs
from permitwatch.services.frame_io import write_truth
from permitwatch.services.frames import OutageEvent
from permitwatch.services.labels import LabelClass


@pytest.fixture
def app(tmp_path):
    jobs._reset_progress()
    app = create_app({
        "TESTING": True,
        "SQLALCHEMY_DATABASE_URI": f"sqlite:///{tmp_path / 'db' / 'runs.db'}",
        "REPORTS_DIR": str(tmp_path / "reports"),
    })
    yield app
    jobs._reset_progress()


@pytest.fixture
def client(app):
    return app.test_client()


def _wait_idle(client, timeout=20.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if not client.get("/jobs/progress").get_json()["running"]:
            return
        time.sleep(0.05)
    raise AssertionError("job did not finish")


def test_job_runs_and_is_recorded(client, tmp_path):
    truth = tmp_path / "truth.json"
    write_truth(truth, [OutageEvent(0, 300, label_class=LabelClass.KRF1), OutageEvent(900, 40)])
    out = tmp_path / "reports" / "stats.json"
    r = client.post("/jobs/start", json={"argv": ["stats", "--truth", str(truth), "--out", str(out)]})
    assert r.status_code == 202
    run_id = r.get_json()["id"]
    _wait_idle(client)

    rec = client.get(f"/jobs/{run_id}").get_json()
    assert rec["status"] == "done" and rec["exit_code"] == 0
    assert rec["output"] == str(out)
    assert client.get("/jobs/progress").get_json()["last_msg"] == "Completed"
    assert json.loads(out.read_text())["n_events"] == 1
    assert [x["id"] for x in client.get("/jobs?limit=5").get_json()] == [run_id]


def test_failed_job_keeps_error_code(client):
    r = client.post("/jobs/start", json={"argv": ["bogus"]})
    _wait_idle(client)
    rec = client.get(f"/jobs/{r.get_json()['id']}").get_json()
    assert rec["status"] == "failed" and rec["exit_code"] == 2 and rec["error_code"] == "usage"


def test_start_is_refused_while_running(client):
    with jobs._progress_lock:
        jobs.progress.update(running=True, run_id=99)
    r = client.post("/jobs/start", json={"argv": ["stats"]})
    assert r.status_code == 409 and "#99" in r.get_json()["msg"]


def test_start_validates_body(client):
    assert client.post("/jobs/start", json={}).status_code == 400
    assert client.post("/jobs/start", json={"argv": "stats"}).status_code == 400
    assert client.get("/jobs/12345").status_code == 404


def test_stalled_progress(client):
    with jobs._progress_lock:
        jobs.progress.update(running=True, hb="2000-01-01T00:00:00")
    assert client.get("/jobs/progress").get_json()["stalled"] is True


def test_reports(client, tmp_path):
    reports = tmp_path / "reports"
    (reports / "cmp.json").write_text(json.dumps(
        {"diagonal_fraction": 1.0, "classes": ["KRF1", "Unlabeled"], "counts": [[2, 0], [0, 1]]}))
    (reports / "broken.json").write_text("{not json")

    assert client.get("/reports/cmp").get_json()["diagonal_fraction"] == 1.0
    r = client.get("/reports/cmp.json/xlsx")
    assert r.status_code == 200 and r.data[:2] == b"PK"
    assert "spreadsheetml" in r.mimetype
    assert client.get("/reports/nope").status_code == 404
    assert client.get("/reports/broken").status_code == 422
    assert client.get("/reports/broken/xlsx").status_code == 422


def test_heartbeat_tracks_log_lines(app):
    jobs.heartbeat("[train] epoch 3")
    assert jobs.progress["last_msg"] == "[train] epoch 3" and jobs.progress["hb"]
    jobs.heartbeat()
    assert jobs.progress["last_msg"] == "[train] epoch 3"
