from datetime import datetime

from flask import Blueprint, abort, jsonify, request

from ..extensions import db
from ..models import RunRecord
from ..services.jobs import _progress_lock, progress, start_job

bp = Blueprint("jobs", __name__, url_prefix="/jobs")

STALL_SECONDS = 60


@bp.post("/start", endpoint="start_job")
def start():
    body = request.get_json(silent=True) or {}
    argv = body.get("argv")
    if not isinstance(argv, list) or not argv:
        return jsonify({"ok": False, "msg": "body must be {\"argv\": [command, ...]}"}), 400
    ok, msg, run_id = start_job(argv)
    return jsonify({"ok": ok, "msg": msg, "id": run_id}), (202 if ok else 409)


@bp.get("/progress", endpoint="get_progress")
def get_progress():
    with _progress_lock:
        if progress.get("running") and progress.get("hb"):
            last = datetime.fromisoformat(progress["hb"])
            if (datetime.now() - last).total_seconds() > STALL_SECONDS:
                progress["stalled"] = True
        return jsonify(progress), 200


@bp.get("/<int:run_id>", endpoint="get_run")
def get_run(run_id: int):
    rec = db.session.get(RunRecord, run_id)
    if rec is None:
        abort(404)
    return jsonify(rec.to_dict()), 200


@bp.get("", endpoint="list_runs")
def list_runs():
    limit = min(max(request.args.get("limit", 50, type=int), 1), 500)
    rows = RunRecord.query.order_by(RunRecord.id.desc()).limit(limit).all()
    return jsonify([r.to_dict() for r in rows]), 200
