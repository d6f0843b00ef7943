# permitwatch/services/jobs.py
"""Background runner for CLI commands launched over HTTP; one job at a time."""
from __future__ import annotations

import logging
from datetime import datetime
from threading import Lock, Thread

from flask import current_app

from ..extensions import db
from ..models import RunRecord

log = logging.getLogger(__name__)

progress = {
    "running": False,
    "run_id": None,
    "command": None,
    "started_at": None,
    "finished_at": None,
    "last_msg": None,
    "error": None,
    "hb": None,
}

_progress_lock: Lock = Lock()


def _now() -> str:
    return datetime.now().isoformat(timespec="seconds")


def _reset_progress():
    progress.pop("stalled", None)
    progress.update({
        "running": False, "run_id": None, "command": None,
        "started_at": None, "finished_at": None,
        "last_msg": None, "error": None, "hb": None,
    })


def heartbeat(msg: str | None = None):
    with _progress_lock:
        progress["hb"] = _now()
        if msg:
            progress["last_msg"] = msg


class _HeartbeatHandler(logging.Handler):
    """Mirrors INFO lines of the running command into progress['last_msg']."""

    def emit(self, record):
        try:
            heartbeat(record.getMessage())
        except Exception:
            self.handleError(record)


def _output_of(argv: list[str]) -> str | None:
    for i, a in enumerate(argv):
        if a == "--out" and i + 1 < len(argv):
            return argv[i + 1]
        if a.startswith("--out="):
            return a.split("=", 1)[1]
    return None


def _run_job(app, run_id: int, argv: list[str]):
    from ..cli import run_command

    failure: dict = {}

    def _on_error(code, message):
        failure.update(code=code, message=message)

    with app.app_context():
        rec = db.session.get(RunRecord, run_id)
        rec.status = "running"
        rec.started_at = datetime.now()
        db.session.commit()
        log.info("[job] #%d starting: %s", run_id, " ".join(argv))
        pkg_log = logging.getLogger("permitwatch")
        hb = _HeartbeatHandler(level=logging.INFO)
        pkg_log.addHandler(hb)
        try:
            code = run_command(argv, on_error=_on_error)
        except Exception as e:
            log.exception("[job] #%d crashed", run_id)
            code = 1
            failure.update(code="internal", message=str(e))
        finally:
            pkg_log.removeHandler(hb)

        rec = db.session.get(RunRecord, run_id)
        rec.exit_code = code
        rec.status = "done" if code == 0 else "failed"
        rec.error_code = failure.get("code")
        rec.message = failure.get("message") or ("ok" if code == 0 else f"exit {code}")
        rec.finished_at = datetime.now()
        db.session.commit()
        log.info("[job] #%d %s (exit %d)", run_id, rec.status, code)

        with _progress_lock:
            progress["running"] = False
            progress["finished_at"] = _now()
            progress["hb"] = _now()
            progress["error"] = rec.message if code else None
            progress["last_msg"] = "Completed" if code == 0 else "Failed"


def start_job(argv: list[str]) -> tuple[bool, str, int | None]:
    """Queue `argv` as a RunRecord and run it on a daemon thread; refused while another job runs."""
    argv = [str(a) for a in (argv or [])]
    if not argv:
        return False, "argv is empty", None
    with _progress_lock:
        if progress["running"]:
            return False, f"job #{progress['run_id']} is already running", None
        _reset_progress()
        progress["running"] = True
        progress["command"] = argv[0]
        progress["started_at"] = _now()
        progress["hb"] = _now()
        progress["last_msg"] = "Started"

    try:
        rec = RunRecord(command=argv[0], argv=argv, status="queued", output=_output_of(argv))
        db.session.add(rec)
        db.session.commit()
    except Exception:
        with _progress_lock:
            progress["running"] = False
        raise
    with _progress_lock:
        progress["run_id"] = rec.id

    Thread(target=_run_job, args=(current_app._get_current_object(), rec.id, argv), daemon=True).start()
    return True, f"job #{rec.id} started", rec.id
