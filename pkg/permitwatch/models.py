from datetime import datetime

from .extensions import db


class RunRecord(db.Model):
    """One CLI invocation launched through the job API."""

    __tablename__ = "run_record"

    id = db.Column(db.Integer, primary_key=True)
    command = db.Column(db.String(40), nullable=False, index=True)
    argv = db.Column(db.JSON, nullable=False, default=list)
    status = db.Column(db.String(10), nullable=False, default="queued", index=True)   # queued|running|done|failed
    exit_code = db.Column(db.Integer, nullable=True)
    error_code = db.Column(db.String(20), nullable=True)
    message = db.Column(db.Text, nullable=True)
    output = db.Column(db.String(500), nullable=True)
    started_at = db.Column(db.DateTime, nullable=True)
    finished_at = db.Column(db.DateTime, nullable=True)
    created_at = db.Column(db.DateTime, nullable=False, default=datetime.now)

    def to_dict(self) -> dict:
        iso = lambda t: t.isoformat(timespec="seconds") if t else None
        return {
            "id": self.id,
            "command": self.command,
            "argv": list(self.argv or []),
            "status": self.status,
            "exit_code": self.exit_code,
            "error_code": self.error_code,
            "message": self.message,
            "output": self.output,
            "started_at": iso(self.started_at),
            "finished_at": iso(self.finished_at),
        }
