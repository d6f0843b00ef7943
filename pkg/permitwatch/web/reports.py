import io
import os

from flask import Blueprint, abort, current_app, jsonify, send_file

from ..errors import PermitWatchError
from ..services.export import export_report
from ..utils import load_json

bp = Blueprint("reports", __name__, url_prefix="/reports")

XLSX_MIMETYPE = "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet"


def _report_path(name: str) -> str:
    base = os.path.abspath(current_app.config["REPORTS_DIR"])
    fname = name if name.endswith(".json") else f"{name}.json"
    path = os.path.abspath(os.path.join(base, fname))
    if os.path.dirname(path) != base or not os.path.isfile(path):
        abort(404)
    return path


@bp.get("/<name>", endpoint="get_report")
def get_report(name: str):
    try:
        return jsonify(load_json(_report_path(name))), 200
    except ValueError as e:
        return jsonify({"ok": False, "code": "format", "msg": str(e)}), 422


@bp.get("/<name>/xlsx", endpoint="export_xlsx")
def export_xlsx(name: str):
    try:
        data = export_report(load_json(_report_path(name)))
    except PermitWatchError as e:
        return jsonify({"ok": False, "code": e.code, "msg": str(e)}), 422
    except ValueError as e:
        return jsonify({"ok": False, "code": "format", "msg": str(e)}), 422
    stem = os.path.splitext(name)[0]
    return send_file(io.BytesIO(data), mimetype=XLSX_MIMETYPE, as_attachment=True,
                     download_name=f"{stem}.xlsx")
