# permitwatch/services/export.py
"""XLSX export of report JSON: a summary sheet of scalars plus one sheet per table."""
from __future__ import annotations

import io

import xlsxwriter

from ..errors import FormatError


def _scalars(d: dict) -> list[tuple[str, object]]:
    return [(k, v) for k, v in d.items() if isinstance(v, (int, float, str, bool)) or v is None]


def _write_row(ws, r: int, values):
    for c, v in enumerate(values):
        if isinstance(v, bool):
            ws.write_boolean(r, c, v)
        elif isinstance(v, (int, float)):
            ws.write_number(r, c, v)
        elif v is None:
            ws.write_blank(r, c, None)
        else:
            ws.write(r, c, str(v))


def _table(wb, name: str, headers: list, rows: list[list], bold):
    ws = wb.add_worksheet(name[:31])
    for c, h in enumerate(headers):
        ws.write(0, c, str(h), bold)
    for i, row in enumerate(rows, start=1):
        _write_row(ws, i, row)
    ws.set_column(0, max(len(headers) - 1, 0), 14)


def _matrix(wb, name: str, classes: list[str], counts: list[list[int]], bold):
    _table(wb, name, [""] + classes, [[c] + list(row) for c, row in zip(classes, counts)], bold)


def report_kind(report: dict) -> str:
    if "cells" in report:
        return "sweep"
    if "n_outages" in report:
        return "detection"
    if "confusion" in report and "folds" in report:
        return "cv"
    if "diagonal_fraction" in report:
        return "consistency"
    if "bin_edges_s" in report:
        return "stats"
    return "generic"


def export_report(report: dict, destination=None) -> bytes:
    """Render `report` as a workbook; writes to `destination` (path) when given and returns the bytes."""
    if not isinstance(report, dict):
        raise FormatError("report must be a JSON object")
    bio = io.BytesIO()
    wb = xlsxwriter.Workbook(bio, {"in_memory": True})
    bold = wb.add_format({"bold": True})
    kind = report_kind(report)

    _table(wb, "Summary", ["field", "value"], [list(kv) for kv in _scalars(report)], bold)

    if kind == "detection":
        pc = report.get("per_class") or {}
        _table(wb, "PerClass", ["class", "n", "detected", "early", "detection_rate", "early_rate"],
               [[c, v["n"], v["detected"], v["early"], v["detection_rate"], v["early_rate"]] for c, v in pc.items()],
               bold)
        dets = report.get("detections") or []
        if dets:
            cols = list(dets[0].keys())
            _table(wb, "Detections", cols, [[d.get(c) for c in cols] for d in dets], bold)
    elif kind == "sweep":
        rows = []
        for cell in report["cells"]:
            (param, value), = cell["params"].items()
            rep = cell.get("report") or {}
            rows.append([param, value, cell.get("status"), rep.get("n_detected"), rep.get("n_early"),
                         rep.get("n_late"), rep.get("false_negatives"), rep.get("false_positives"),
                         rep.get("mean_time_diff_s"), cell.get("error")])
        _table(wb, "Cells", ["parameter", "value", "status", "n_detected", "n_early", "n_late",
                             "false_negatives", "false_positives", "mean_time_diff_s", "error"], rows, bold)
    elif kind == "cv":
        _matrix(wb, "Confusion", report["classes"], report["confusion"], bold)
        _table(wb, "Repeats", ["repeat", "accuracy", "macro_f1"],
               [[i, a, f] for i, (a, f) in enumerate(zip(report.get("accuracy_per_repeat") or [],
                                                         report.get("macro_f1_per_repeat") or []))], bold)
    elif kind == "consistency":
        _matrix(wb, "Matrix", report["classes"], report["counts"], bold)
    elif kind == "stats":
        edges = report["bin_edges_s"]
        labels = [f"{edges[i]:.0f}-{edges[i + 1]:.0f}s" for i in range(len(edges) - 1)]
        _table(wb, "Durations", ["class"] + labels,
               [[c] + list(v) for c, v in (report.get("classes") or {}).items()], bold)

    wb.close()
    data = bio.getvalue()
    if destination is not None:
        with open(destination, "wb") as f:
            f.write(data)
    return data
