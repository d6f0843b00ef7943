import pytest

from permitwatch.errors import FormatError
from permitwatch.services.baselines import PermitOracle
from permitwatch.services.dataset import Geometry, InstanceKind
from permitwatch.services.detect import evaluate
from permitwatch.services.export import export_report, report_kind
from permitwatch.services.frames import OutageEvent
from permitwatch.services.labels import LabelClass
from permitwatch.services.outage_stats import outage_stats

from conftest import make_instance


@pytest.fixture
def detection_report():
    insts = [make_instance(label=LabelClass.KRF2), make_instance(kind=InstanceKind.NON_OUTAGE, iid="n")]
    return evaluate(PermitOracle(), insts, Geometry(30, 30, 60), 0.5).to_dict()


def test_report_kinds(detection_report):
    assert report_kind(detection_report) == "detection"
    assert report_kind({"cells": []}) == "sweep"
    assert report_kind({"folds": 8, "confusion": [[1]]}) == "cv"
    assert report_kind({"diagonal_fraction": 1.0, "counts": []}) == "consistency"
    assert report_kind(outage_stats([OutageEvent(0, 300, label_class=LabelClass.LRF)])) == "stats"
    assert report_kind({"anything": 1}) == "generic"


def test_export_writes_workbook(tmp_path, detection_report):
    out = tmp_path / "rep.xlsx"
    data = export_report(detection_report, out)
    assert data[:2] == b"PK"
    assert out.read_bytes() == data


@pytest.mark.parametrize("report", [
    {"cells": [{"params": {"threshold": 0.3}, "status": "failed", "error": "config: x", "report": None}]},
    {"folds": 2, "confusion": [[2, 0], [1, 1]], "classes": ["KRF1", "LRF"],
     "accuracy_per_repeat": [0.75], "macro_f1_per_repeat": [0.7]},
    {"diagonal_fraction": 0.5, "classes": ["KRF1", "Unlabeled"], "counts": [[1, 1], [0, 0]]},
])
def test_export_each_report_kind(report):
    assert export_report(report)[:2] == b"PK"


def test_export_rejects_non_objects():
    with pytest.raises(FormatError):
        export_report([1, 2, 3])
