import numpy as np
import pytest

from springverb import ModelConfig, tensor
from springverb.gradcheck import THRESHOLD, GradcheckReport, GradcheckRow, gradcheck_model
from springverb.models import KINDS


@pytest.mark.parametrize("kind", KINDS)
def test_default_models_pass(kind):
    report = gradcheck_model(ModelConfig.default(kind), seed=1)
    assert report.passed, report.table()
    assert report.rows


@pytest.mark.slow
@pytest.mark.parametrize("seed", [2, 3])
@pytest.mark.parametrize("kind", KINDS)
def test_default_models_pass_more_seeds(kind, seed):
    report = gradcheck_model(ModelConfig.default(kind), seed=seed)
    assert report.passed, report.table()


def test_a_wrong_derivative_is_caught(monkeypatch):
    forward, _ = tensor._UNARY["tanh"]
    monkeypatch.setitem(tensor._UNARY, "tanh", (forward, lambda x, y, g: g * (1.0 - y)))
    report = gradcheck_model(ModelConfig.default("wavenet"), seed=1)
    assert not report.passed
    assert report.failures()
    assert "FAIL" in report.table()


def test_report_table():
    report = GradcheckReport("gcn (seed 1)", [GradcheckRow("input.weight", 1.0, 1.0, 1e-9),
                                              GradcheckRow("output.bias", 1.0, 2.0, 0.5)])
    lines = report.table().splitlines()
    assert lines[0] == "gcn (seed 1)"
    assert lines[2].endswith("ok") and lines[3].endswith("FAIL")
    assert [r.group for r in report.failures()] == ["output.bias"]
    assert GradcheckRow("x", 0.0, 0.0, THRESHOLD).passed is False
    assert np.isclose(THRESHOLD, 1e-4)
