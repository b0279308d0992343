import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from springverb import (
    AudioClip, EvalReport, EvalRow, MetricException, ModelConfig, SamplePair, build, esr,
    dummy_regressor_metrics, evaluate, measure_rtf, mrstft, mrstft_metric, naive_baseline_metrics,
    rtf, Tensor,
)
from signals import pluck, sine, wet_of


def pairs_of(*waves, rate=16000, split="test"):
    return [SamplePair(AudioClip(dry, rate), AudioClip(wet, rate), (0.0, 0.0), split)
            for dry, wet in waves]


def test_esr_values():
    assert esr([1.0, 2.0], [1.0, 2.0]) == 0.0
    assert esr([0.0, 0.0], [1.0, 2.0]) == 1.0
    assert esr([2.0, 1.0], [1.0, 2.0]) == pytest.approx(0.4, abs=1e-15)


def test_esr_errors():
    with pytest.raises(MetricException, match="ESR undefined for silent target"):
        esr([1.0, 2.0], [0.0, 0.0])
    with pytest.raises(MetricException, match="equal lengths"):
        esr([1.0], [1.0, 2.0])


def test_esr_against_brute_force(rng):
    for _ in range(100):
        n = int(rng.integers(1, 200))
        y, y_hat = rng.normal(size=n), rng.normal(size=n)
        expected = sum((a - b) ** 2 for a, b in zip(y, y_hat)) / sum(a * a for a in y)
        assert abs(esr(y_hat, y) - expected) < 1e-10 * max(1.0, expected)


@given(arrays(np.float64, 32, elements=st.floats(-1, 1)),
       arrays(np.float64, 32, elements=st.floats(-1, 1)),
       st.floats(0.01, 100))
def test_esr_is_scale_invariant(pred, target, scale):
    if np.dot(target, target) < 1e-6:
        return
    assert esr(scale * pred, scale * target) == pytest.approx(esr(pred, target), rel=1e-9)


def test_mrstft_metric(rng):
    x = rng.normal(size=4096)
    assert mrstft_metric(x, x) == 0.0
    other = rng.normal(size=4096)
    assert mrstft_metric(other, x) == pytest.approx(mrstft(Tensor(other), Tensor(x)).item())


def test_silence_against_noise(rng):
    noise = rng.uniform(-1, 1, 16000)
    assert mrstft_metric(np.zeros(16000), noise) > 1.0


def test_rtf_measurement():
    model = build(ModelConfig.default("gcn", channels=4, n_blocks=1, stacks_per_block=2), 0)
    result = measure_rtf(model, 0.1, 16000, repeats=3)
    assert len(result.runs) == 3 and result.median > 0
    assert result.min <= result.median <= result.max
    assert result.to_dict()["clip_seconds"] == pytest.approx(0.1)
    assert rtf(model, 0.1, 16000, repeats=3) > 0
    with pytest.raises(MetricException, match="at least 3 repeats"):
        rtf(model, 0.1, 16000, repeats=2)


def test_naive_baseline_is_perfect_when_wet_is_dry():
    dry = pluck(16000, 0.25)
    row = naive_baseline_metrics(pairs_of((dry, dry)))
    assert row.name == "NB"
    assert row.esr == 0.0 and row.mrstft == 0.0


def test_dummy_regressor_matches_the_noise_energy():
    target = sine(220.0, 16000, 1.0, amplitude=np.sqrt(2) * 0.5)
    row = dummy_regressor_metrics(pairs_of((target, target)), seed=3)
    assert row.name == "DR"
    assert row.esr == pytest.approx(1 + 1 / (3 * 0.25), rel=0.05)
    assert row.rtf is None
    again = dummy_regressor_metrics(pairs_of((target, target)), seed=3)
    assert again == row


def test_empty_split_is_an_error():
    with pytest.raises(MetricException, match="empty"):
        naive_baseline_metrics([])


def test_table_marks_lowest_values():
    report = EvalReport([EvalRow("GCN", 0.5, 2.0, 0.01), EvalRow("NB", 1.4, 1.5),
                         EvalRow("DR", 7.5, 9.0)], items=3, hardware="cpu", seed=0)
    lines = report.table().splitlines()
    assert lines[0].split(" | ")[0].strip() == "Model"
    assert "0.5000*" in lines[2] and "0.0100*" in lines[2]
    assert "1.5000*" in lines[3] and lines[3].rstrip().endswith("-")
    assert "*" not in lines[4]
    assert report.row("NB").esr == 1.4
    data = report.to_dict()
    assert data["rows"][0] == {"name": "GCN", "esr": 0.5, "mrstft": 2.0, "rtf": 0.01}
    with pytest.raises(KeyError):
        report.row("LSTM")


def test_evaluate_reports_model_and_baselines():
    rate = 16000
    drys = [pluck(rate, 0.2, seed=i) for i in range(2)]
    pairs = pairs_of(*[(dry, wet_of(dry, rate, seed=i)) for i, dry in enumerate(drys)])
    model = build(ModelConfig.default("gcn", channels=4, n_blocks=1, stacks_per_block=2), 0)
    report = evaluate(model, pairs, seed=0, run_config={"note": "unit"})
    assert [r.name for r in report.rows] == ["GCN", "NB", "DR"]
    assert report.items == 2 and report.split == "test"
    assert report.row("GCN").rtf > 0
    assert report.row("NB").esr == pytest.approx(naive_baseline_metrics(pairs).esr)
    assert report.to_dict()["run_config"] == {"note": "unit"}


def test_evaluate_rejects_rate_mismatch():
    model = build(ModelConfig.default("gcn", channels=4, n_blocks=1, stacks_per_block=2), 0)
    pairs = pairs_of((np.zeros(4096), np.ones(4096)), rate=48000)
    with pytest.raises(MetricException, match="16000 Hz"):
        evaluate(model, pairs, seed=0)
