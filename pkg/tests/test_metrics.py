import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lobpred.labeling import EmptyInput, Label
from lobpred.metrics import (
    ConfusionMatrix,
    EvaluationReport,
    LengthMismatch,
    aggregate_daily,
    class_metrics,
    confusion,
    directional_accuracy,
    merge,
    overall_accuracy,
    render_comparison,
    render_table,
    volatility_accuracy,
)

# rows: true UP, DOWN, STABLE; columns: predicted
FIXTURE = ConfusionMatrix(np.array([[5, 2, 3],
                                    [1, 6, 1],
                                    [2, 1, 4]]))


def test_fixture_rates():
    per = class_metrics(FIXTURE)
    assert per["UP"]["precision"] == pytest.approx(5 / 8)
    assert per["UP"]["recall"] == pytest.approx(0.5)
    assert per["UP"]["f1"] == pytest.approx(2 * 0.625 * 0.5 / 1.125)
    assert overall_accuracy(FIXTURE) == pytest.approx(15 / 25)
    # STABLE/STABLE 4 plus the 14 DIVERGE/DIVERGE cells
    assert volatility_accuracy(FIXTURE) == pytest.approx(18 / 25)
    assert directional_accuracy(FIXTURE) == pytest.approx(11 / 14)
    assert directional_accuracy(FIXTURE, "true_diverge") == pytest.approx(11 / 18)


def test_confusion_from_labels():
    truths = [Label.UP] * 4 + [Label.DOWN] * 3 + [Label.STABLE] * 3
    preds = [Label.UP, Label.UP, Label.DOWN, Label.STABLE,
             Label.DOWN, Label.DOWN, Label.UP,
             Label.STABLE, Label.STABLE, Label.UP]
    cm = confusion(preds, truths)
    assert cm.counts.tolist() == [[2, 1, 1], [1, 2, 0], [1, 0, 2]]
    assert overall_accuracy(cm) == pytest.approx(0.6)
    assert volatility_accuracy(cm) == pytest.approx(8 / 10)
    assert directional_accuracy(cm) == pytest.approx(4 / 6)


def test_no_diverge_predictions_undefined():
    cm = ConfusionMatrix(np.array([[0, 0, 3], [0, 0, 2], [0, 0, 5]]))
    assert directional_accuracy(cm) is None
    assert directional_accuracy(cm, "true_diverge") == 0.0
    assert class_metrics(cm)["UP"]["precision"] is None
    assert class_metrics(cm)["UP"]["f1"] is None
    assert volatility_accuracy(cm) == pytest.approx(0.5)


def test_empty_and_mismatched():
    with pytest.raises(EmptyInput):
        confusion([], [])
    with pytest.raises(LengthMismatch):
        confusion([0, 1], [0])
    with pytest.raises(ValueError):
        directional_accuracy(FIXTURE, "nonsense")


@settings(max_examples=200, deadline=None)
@given(arrays(np.int64, (3, 3), elements=st.integers(0, 50)))
def test_rate_invariants(counts):
    cm = ConfusionMatrix(counts)
    for fn in (overall_accuracy, volatility_accuracy, directional_accuracy):
        v = fn(cm)
        assert v is None or 0.0 <= v <= 1.0
    if cm.total:
        # every exact hit is also a volatility hit
        assert volatility_accuracy(cm) >= overall_accuracy(cm)
    for d in class_metrics(cm).values():
        for v in d.values():
            assert v is None or 0.0 <= v <= 1.0


def test_merge_sums_counts():
    a = ConfusionMatrix(np.eye(3, dtype=int))
    assert merge([a, FIXTURE]).counts.tolist() == (np.eye(3, dtype=int) + FIXTURE.counts).tolist()
    assert merge([]).total == 0


def report(day, cm):
    return EvaluationReport.from_confusion(cm, day)


def test_aggregation_mean_and_population_std():
    # overall accuracy 0.6 on one day and 0.8 on the other
    d1 = ConfusionMatrix(np.array([[3, 0, 1], [0, 2, 1], [1, 1, 1]]))
    d2 = ConfusionMatrix(np.array([[4, 0, 1], [0, 3, 0], [0, 1, 1]]))
    assert overall_accuracy(d1) == pytest.approx(0.6) and overall_accuracy(d2) == pytest.approx(0.8)
    agg = aggregate_daily([report("a", d1), report("b", d2)])
    assert agg["overall_accuracy"].mean == pytest.approx(0.7)
    assert agg["overall_accuracy"].std == pytest.approx(0.1)
    assert agg["overall_accuracy"].n_days == 2


def test_undefined_days_excluded():
    defined = ConfusionMatrix(np.array([[2, 0, 0], [0, 1, 1], [0, 0, 2]]))
    collapsed = ConfusionMatrix(np.array([[0, 0, 3], [0, 0, 2], [0, 0, 5]]))
    agg = aggregate_daily([report("a", defined), report("b", collapsed)])
    assert agg["directional_accuracy"].mean == pytest.approx(1.0)
    assert agg["directional_accuracy"].excluded == 1
    text = render_table(agg, "t")
    assert "[1 day(s) undefined]" in text
    agg = aggregate_daily([report("b", collapsed)])
    assert agg["directional_accuracy"].mean is None
    assert "n/a" in render_comparison({"x": agg})


def test_report_json_round_trip():
    r = EvaluationReport.from_confusion(FIXTURE, "2022-01-03", extra={"alpha": 1.5e-4})
    back = EvaluationReport.from_json(r.to_json())
    assert back == r
    assert back.sizes == {"UP": 10, "DOWN": 8, "STABLE": 7} and back.n_samples == 25
