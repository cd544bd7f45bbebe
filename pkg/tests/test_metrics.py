from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fanet_koopman.metrics import (ConfusionCounts, EvalReport, classify_events, f1_score,
                                   false_alarm_rate, prediction_error, step_errors)

from oracles import confusion_loop


def test_f1_and_far_exact_values():
    assert f1_score(ConfusionCounts(tp=2, fp=1, fn=1)) == 2 / 3
    assert Fraction(f1_score(ConfusionCounts(tp=2, fp=1, fn=1))).limit_denominator() == Fraction(2, 3)
    assert false_alarm_rate(ConfusionCounts(fp=1, tn=3)) == 0.25


def test_perfect_and_degenerate_scores():
    assert f1_score(ConfusionCounts(tp=5, tn=3)) == 1.0
    assert false_alarm_rate(ConfusionCounts(tp=5, tn=3)) == 0.0
    empty = EvalReport(0.0, ConfusionCounts(tn=4), 20, "oracle", 1.0)
    assert empty.f1 == 0.0 and empty.f1_degenerate and not empty.far_degenerate
    all_events = EvalReport(0.0, ConfusionCounts(tp=4), 20, "oracle", 1.0)
    assert all_events.far == 0.0 and all_events.far_degenerate


@pytest.mark.parametrize("actual,predicted,field", [
    (True, True, "tp"), (False, True, "fp"), (False, False, "tn"), (True, False, "fn")])
def test_table_mapping(actual, predicted, field):
    counts = classify_events([actual], [predicted])
    assert getattr(counts, field) == 1 and counts.total == 1


@given(st.lists(st.tuples(st.booleans(), st.booleans()), max_size=60))
@settings(max_examples=100, deadline=None)
def test_classification_matches_loop(pairs):
    actual = [a for a, _ in pairs]
    predicted = [p for _, p in pairs]
    c = classify_events(actual, predicted)
    assert (c.tp, c.fp, c.tn, c.fn) == confusion_loop(actual, predicted)
    assert 0.0 <= f1_score(c) <= 1.0 and 0.0 <= false_alarm_rate(c) <= 1.0


def test_counts_add_and_validate():
    assert ConfusionCounts(1, 2, 3, 4) + ConfusionCounts(1, 1, 1, 1) == ConfusionCounts(2, 3, 4, 5)
    with pytest.raises(ValueError):
        ConfusionCounts(tp=-1)
    with pytest.raises(ValueError):
        classify_events([True], [True, False])


def test_prediction_error_examples():
    truth = np.full((3, 2, 1), 10.0)  # 10 dB everywhere
    assert prediction_error(truth, truth) == 0.0
    off = truth * 10.0  # +10 dB on each of 2 entries -> 200 per step
    assert prediction_error(truth, off) == pytest.approx(200.0)
    assert prediction_error(truth, off, domain="linear") == pytest.approx(2 * 90.0 ** 2)
    np.testing.assert_allclose(step_errors(truth, off), [200.0] * 3)


def test_prediction_error_grows_with_linear_drift():
    truth = np.ones((4, 1, 1))
    pred = np.array([10 ** (k / 10) for k in range(1, 5)]).reshape(4, 1, 1)
    np.testing.assert_allclose(step_errors(truth, pred), [1, 4, 9, 16])
    assert prediction_error(truth, pred, steps=2) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        prediction_error(truth, pred, steps=5)
    with pytest.raises(ValueError):
        step_errors(truth, pred, domain="log")
