import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resp_scalogram.errors import EmptyMatrix, LabelOutOfRange, LengthMismatch
from resp_scalogram.metrics import confusion, report


def test_two_class_hand_example():
    truth = [0] * 10 + [1] * 10
    pred = [0] * 8 + [1] * 2 + [0] * 1 + [1] * 9
    cm = confusion(truth, pred, 2, ("Healthy", "Sick"))
    assert cm.counts.tolist() == [[8, 2], [1, 9]]
    rep = report(cm)
    assert rep.accuracy == pytest.approx(17 / 20)
    assert rep.precision == pytest.approx([8 / 9, 9 / 11])
    assert rep.recall == pytest.approx([0.8, 0.9])
    assert rep.f1[0] == pytest.approx(2 * (8 / 9) * 0.8 / (8 / 9 + 0.8))
    assert rep.specificity == pytest.approx(0.8)
    assert rep.sensitivity == pytest.approx(0.9)
    assert rep.icbhi_score == pytest.approx(0.85)


labels = st.integers(1, 6).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)),
                                             max_size=60)))


@settings(max_examples=60, deadline=None)
@given(labels)
def test_confusion_recount_and_invariants(case):
    n, pairs = case
    truth = [t for t, _ in pairs]
    pred = [p for _, p in pairs]
    cm = confusion(truth, pred, n)
    brute = [[sum(1 for t, p in pairs if (t, p) == (i, j)) for j in range(n)] for i in range(n)]
    assert cm.counts.tolist() == brute
    assert cm.total == len(pairs)
    if not pairs:
        return
    rep = report(cm)
    assert abs(rep.accuracy - rep.weighted_accuracy) <= 1e-12
    for v in rep.precision + rep.recall + rep.f1:
        assert 0.0 <= v <= 1.0
    # Relabelling the classes permutes the matrix and leaves accuracy unchanged.
    perm = np.random.default_rng(len(pairs)).permutation(n)
    cm2 = confusion(perm[truth], perm[pred], n)
    np.testing.assert_array_equal(cm2.counts[np.ix_(perm, perm)], cm.counts)
    assert report(cm2).accuracy == rep.accuracy


def test_empty_inputs_and_errors():
    cm = confusion([], [], 3)
    assert cm.counts.tolist() == [[0] * 3] * 3
    with pytest.raises(EmptyMatrix):
        report(cm)
    with pytest.raises(LengthMismatch):
        confusion([0, 1], [0], 2)
    with pytest.raises(LabelOutOfRange):
        confusion([0, 2], [0, 1], 2)
    with pytest.raises(LabelOutOfRange):
        report(confusion([0], [0], 2), healthy_index=2)


def test_missing_class_gives_zero_not_nan():
    rep = report(confusion([0, 0, 1], [0, 0, 0], 3))
    assert rep.recall == [1.0, 0.0, 0.0]
    assert rep.precision[1] == 0.0 and rep.f1[2] == 0.0
    assert not any(np.isnan(rep.precision + rep.recall + rep.f1))


def test_report_serialization():
    rep = report(confusion([0, 1, 1], [0, 1, 0], 2, ("Healthy", "COPD")))
    data = json.loads(rep.to_json())
    assert data["confusion"] == [[1, 0], [1, 1]] and data["class_names"] == ["Healthy", "COPD"]
    text = rep.to_text()
    assert "COPD" in text and "ICBHI score" in text
