from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from simpsi.harness.metrics import accuracy, auprc, macro_auprc


def _ap_bruteforce(scores, labels):
    """Exact step-wise AP: one PR point per distinct threshold, in rationals."""
    n_pos = sum(labels)
    total, prev_recall = Fraction(0), Fraction(0)
    for t in sorted(set(scores), reverse=True):
        picked = [y for s, y in zip(scores, labels) if s >= t]
        tp = sum(picked)
        recall = Fraction(tp, n_pos)
        total += (recall - prev_recall) * Fraction(tp, len(picked))
        prev_recall = recall
    return total


def test_hand_enumerated_example():
    assert auprc([0.9, 0.8, 0.7], [1, 0, 1]) == pytest.approx(5 / 6, abs=1e-15)


def test_perfect_separation():
    assert auprc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0


@pytest.mark.parametrize("p,n", [(1, 1), (3, 10), (7, 7), (1, 1000)])
def test_all_equal_scores_give_positive_rate(p, n):
    labels = np.zeros(n, dtype=bool)
    labels[:p] = True
    assert auprc(np.full(n, 0.3), labels) == pytest.approx(p / n, abs=1e-15)


def test_uniform_random_scores_match_positive_rate():
    rng = np.random.default_rng(0)
    labels = np.arange(10_000) % 2 == 0
    assert abs(auprc(rng.random(10_000), labels) - 0.5) < 0.02


@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=1, max_size=40)
       .filter(lambda xs: any(y for _, y in xs)))
def test_matches_rational_bruteforce(pairs):
    scores = [s / 5 for s, _ in pairs]
    labels = [int(y) for _, y in pairs]
    assert auprc(scores, labels) == float(_ap_bruteforce(scores, labels))


@given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=40)
       .filter(lambda xs: any(y for _, y in xs)), st.randoms())
def test_order_independent_and_bounded(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    a = auprc(*zip(*pairs))
    assert a == auprc(*zip(*shuffled))
    assert 0.0 < a <= 1.0


def test_no_positives_is_an_error():
    with pytest.raises(ValueError, match="positive"):
        auprc([0.1, 0.2], [0, 0])


def test_length_mismatch_is_an_error():
    with pytest.raises(ValueError):
        auprc([0.1, 0.2], [1])


def test_macro_auprc_averages_present_classes():
    probs = np.array([[0.9, 0.1, 0.0], [0.2, 0.8, 0.0], [0.6, 0.4, 0.0]])
    labels = np.array([0, 1, 1])
    mean, per = macro_auprc(probs, labels)
    assert per[2] is None
    assert per[0] == 1.0
    assert per[1] == pytest.approx(auprc(probs[:, 1], labels == 1))
    assert mean == pytest.approx((per[0] + per[1]) / 2)


def test_macro_auprc_perfect_predictions():
    labels = np.random.default_rng(1).integers(0, 8, size=(5, 32))
    probs = np.eye(8)[labels]
    mean, per = macro_auprc(probs, labels)
    assert mean == 1.0 and all(v == 1.0 for v in per)


def test_accuracy():
    assert accuracy(np.array([[1, 2], [3, 4]]), np.array([[1, 2], [3, 0]])) == 0.75
    with pytest.raises(ValueError):
        accuracy(np.zeros(3), np.zeros(4))
