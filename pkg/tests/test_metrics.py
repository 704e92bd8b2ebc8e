import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omib.metrics import accuracy, binary_auc, f1_at_matched_threshold


def brute_auc(scores, labels):
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p, n in itertools.product(pos, neg))
    return total / (len(pos) * len(neg))


def test_auc_perfect():
    assert binary_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0


def test_auc_all_tied():
    assert binary_auc([1, 1, 1, 1], [0, 1, 0, 1]) == 0.5


def test_auc_inverted():
    assert binary_auc([0.9, 0.8, 0.1], [0, 0, 1]) == 0.0


labelled = st.integers(2, 40).flatmap(
    lambda n: st.tuples(
        st.lists(st.integers(-5, 5), min_size=n, max_size=n),
        st.lists(st.integers(0, 1), min_size=n, max_size=n),
    )
).filter(lambda t: 0 < sum(t[1]) < len(t[1]))


@settings(max_examples=200, deadline=None)
@given(labelled)
def test_auc_matches_pairwise_count(data):
    scores, labels = data
    assert binary_auc(scores, labels) == pytest.approx(brute_auc(scores, labels), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(labelled)
def test_auc_invariant_to_monotone_transform(data):
    scores, labels = data
    s = np.asarray(scores, dtype=float)
    assert binary_auc(np.exp(s / 3), labels) == pytest.approx(binary_auc(s, labels), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(labelled)
def test_f1_in_unit_interval(data):
    assert 0.0 <= f1_at_matched_threshold(*data) <= 1.0


def test_f1_perfect_and_worst():
    assert f1_at_matched_threshold([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert f1_at_matched_threshold([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0]) == 0.0


def test_f1_tie_break_by_index():
    # one positive, both tied at top: the lower index is flagged
    assert f1_at_matched_threshold([1.0, 1.0, 0.0], [1, 0, 0]) == 1.0
    assert f1_at_matched_threshold([1.0, 1.0, 0.0], [0, 1, 0]) == 0.0


@pytest.mark.parametrize("fn", [binary_auc, f1_at_matched_threshold])
def test_single_class_rejected(fn):
    with pytest.raises(ValueError, match="both classes"):
        fn([0.1, 0.2], [1, 1])


def test_accuracy():
    assert accuracy([1, 0, 1, 1], [1, 0, 0, 1]) == 0.75
    with pytest.raises(ValueError):
        accuracy([], [])
    with pytest.raises(ValueError):
        accuracy([1], [1, 0])
