import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omib.mine import (
    BetaBounds,
    MineConfig,
    analytic_gaussian_mi,
    bounds_from_estimates,
    compute_beta_bounds,
    estimate_mi,
    mine_train,
)


def test_two_view_bounds_by_hand():
    b = bounds_from_estimates([2.0, 3.0], {(0, 1): 1.0})
    assert b.m_l == pytest.approx(1 / 15, abs=1e-12)
    assert b.m_u == pytest.approx(1 / 12, abs=1e-12)
    assert b.midpoint == pytest.approx((1 / 15 + 1 / 12) / 2, abs=1e-12)


def test_three_view_bounds_by_hand():
    H = [1.0, 2.0, 3.0]
    I = {(0, 1): 0.5, (0, 2): 0.25, (1, 2): 0.75}
    b = bounds_from_estimates(H, I)
    assert b.m_l2 == pytest.approx(1 / 30, abs=1e-12)
    assert b.m_u2 == pytest.approx(1 / (5 * (6 - (2 / 3) * 1.5)), abs=1e-12)
    assert b.m_l is None and b.lower == b.m_l2


def test_negative_mi_clamped_to_zero():
    b = bounds_from_estimates([1.0, 1.0], {(0, 1): -0.3})
    assert b.I_clamped[(0, 1)] == 0.0
    assert b.I[(0, 1)] == -0.3
    assert b.m_l == b.m_u


def test_overlarge_mi_clamped_below_entropy_sum():
    b = bounds_from_estimates([1.0, 1.0], {(0, 1): 5.0})
    assert b.I_clamped[(0, 1)] < 2.0
    assert np.isfinite(b.m_u)


def test_zero_entropy_rejected_with_raw_values():
    with pytest.raises(ValueError, match="H="):
        bounds_from_estimates([0.0, 0.0], {(0, 1): 0.0})


def test_wrong_view_count():
    with pytest.raises(ValueError):
        bounds_from_estimates([1.0], {})


def test_three_views_equal_entropies():
    b = bounds_from_estimates([10.0] * 3, {(0, 1): 3.0, (0, 2): 3.0, (1, 2): 3.0})
    assert b.m_u2 == pytest.approx(1 / 120, abs=1e-12)


@settings(max_examples=1000, deadline=None)
@given(
    st.lists(st.floats(1e-3, 50), min_size=2, max_size=3),
    st.lists(st.floats(0, 1), min_size=3, max_size=3),
)
def test_lower_never_exceeds_upper(H, fracs):
    # MI can never exceed the smaller entropy of the pair
    pairs = [(0, 1)] if len(H) == 2 else [(0, 1), (0, 2), (1, 2)]
    I = {(i, j): f * min(H[i], H[j]) for (i, j), f in zip(pairs, fracs)}
    b = bounds_from_estimates(H, I)
    assert b.lower <= b.upper


def test_inconsistent_three_view_estimates_rejected():
    with pytest.raises(ValueError, match="nonpositive"):
        bounds_from_estimates([1.0, 1.0, 0.5], {(0, 1): 2.0, (0, 2): 1.0, (1, 2): 1.0})


def test_json_round_trip():
    b = bounds_from_estimates([1.0, 2.0, 3.0], {(0, 1): 0.1, (0, 2): 0.2, (1, 2): 0.3})
    b.mine_digest = "abc"
    back = BetaBounds.from_json(b.to_json())
    assert back == b


def test_analytic_gaussian_mi():
    assert analytic_gaussian_mi(0.0) == 0.0
    assert analytic_gaussian_mi(0.9) == pytest.approx(0.8304, abs=1e-4)
    with pytest.raises(ValueError):
        analytic_gaussian_mi(1.0)


def test_config_digest_tracks_fields():
    assert MineConfig().digest() == MineConfig().digest()
    assert MineConfig(epochs=5).digest() != MineConfig().digest()
    with pytest.raises(ValueError):
        MineConfig(batch_size=0)


def _gauss_pair(rho, n, seed):
    g = np.random.default_rng(seed)
    x = g.standard_normal(n)
    return x, rho * x + np.sqrt(1 - rho * rho) * g.standard_normal(n)


def test_small_mine_orders_dependence():
    cfg = MineConfig(hidden=32, epochs=60, batch_size=512)
    lo = estimate_mi(*_gauss_pair(0.0, 2000, 1), cfg)
    hi = estimate_mi(*_gauss_pair(0.9, 2000, 1), cfg)
    assert hi > lo + 0.4


def test_mine_is_seeded():
    x, z = _gauss_pair(0.5, 500, 2)
    cfg = MineConfig(hidden=8, epochs=3, batch_size=128)
    assert mine_train(x, z, cfg).history == mine_train(x, z, cfg).history


def test_mine_row_mismatch():
    with pytest.raises(ValueError):
        mine_train(np.zeros(5), np.zeros(6))


def test_compute_beta_bounds_end_to_end():
    g = np.random.default_rng(0)
    shared = g.standard_normal((600, 2))
    v1 = np.hstack([shared, g.standard_normal((600, 2))])
    v2 = np.hstack([shared, g.standard_normal((600, 2))])
    b = compute_beta_bounds([v1, v2], MineConfig(hidden=16, epochs=10, batch_size=256, estimate_batches=2))
    assert 0 < b.m_l <= b.m_u
    assert b.mine_digest
