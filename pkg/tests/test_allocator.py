import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ratebalance import bounds
from ratebalance.allocator import (allocate_cooperation_set, allocate_finite,
                                   allocate_infinite, antennas_for_budget,
                                   dump_allocations, error_sum)
from ratebalance.quantizer import scalar_feedback_bound
from ratebalance.topology import reference_layout, reference_gain_row

import oracles

gains = st.lists(st.floats(1e-4, 1e2), min_size=1, max_size=8)


def test_two_antenna_example():
    a = allocate_finite([1.0, 0.25], 4.0, 1, Q=0)
    assert a.water_level == pytest.approx(-3.0)
    np.testing.assert_allclose(a.bits, [3.0, 1.0])
    assert a.xi2 == pytest.approx(1 / 8)
    np.testing.assert_array_equal(a.active, [0, 1])
    best = oracles.brute_force_allocation([1.0, 0.25], 4.0, 0)
    assert error_sum(a, [1.0, 0.25]) == pytest.approx(best)


def test_weak_antenna_dropped():
    g = [1.0, 2.0 ** -10]
    a = allocate_finite(g, 4.0, 1, Q=0)
    np.testing.assert_array_equal(a.active, [0])
    np.testing.assert_allclose(a.bits, [4.0])
    assert a.xi2 == pytest.approx(2.0 ** -4)
    assert error_sum(a, g) == pytest.approx(2.0 ** -4 + 2.0 ** -10)
    assert error_sum(a, g) == pytest.approx(
        oracles.brute_force_allocation(g, 4.0, 0))


def test_zero_budget():
    g = np.array([1.0, 0.5, 0.1])
    a = allocate_finite(g, 0.0, 180)
    assert a.size == 0
    assert error_sum(a, g) == pytest.approx(g.sum())


def test_budget_at_overhead_is_empty():
    assert allocate_finite([1.0], 2.0 / 180, 180, Q=2).size == 0
    assert allocate_finite([1.0], 2.1 / 180, 180, Q=2).size == 1


def test_negative_budget():
    with pytest.raises(ValueError):
        allocate_finite([1.0], -0.1, 10)


def test_oracle_optimality_random():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n = int(rng.integers(1, 5))
        g = 10 ** rng.uniform(-3, 0, n)
        budget = rng.uniform(0, 12)
        Q = int(rng.choice([0, 2]))
        a = allocate_finite(g, budget, 1, Q)
        mine = error_sum(a, g)
        best = oracles.brute_force_allocation(g, budget, Q)
        # the grid optimum is a feasible split, the continuous one is better
        assert mine <= best * (1 + 1e-9)
        # rounding every active antenna down to the grid costs < 2^0.01
        assert best <= mine * 2 ** 0.01 * (1 + 1e-9) + 1e-15


@given(gains, st.floats(0, 20), st.integers(1, 200), st.sampled_from([0, 2]))
def test_equal_error_and_activity(g, F, T, Q):
    g = np.array(g)
    a = allocate_finite(g, F / T * 10, T, Q)
    if a.size == 0:
        return
    err = g[a.active] * 2.0 ** (Q - a.bits)
    assert err.max() / err.min() - 1 < 1e-12
    np.testing.assert_allclose(err, a.xi2, rtol=1e-12)
    assert np.all(a.bits > Q)
    assert a.total_bits == pytest.approx(F * 10, rel=1e-12)
    # water level from the allocation itself
    lam = (np.sum(np.log2(g[a.active])) - a.total_bits) / a.size
    assert lam == pytest.approx(a.water_level, abs=1e-12)
    np.testing.assert_allclose(a.bits, np.log2(g[a.active]) - lam,
                               atol=1e-12)


@given(gains, st.integers(0, 2))
def test_inactive_would_not_help(g, Q):
    g = np.array(g)
    a = allocate_finite(g, 6.0, 1, Q)
    inactive = np.setdiff1d(np.arange(g.size), a.active)
    base = error_sum(a, g)
    for j in inactive:
        # forcing j active at the same water level
        bits_j = np.log2(g[j]) - a.water_level if a.size else -np.inf
        if bits_j > Q:
            # feasible only by spending more than the budget
            assert a.total_bits + bits_j > 6.0 + 1e-9
        # a prefix including j never beats the chosen one
        for L in range(1, g.size + 1):
            b = allocate_finite(g[np.argsort(-g, kind='stable')[:L]], 6.0, 1,
                                Q)
            rest = np.sort(g)[::-1][L:].sum()
            assert base <= error_sum(b, np.sort(g)[::-1][:L]) + rest + 1e-12


@given(gains, st.sampled_from([0, 2]))
def test_monotone_in_budget(g, Q):
    g = np.array(g)
    prev_err, prev_size = np.inf, 0
    for F in np.linspace(0, 30, 31):
        a = allocate_finite(g, F, 1, Q)
        e = error_sum(a, g)
        assert e <= prev_err * (1 + 1e-12)
        assert a.size >= prev_size
        prev_err, prev_size = e, a.size


def test_ties_broken_by_index():
    a = allocate_finite([0.5, 1.0, 0.5, 0.5], 3.0, 1)
    assert list(a.active[:1]) == [1]
    assert list(allocate_finite([1.0, 1.0], 10, 1).active) == [0, 1]


def test_infinite_single_antenna():
    g = np.array([1.0, 0.4, 0.2])
    a = allocate_infinite(g, 0.5, 180, Q=2)
    np.testing.assert_array_equal(a.active, [0])


def test_infinite_unit_distance_rule():
    topo = reference_layout()
    d = np.hypot(*(topo.antenna_positions - topo.mobiles[0]).T)
    g = d ** -4.0
    a = allocate_infinite(g, 1.0, 180)
    np.testing.assert_array_equal(np.sort(a.active), np.nonzero(d < 1)[0])


def test_infinite_six_antennas_rate():
    g = reference_gain_row(reference_layout())
    xi2 = 0.5 * (g[5] + g[6]) if g[5] > g[6] else None
    assert xi2 is not None
    a = allocate_infinite(g, xi2, 180, Q=2)
    assert a.size == 6
    direct = np.sum(2 + np.log2(g[:6] / xi2)) / 180
    assert a.feedback_rate == pytest.approx(direct, rel=1e-12)
    assert a.feedback_rate == pytest.approx(
        np.sum(scalar_feedback_bound(g[:6], xi2)) / 180, rel=1e-12)


def test_infinite_empty():
    a = allocate_infinite([1.0, 0.5], 1.0, 10)
    assert a.size == 0 and a.feedback_rate == 0.0
    with pytest.raises(ValueError):
        allocate_infinite([1.0], 0.0, 10)


def test_cooperation_set_limits_candidates():
    g = np.array([0.1, 1.0, 0.5, 0.3])
    a = allocate_cooperation_set(g, 2, 1e-3, 180)
    np.testing.assert_array_equal(a.active, [1, 2])


def test_error_sum_examples():
    g = np.array([1.0, 0.5, 0.25, 0.1])
    full = allocate_infinite(g, 0.05, 1)
    assert error_sum(full, g) == pytest.approx(4 * 0.05)
    part = allocate_infinite(g, 0.3, 1)
    assert error_sum(part, g) == pytest.approx(2 * 0.3 + 0.25 + 0.1)


def test_antennas_for_budget():
    T, Q, alpha, b = 180, 2, 4.0, 3.0
    F1 = bounds.f_tilde((1 / b) ** (-alpha / 2), b, T, alpha, Q)
    assert F1 == pytest.approx(Q / T)
    assert antennas_for_budget(F1, T, Q, alpha, b) == 1
    xi2 = 1e-3
    F = bounds.f_tilde(xi2, b, T, alpha, Q)
    n1 = antennas_for_budget(F, T, Q, alpha, b)
    assert n1 == int(np.floor(b * xi2 ** -0.5 + 1e-9))
    back = bounds.xi_of_budget(F, b, T, alpha, Q)
    assert bounds.f_tilde(back, b, T, alpha, Q) == pytest.approx(F, rel=1e-9)
    # doubling b doubles the pre-floor value at fixed xi2
    assert 2 * b * xi2 ** -0.5 == pytest.approx(
        (2 * b) * back ** -0.5, rel=1e-9)
    with pytest.raises(ValueError):
        antennas_for_budget(0.0, T, Q, alpha, b)


def test_dump(tmp_path):
    a = allocate_finite([1.0, 0.25], 4.0, 1)
    dump_allocations(tmp_path / 'a.json', [a])
    d = json.loads((tmp_path / 'a.json').read_text())
    assert d[0]['water_level'] == pytest.approx(-3.0)
    assert d[0]['antennas'] == [[0, 3.0], [1, 1.0]]
