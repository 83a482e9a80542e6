import numpy as np
import pytest
from hypothesis import given, strategies as st

from ratebalance.topology import (NetworkTopology, build_hex_grid,
                                  corner_mobile, cyclic_gain_rows,
                                  density_bound, gain_map, reference_layout,
                                  reference_gain_row,
                                  residual_interference_coeff)

import oracles


@pytest.mark.parametrize('rings, count', [(0, 1), (1, 7), (2, 19), (4, 61)])
def test_hex_grid_counts(rings, count):
    topo = build_hex_grid(rings)
    assert topo.num_sites == count == 1 + 3 * rings * (rings + 1)


def test_hex_grid_matches_direct_enumeration():
    topo = build_hex_grid(4)
    ref = oracles.hex_lattice(4)
    a = np.round(topo.sites, 9)
    b = np.round(ref, 9)
    assert {tuple(p) for p in a} == {tuple(p) for p in b}


def test_single_site_at_origin():
    np.testing.assert_array_equal(build_hex_grid(0).sites, [[0.0, 0.0]])


def test_trimmed_grid_has_55_sites():
    topo = build_hex_grid(4, trim_corners=True)
    assert topo.num_sites == 55
    d = np.hypot(*topo.sites.T)
    # the six removed sites are the ones at distance 4
    assert np.all(d < 4 - 1e-9)


def test_negative_rings_rejected():
    with pytest.raises(ValueError):
        build_hex_grid(-1)


def test_corner_mobile_triangle():
    s = np.array([[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]])
    p = corner_mobile(NetworkTopology(s))
    np.testing.assert_allclose(p, s.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(np.hypot(*(s - p).T), 1 / np.sqrt(3),
                               atol=1e-12)


def test_corner_mobile_grid_is_three_way_vertex():
    topo = build_hex_grid(4, trim_corners=True)
    p = corner_mobile(topo)
    d = np.sort(np.hypot(*(topo.sites - p).T))
    np.testing.assert_allclose(d[:3], 1 / np.sqrt(3), atol=1e-12)
    assert d[3] > d[2] + 0.1
    np.testing.assert_allclose(p, [0.5, np.sqrt(3) / 6], atol=1e-12)


def test_corner_mobile_degenerate():
    with pytest.raises(ValueError):
        corner_mobile(build_hex_grid(0))
    with pytest.raises(ValueError):
        corner_mobile(NetworkTopology([[0, 0], [1, 0], [2, 0]]))


@pytest.mark.parametrize('d, alpha, g', [(1.0, 4.0, 1.0),
                                         (1 / np.sqrt(3), 4.0, 9.0),
                                         (2.0, 3.0, 0.125)])
def test_gain_map_values(d, alpha, g):
    topo = NetworkTopology([[0.0, 0.0]], mobiles=[[d, 0.0]], alpha=alpha)
    np.testing.assert_allclose(gain_map(topo), [[g]], rtol=1e-12)


def test_gain_map_zero_distance():
    topo = NetworkTopology([[0.0, 0.0]], mobiles=[[0.0, 0.0]])
    with pytest.raises(ValueError):
        gain_map(topo)


def test_co_located_antennas_share_gain():
    topo = build_hex_grid(1, antennas_per_site=2).with_mobiles([[0.3, 0.1]])
    g = topo.gain
    assert g.shape == (1, 14)
    np.testing.assert_array_equal(g[:, 0::2], g[:, 1::2])


def test_alpha_must_exceed_two():
    with pytest.raises(ValueError):
        NetworkTopology([[0, 0]], alpha=2.0)


def test_cyclic_rows_examples():
    np.testing.assert_array_equal(cyclic_gain_rows([1, 2, 3], 2),
                                  [[1, 2, 3], [3, 1, 2]])
    np.testing.assert_array_equal(cyclic_gain_rows([7], 1), [[7]])
    with pytest.raises(ValueError):
        cyclic_gain_rows([1, 2], 3)


def test_cyclic_rows_full_circulant():
    topo = reference_layout()
    ref = reference_gain_row(topo)
    G = cyclic_gain_rows(ref, 55)
    assert G.shape == (55, 55)
    np.testing.assert_array_equal(G[0], ref)
    for row in G:
        np.testing.assert_array_equal(np.sort(row), np.sort(ref))
    # each column is also a permutation (circulant)
    for col in G.T:
        np.testing.assert_array_equal(np.sort(col), np.sort(ref))


@given(st.integers(1, 12), st.integers(1, 3))
def test_cyclic_rows_stride(n_sites, stride):
    row = np.repeat(np.arange(n_sites, 0, -1.0), stride)
    G = cyclic_gain_rows(row, n_sites, stride)
    # co-located pairs stay adjacent in every row
    for r in G:
        np.testing.assert_array_equal(r.reshape(-1, stride),
                                      np.repeat(r[::stride], stride)
                                      .reshape(-1, stride))


def test_density_bound_examples():
    one = NetworkTopology([[1.0, 0.0]], mobiles=[[0.0, 0.0]])
    assert density_bound(one) == pytest.approx(1.0)
    two = NetworkTopology([[1.0, 0.0], [2.0, 0.0]], mobiles=[[0.0, 0.0]])
    assert density_bound(two) == pytest.approx(1.0)


def test_density_bound_invariant_on_grid():
    topo = reference_layout()
    b = density_bound(topo)
    d = np.sort(np.hypot(*(topo.antenna_positions - topo.mobiles[0]).T))
    j = np.arange(1, d.size + 1)
    assert np.isfinite(b) and b > 0
    assert np.all(j <= b * d ** 2 * (1 + 1e-12))
    assert np.isclose(np.max(j / (b * d ** 2)), 1.0)
    # three antennas at 1/sqrt(3): b = 3 / (1/3) = 9
    assert b == pytest.approx(9.0)


def _corner_patch(alpha=4.0):
    base = build_hex_grid(4, trim_corners=True, alpha=alpha)
    return base.with_mobiles(corner_mobile(base)[None, :])


def test_residual_coefficient_against_lattice_sum():
    # at 200 rings the outer ring still holds ~4e-6 of the sum
    topo = _corner_patch()
    val = residual_interference_coeff(topo, 200, tol=1e-5)
    ref = oracles.residual_sum(topo.sites, topo.mobiles[0], 200, 4.0)
    assert val == pytest.approx(ref, rel=1e-12)
    assert abs(val - 0.027) < 0.001


def test_residual_coefficient_frozen():
    # frozen from the independent lattice-summation oracle, horizon 400
    assert reference_layout().residual_noise_coeff == pytest.approx(
        0.027610779592727293, rel=1e-9)


def test_residual_coefficient_whole_patch_is_zero():
    topo = build_hex_grid(5).with_mobiles([[0.5, np.sqrt(3) / 6]])
    assert residual_interference_coeff(topo, 5, tol=1.0) == 0.0


def test_residual_coefficient_monotone():
    a4 = _corner_patch()
    m = a4.mobiles
    a3 = _corner_patch(alpha=3.0)
    v4 = residual_interference_coeff(a4, 200, tol=1e-5)
    v3 = residual_interference_coeff(a3, 200, tol=1e-2)
    assert v3 > v4
    # larger patch, less residual
    big = build_hex_grid(5).with_mobiles(m)
    assert residual_interference_coeff(big, 200, tol=1e-5) <= v4
    # larger horizon, more residual
    assert residual_interference_coeff(a4, 100, tol=1e-4) < v4


def test_residual_horizon_guard():
    with pytest.raises(RuntimeError):
        residual_interference_coeff(_corner_patch(), 200)


@given(st.floats(0.05, 0.45), st.floats(0.05, 0.45), st.integers(1, 5))
def test_gain_hex_symmetry(x, y, k):
    topo = build_hex_grid(4, trim_corners=True)
    th = k * np.pi / 3
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    p = np.array([x, y])
    g1 = np.sort(gain_map(topo.with_mobiles(p[None])).ravel())
    g2 = np.sort(gain_map(topo.with_mobiles((R @ p)[None])).ravel())
    np.testing.assert_allclose(g1, g2, rtol=1e-12)


def test_topology_round_trip(tmp_path):
    topo = reference_layout()
    path = tmp_path / 'topo.json'
    topo.save(path)
    back = NetworkTopology.load(path)
    np.testing.assert_array_equal(back.sites, topo.sites)
    np.testing.assert_array_equal(back.mobiles, topo.mobiles)
    assert back.residual_noise_coeff == topo.residual_noise_coeff
    topo.save_gain_csv(tmp_path / 'g.csv')
    g = np.loadtxt(tmp_path / 'g.csv', delimiter=',', ndmin=2)
    np.testing.assert_array_equal(g, topo.gain)
