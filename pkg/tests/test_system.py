import numpy as np
import pytest

from mabeam import channel as ch
from mabeam import system as sm


def _grid(pps=5, side=0.12, d_min=0.03):
    return ch.build_grid(ch.ChannelConfig(side=side, points_per_side=pps, d_min=d_min))


def test_select_channel_identity_and_permutation():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(4, 2)) + 1j * rng.normal(size=(4, 2))
    np.testing.assert_array_equal(sm.select_channel([0, 1, 2, 3], h), h)
    np.testing.assert_array_equal(sm.select_channel([2], h), h[[2]])
    perm = [3, 0, 2]
    np.testing.assert_array_equal(sm.select_channel(perm, h), h[perm])


def test_select_channel_range_check():
    h = np.zeros((3, 1), complex)
    with pytest.raises(IndexError):
        sm.select_channel([0, 3], h)


def test_rates_single_user_mrt():
    rng = np.random.default_rng(1)
    h = rng.normal(size=(4, 1)) + 1j * rng.normal(size=(4, 1))
    p, noise = 0.5, 1e-3
    w = np.sqrt(p) * h / np.linalg.norm(h)
    rep = sm.compute_rates(h, w, noise)
    expected = p * np.linalg.norm(h) ** 2 / noise
    assert rep.sinr[0] == pytest.approx(expected, rel=1e-12)
    assert rep.sum_rate == pytest.approx(np.log2(1 + expected), rel=1e-12)


def test_rates_zero_beamformer():
    h = np.ones((3, 2), complex)
    rep = sm.compute_rates(h, np.zeros((3, 2), complex), 1e-3)
    assert rep.sum_rate == 0.0
    assert (rep.rates == 0.0).all()


def test_rates_hand_built_two_user():
    # h1 = e1, h2 = e2, w_k = sqrt(P/2) e_k: no interference, SINR = P/(2 sigma^2)
    h = np.eye(2, dtype=complex)
    p, noise = 0.8, 1e-2
    w = np.sqrt(p / 2) * np.eye(2, dtype=complex)
    rep = sm.compute_rates(h, w, noise)
    np.testing.assert_allclose(rep.sinr, p / 2 / noise, rtol=1e-12)
    assert rep.sum_rate == pytest.approx(2 * np.log2(1 + p / 2 / noise), rel=1e-12)


def test_rates_match_direct_formula_oracle():
    rng = np.random.default_rng(2)
    for _ in range(20):
        m, k = rng.integers(1, 6), rng.integers(1, 5)
        h = rng.normal(size=(m, k)) + 1j * rng.normal(size=(m, k))
        w = rng.normal(size=(m, k)) + 1j * rng.normal(size=(m, k))
        noise = rng.uniform(0.01, 1.0, size=k)
        rep = sm.compute_rates(h, w, noise)
        for kk in range(k):
            sig = abs(np.vdot(h[:, kk], w[:, kk])) ** 2
            interf = sum(abs(np.vdot(h[:, kk], w[:, ll])) ** 2
                         for ll in range(k) if ll != kk)
            sinr = sig / (interf + noise[kk])
            assert rep.sinr[kk] == pytest.approx(sinr, rel=1e-12)
        batch = sm.sum_rates_batch(h[None], w[None], noise[None])
        assert batch[0] == pytest.approx(rep.sum_rate, rel=1e-12)


def test_rate_report_invariants():
    rng = np.random.default_rng(3)
    h = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
    w = rng.normal(size=(4, 3)) + 1j * rng.normal(size=(4, 3))
    rep = sm.compute_rates(h, w, 0.1)
    np.testing.assert_allclose(rep.rates, np.log2(1 + rep.sinr), rtol=1e-14)
    assert rep.sum_rate == pytest.approx(rep.rates.sum())
    assert (rep.rates >= 0).all()


def test_feasible_mask_empty_prefix():
    grid = _grid()
    assert sm.feasible_mask([], grid).all()


def test_feasible_mask_spacing_equals_dmin():
    # 30 mm spacing, d_min = 30 mm: only the selected point is excluded
    grid = _grid(pps=5, side=0.12, d_min=0.03)
    mask = sm.feasible_mask([12], grid)
    assert not mask[12]
    assert mask.sum() == grid.n - 1


def test_feasible_mask_dense_grid():
    # 8 points/side: spacing 120/7 mm < 30 mm, center selection removes a disk
    grid = _grid(pps=8, side=0.12, d_min=0.03)
    center = 3 * 8 + 3
    mask = sm.feasible_mask([center], grid)
    dist = np.linalg.norm(grid.coords - grid.coords[center], axis=1)
    np.testing.assert_array_equal(mask, dist >= 0.03 - 1e-12)
    assert not mask[center]
    assert (~mask).sum() > 1


def test_check_feasibility_boundary_and_duplicates():
    grid = _grid(pps=5, side=0.12, d_min=0.03)
    assert sm.check_feasibility([0, 1], grid, 2)  # exactly d_min apart
    assert not sm.check_feasibility([0, 0], grid, 2)
    assert not sm.check_feasibility([0, 1, 2], grid, 2)
    assert not sm.check_feasibility([0, 99], grid, 2)


def test_mask_extension_consistency():
    # choosing any allowed point keeps the prefix pairwise-feasible
    rng = np.random.default_rng(4)
    grid = _grid(pps=6, side=0.12, d_min=0.035)
    for _ in range(50):
        prefix = []
        for _ in range(3):
            mask = sm.feasible_mask(prefix, grid)
            options = np.flatnonzero(mask)
            if options.size == 0:
                break
            prefix.append(int(rng.choice(options)))
        assert sm.check_feasibility(prefix, grid, len(prefix))
