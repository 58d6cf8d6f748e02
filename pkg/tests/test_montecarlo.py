import math

import numpy as np
import pytest

from satuav.allocation import epa_allocation
from satuav.channel import NetworkStatistics
from satuav.moments import assemble_moments
from satuav.montecarlo import estimate_moments, estimate_se, moment_zscores
from satuav.performance import PowerAllocation, energy_efficiency, noise_power
from satuav.scenario import Mode, preset

from conftest import deterministic_stats, random_psd, random_stats


def test_deterministic_channels_are_exact():
    rng = np.random.default_rng(0)
    uav_mu = rng.standard_normal((2, 2, 3)) + 1j * rng.standard_normal((2, 2, 3))
    st_ = deterministic_stats(uav_mu, rng.standard_normal((2, 2)))
    est = estimate_moments(st_, 1000, 1)
    ref = assemble_moments(st_)
    np.testing.assert_allclose(est.moments.b, ref.b, rtol=1e-13, atol=1e-13)
    np.testing.assert_allclose(est.moments.Csq, ref.Csq, rtol=1e-12, atol=1e-12)
    for v in est.stderr.values():
        assert not np.any(v)
    assert all(np.all(z == 0) for z in moment_zscores(est, ref).values())


def test_zero_mean_identity_fourth_moment():
    st_ = NetworkStatistics(np.zeros((1, 1, 1), complex), np.ones((1, 1, 1, 1), complex),
                            np.zeros((1, 2), complex), np.eye(2, dtype=complex)[None])
    est = estimate_moments(st_, 100_000, 3)
    assert abs(est.moments.sat_fourth[0] - 6.0) < 3 * est.stderr["sat_fourth"][0]


def test_small_rician_scenario_within_three_se():
    cfg = preset("desk", L=3, K=2)
    from satuav.cli import make_drop
    drop = make_drop(cfg, 1)
    est = estimate_moments(drop.stats, 100_000, 7, eta_sn=np.array([2.0, 3.0]))
    for name, z in moment_zscores(est, drop.moments).items():
        assert np.all(z <= 3), name


def test_zero_powers_give_zero_se(desk, desk_drop):
    a = PowerAllocation(np.zeros((desk.L, desk.K)), np.zeros(desk.K))
    e = estimate_se(desk, desk_drop.stats, a, 1000, 0)
    assert not np.any(e.se) and not np.any(e.stderr)


def test_interference_free_link():
    rng = np.random.default_rng(4)
    R = random_psd(rng, 3, 1e-9)
    mu = 3e-5 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
    st_ = NetworkStatistics(mu[None, None], R[None, None], np.zeros((1, 1), complex), np.zeros((1, 1, 1), complex))
    cfg = preset("desk", L=1, K=1, M=3, N=1, mode=Mode.TN_ONLY)
    eta = 1e3
    E = np.outer(mu, mu.conj()) + R
    tr = np.trace(E).real
    var = np.trace(E @ E).real - np.vdot(mu, mu).real ** 2
    sinr = eta * tr**2 / (eta * var + noise_power(cfg))
    e = estimate_se(cfg, st_, PowerAllocation([[eta]], [0.0]), 20_000, 5)
    assert abs(e.se[0] - math.log2(1 + sinr)) < 3 * e.stderr[0]


def test_desk_se_within_three_se(desk, desk_drop):
    a = epa_allocation(desk, desk_drop.moments)
    cf = energy_efficiency(a, desk_drop.moments, desk).se
    e = estimate_se(desk, desk_drop.stats, a, 20_000, 11)
    assert np.all(np.abs(e.se - cf) < 3 * e.stderr)


def test_standard_error_ladder(desk, desk_drop):
    a = epa_allocation(desk, desk_drop.moments)
    se = [estimate_se(desk, desk_drop.stats, a, n, 21).stderr for n in (1_000, 10_000, 100_000)]
    ideal = math.sqrt(10)
    for big, small in zip(se, se[1:]):
        ratio = big / small
        assert np.all((ratio > ideal / 1.5) & (ratio < ideal * 1.5))


def test_reproducible_and_worker_invariant(desk, desk_drop):
    a = epa_allocation(desk, desk_drop.moments)
    e1 = estimate_se(desk, desk_drop.stats, a, 3_000, 8, workers=1)
    e2 = estimate_se(desk, desk_drop.stats, a, 3_000, 8, workers=3)
    assert e1.se.tobytes() == e2.se.tobytes() and e1.stderr.tobytes() == e2.stderr.tobytes()
    m1 = estimate_moments(desk_drop.stats, 2_500, 8, workers=1)
    m2 = estimate_moments(desk_drop.stats, 2_500, 8, workers=2)
    assert m1.moments.Csq.tobytes() == m2.moments.Csq.tobytes()
    assert m1.stderr["B"].tobytes() == m2.stderr["B"].tobytes()


def test_disjoint_seeds_are_independent(desk, desk_drop):
    a = epa_allocation(desk, desk_drop.moments)
    est = [estimate_se(desk, desk_drop.stats, a, 2_000, s).se for s in range(40)]
    est = np.array(est)
    # successive seeds should not be correlated
    r = np.corrcoef(est[:-1, 0], est[1:, 0])[0, 1]
    assert abs(r) < 3 / math.sqrt(est.shape[0])
    assert len({e.tobytes() for e in est}) == 40


def test_too_few_trials_rejected(desk, desk_drop):
    with pytest.raises(ValueError):
        estimate_moments(desk_drop.stats, 10, 0)
    with pytest.raises(ValueError):
        estimate_se(desk, desk_drop.stats, epa_allocation(desk, desk_drop.moments), 999, 0)


def test_elementwise_mode_is_detected_on_correlated_links():
    st_ = random_stats(np.random.default_rng(12), L=2, K=2, M=3, N=3)
    est = estimate_moments(st_, 100_000, 2)
    z = moment_zscores(est, assemble_moments(st_, "paper_elementwise"))
    assert np.max(z["Csq_re"]) > 10
