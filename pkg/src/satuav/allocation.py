"""Baseline power allocations and the feasible starting point for SCA."""

from __future__ import annotations

import logging

import numpy as np

from .moments import PrecodingMoments
from .performance import PowerAllocation, energy_efficiency
from .scenario import ScenarioConfig

log = logging.getLogger(__name__)


class InfeasibleScenario(RuntimeError):
    def __init__(self, violated, se=None):
        self.violated = list(violated)
        self.se = se
        super().__init__(f"no allocation meets the SE threshold for GUs {self.violated}")


def fractional_pa(nu: float, P: float, traces) -> np.ndarray:
    """eta_k = P tr_k^nu / sum_i tr_i^(nu+1); saturates the budget exactly."""
    traces = np.asarray(traces, dtype=float)
    if P < 0:
        raise ValueError("budget must be nonnegative")
    if np.any(traces < 0) or (nu < 0 and np.any(traces == 0)):
        raise ValueError("traces must be positive for a negative exponent")
    top = traces.max()
    if top == 0:
        raise ValueError("all traces are zero")
    # normalising by the largest trace keeps tiny channel gains in range
    t = traces / top
    return P * t**nu / np.sum(t ** (nu + 1)) / top


def uav_fpa(config: ScenarioConfig, moments: PrecodingMoments, nu: float | None = None) -> np.ndarray:
    nu = config.fpa_exponent if nu is None else nu
    return np.array([fractional_pa(nu, config.P_ap_dl, row) for row in moments.w_norm_sq])


def satellite_epa(config: ScenarioConfig, moments: PrecodingMoments) -> np.ndarray:
    return fractional_pa(-1.0, config.P_sn_dl, moments.sat_signal)


def fpa_allocation(config: ScenarioConfig, moments: PrecodingMoments, nu: float | None = None) -> PowerAllocation:
    """FPA on the UAV layer; the satellite keeps its EPA coefficients."""
    return PowerAllocation(uav_fpa(config, moments, nu), satellite_epa(config, moments))


def epa_allocation(config: ScenarioConfig, moments: PrecodingMoments) -> PowerAllocation:
    return fpa_allocation(config, moments, -1.0)


def meets_qos(alloc: PowerAllocation, moments: PrecodingMoments, config: ScenarioConfig):
    report = energy_efficiency(alloc, moments, config)
    return np.all(report.se >= config.se_min_vector()), report


def random_search_init(config: ScenarioConfig, moments: PrecodingMoments,
                       rng: np.random.Generator, eta_sn=None) -> PowerAllocation:
    """Random grid search for a budget- and QoS-feasible UAV allocation.

    Each link's radiated power ``eta_{l,k} E||w_{l,k}||^2`` is drawn from
    ``rs_grid`` equally spaced points in ``[0, P_ap_dl]``; rows exceeding the
    UAV budget are rescaled onto it.  Falls back to EPA after
    ``rs_max_attempts`` draws and raises ``InfeasibleScenario`` if EPA also
    misses the SE threshold.
    """
    L, K = moments.L, moments.K
    eta_sn = satellite_epa(config, moments) if eta_sn is None else np.asarray(eta_sn, float)
    grid = np.linspace(0.0, config.P_ap_dl, config.rs_grid)
    w = moments.w_norm_sq
    for attempt in range(config.rs_max_attempts):
        p = grid[rng.integers(0, config.rs_grid, size=(L, K))]
        row = p.sum(axis=1, keepdims=True)
        scale = np.where(row > config.P_ap_dl, config.P_ap_dl / np.where(row > 0, row, 1.0), 1.0)
        alloc = PowerAllocation(p * scale / w, eta_sn)
        ok, _ = meets_qos(alloc, moments, config)
        if ok:
            log.debug("random search accepted draw %d", attempt)
            return alloc
    alloc = PowerAllocation(uav_fpa(config, moments, -1.0), eta_sn)
    ok, report = meets_qos(alloc, moments, config)
    if ok:
        log.info("random search exhausted; falling back to EPA")
        return alloc
    violated = np.flatnonzero(report.se < config.se_min_vector())
    raise InfeasibleScenario(violated.tolist(), report.se)
