"""Closed-form downlink SINR, spectral efficiency, power and energy efficiency."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .moments import PrecodingMoments
from .scenario import Mode, ScenarioConfig


@dataclass(frozen=True)
class PowerAllocation:
    eta_ap: np.ndarray  # (L, K)
    eta_sn: np.ndarray  # (K,)

    def __post_init__(self):
        object.__setattr__(self, "eta_ap", np.asarray(self.eta_ap, dtype=float))
        object.__setattr__(self, "eta_sn", np.asarray(self.eta_sn, dtype=float))
        if np.any(self.eta_ap < 0) or np.any(self.eta_sn < 0):
            raise ValueError("power coefficients must be nonnegative")

    def uav_tx_power(self, moments: PrecodingMoments) -> np.ndarray:
        """Per-UAV radiated power sum_i eta_{l,i} E||w_{l,i}||^2."""
        return np.sum(self.eta_ap * moments.w_norm_sq, axis=1)

    def sat_tx_power(self, moments: PrecodingMoments) -> float:
        return float(self.eta_sn @ moments.sat_signal)

    def for_mode(self, mode: Mode) -> "PowerAllocation":
        if mode == Mode.TN_ONLY:
            return PowerAllocation(self.eta_ap, np.zeros_like(self.eta_sn))
        if mode == Mode.NTN_ONLY:
            return PowerAllocation(np.zeros_like(self.eta_ap), self.eta_sn)
        return self


@dataclass(frozen=True)
class PerformanceReport:
    sinr: np.ndarray
    se: np.ndarray
    sum_se: float
    p_tot: float
    ee: float
    bandwidth: float = 0.0

    @property
    def ee_bits_per_joule(self) -> float:
        return self.ee * self.bandwidth


def noise_power(config: ScenarioConfig) -> float:
    """Thermal noise at a GU receiver in W."""
    dbm = -174 + 10 * np.log10(config.bandwidth) + config.noise_figure_gu
    return 10 ** ((dbm - 30) / 10)


def signal_terms(alloc: PowerAllocation, moments: PrecodingMoments):
    """Numerator and interference (without noise) of every GU's SINR."""
    sq = np.sqrt(alloc.eta_ap)  # (L, K): column k is the sqrt-power vector of GU k
    K = moments.K
    k = np.arange(K)
    coherent = np.real(np.einsum("kl,lk->k", moments.b[k, k].conj(), sq))
    num = alloc.eta_sn * moments.sat_signal**2 + coherent**2
    quad = np.real(np.einsum("li,kilj,ji->k", sq, moments.Csq, sq))
    return num, moments.B(alloc.eta_sn) + quad


def sinr_all(alloc: PowerAllocation, moments: PrecodingMoments, noise: float) -> np.ndarray:
    num, interf = signal_terms(alloc, moments)
    den = interf + noise
    if np.any(den <= 0):
        raise FloatingPointError("nonpositive SINR denominator; moments are corrupted")
    return num / den


def sinr_dl(k: int, alloc: PowerAllocation, moments: PrecodingMoments, noise: float) -> float:
    return float(sinr_all(alloc, moments, noise)[k])


def se_dl(sinr):
    return np.log2(1.0 + np.asarray(sinr, dtype=float))


def total_power(alloc: PowerAllocation, moments: PrecodingMoments, config: ScenarioConfig) -> float:
    tx = float(np.sum(alloc.uav_tx_power(moments)))
    return tx / config.amp_efficiency + moments.L * config.static_power


def energy_efficiency(alloc: PowerAllocation, moments: PrecodingMoments,
                      config: ScenarioConfig) -> PerformanceReport:
    alloc = alloc.for_mode(config.mode)
    sinr = sinr_all(alloc, moments, noise_power(config))
    se = se_dl(sinr)
    p_tot = total_power(alloc, moments, config)
    sum_se = float(np.sum(se))
    return PerformanceReport(sinr, se, sum_se, p_tot, sum_se / p_tot, config.bandwidth)


def budget_violation(alloc: PowerAllocation, moments: PrecodingMoments, config: ScenarioConfig) -> np.ndarray:
    """Relative per-UAV budget excess (<= 0 when feasible)."""
    return alloc.uav_tx_power(moments) / config.P_ap_dl - 1.0
