"""Rician channel statistics for the UAV-GU and satellite-GU links.

Each link is described by its LoS mean ``mu`` and NLoS covariance ``R``; the
correlation matrix is ``E = mu mu^H + R``.  NLoS covariances follow the
Gaussian local scattering model around the nominal angle-of-arrival.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import toeplitz

from .scenario import Geometry, ScenarioConfig

D0 = 1.0  # reference distance, m


def los_probability(theta, a: float, b: float):
    """LoS probability for elevation ``theta`` in degrees."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0) or np.any(theta > 90):
        raise ValueError("elevation must lie in [0, 90] degrees")
    if a < 0 or b < 0:
        raise ValueError("a and b must be nonnegative")
    p = 1.0 / (1.0 + a * np.exp(-b * theta + a * b))
    return float(p) if p.ndim == 0 else p


def _check_distance(d):
    d = np.asarray(d, dtype=float)
    if np.any(d < D0):
        raise ValueError(f"distance below the reference distance {D0} m")
    return d


def uav_pathloss_db(d, G_l: float, G_k: float, f_c: float, shadow_z=0.0):
    d = _check_distance(d)
    out = G_l + G_k - 8.5 - 38.63 * np.log10(d / D0) - 20 * np.log10(f_c) + shadow_z
    return float(out) if np.ndim(out) == 0 else out


def sat_pathloss_db(d, G: float, G_k: float, f_c: float, shadow_z=0.0):
    d = _check_distance(d)
    out = G + G_k - 32.45 - 20 * np.log10(d / D0) - 20 * np.log10(f_c) + shadow_z
    return float(out) if np.ndim(out) == 0 else out


def rician_factor_uav(d):
    d = _check_distance(d)
    out = 10 ** ((15 + 1.0 * np.log10(d)) / 10)
    return float(out) if np.ndim(out) == 0 else out


def rician_factor_sat(N: int, d):
    if N < 1:
        raise ValueError("N must be >= 1")
    d = _check_distance(d)
    out = 10 ** ((9.5 + 10 * math.log10(N) + 0.5 * np.log10(d)) / 10)
    return float(out) if np.ndim(out) == 0 else out


def array_response(n: int, phi: float) -> np.ndarray:
    """Half-wavelength ULA response."""
    if n < 1:
        raise ValueError("array length must be >= 1")
    return np.exp(1j * np.pi * np.arange(n) * np.sin(phi))


_GH_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_hermite(n: int):
    if n not in _GH_CACHE:
        _GH_CACHE[n] = np.polynomial.hermite.hermgauss(n)
    return _GH_CACHE[n]


def scattering_covariance(n: int, phi: float, sigma_delta: float, scale: float,
                          nodes: int = 64) -> np.ndarray:
    """Toeplitz NLoS covariance of the Gaussian local scattering model.

    The angular average over ``delta ~ N(0, sigma_delta^2)`` is evaluated with
    ``nodes``-point Gauss-Hermite quadrature.
    """
    if sigma_delta < 0 or scale < 0:
        raise ValueError("sigma_delta and scale must be nonnegative")
    lags = np.arange(n)
    if sigma_delta == 0:
        col = np.exp(1j * np.pi * lags * np.sin(phi))
    else:
        x, w = _gauss_hermite(nodes)
        delta = math.sqrt(2.0) * sigma_delta * x
        phase = np.exp(1j * np.pi * np.outer(lags, np.sin(phi + delta)))
        col = phase @ w / math.sqrt(math.pi)
        col[0] = 1.0
    return scale * toeplitz(col, col.conj())


@dataclass(frozen=True)
class LinkStatistics:
    mu: np.ndarray
    R: np.ndarray
    beta_los: float = 0.0
    beta_nlos: float = 0.0
    kappa: float = math.inf
    pr_los: float = 1.0
    aoa: float = 0.0
    E: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=complex)
        R = np.asarray(self.R, dtype=complex)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "R", R)
        if self.E is None:
            object.__setattr__(self, "E", np.outer(mu, mu.conj()) + R)

    @property
    def pr_nlos(self) -> float:
        return 1.0 - self.pr_los

    @property
    def size(self) -> int:
        return self.mu.shape[0]

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.E)))


def rician_link(n: int, beta: float, kappa: float, pr_los: float, aoa: float,
                asd: float, nodes: int = 64) -> LinkStatistics:
    """Assemble LoS mean and NLoS covariance from scalar link parameters."""
    if math.isinf(kappa):
        mu = math.sqrt(pr_los * beta) * array_response(n, aoa)
        R = np.zeros((n, n), dtype=complex)
    else:
        mu = math.sqrt(pr_los * beta * kappa / (kappa + 1)) * array_response(n, aoa)
        R = scattering_covariance(n, aoa, asd, (1 - pr_los) * beta / (kappa + 1), nodes)
    return LinkStatistics(mu, R, beta, beta, kappa, pr_los, aoa)


def draw_shadowing(config: ScenarioConfig, rng: np.random.Generator):
    """Real dB-domain shadowing for all UAV links, then all satellite links."""
    z_uav = rng.normal(0.0, config.shadow_std_uav, size=(config.L, config.K))
    z_sat = rng.normal(0.0, config.shadow_std_sat, size=config.K)
    return z_uav, z_sat


def link_statistics(geometry: Geometry, config: ScenarioConfig, link: tuple,
                    rng: np.random.Generator | None = None,
                    shadow_db: float | None = None) -> LinkStatistics:
    """Statistics of ``("uav", l, k)`` or ``("sat", k)``.

    Shadowing is ``shadow_db`` if given, else drawn from ``rng``, else zero.
    """
    kind = link[0]
    if kind == "uav":
        _, l, k = link
        d, theta, aoa = geometry.d_lk[l, k], geometry.theta_lk[l, k], geometry.aoa_lk[l, k]
        std, n, asd = config.shadow_std_uav, config.M, config.asd
    elif kind == "sat":
        _, k = link
        d, theta, aoa = geometry.d_k[k], geometry.theta_k[k], geometry.aoa_k[k]
        std, n, asd = config.shadow_std_sat, config.N, config.asd_sat
    else:
        raise ValueError(f"unknown link kind {kind!r}")
    if shadow_db is None:
        shadow_db = rng.normal(0.0, std) if rng is not None else 0.0

    if kind == "uav":
        beta_db = uav_pathloss_db(d, config.gain_uav_dbi, config.gain_gu_dbi, config.f_c, shadow_db)
        kappa = rician_factor_uav(d)
    else:
        beta_db = sat_pathloss_db(d, config.gain_sat_dbi, config.gain_gu_dbi, config.f_c, shadow_db)
        kappa = rician_factor_sat(config.N, d)
    pr = los_probability(theta, config.los_a, config.los_b)
    return rician_link(n, 10 ** (beta_db / 10), kappa, pr, aoa, asd)


@dataclass(frozen=True)
class NetworkStatistics:
    """Stacked statistics of every link of one scenario drop."""

    uav_mu: np.ndarray  # (L, K, M)
    uav_R: np.ndarray  # (L, K, M, M)
    sat_mu: np.ndarray  # (K, N)
    sat_R: np.ndarray  # (K, N, N)

    @property
    def L(self) -> int:
        return self.uav_mu.shape[0]

    @property
    def K(self) -> int:
        return self.uav_mu.shape[1]

    @property
    def uav_E(self) -> np.ndarray:
        return np.einsum("lkm,lkn->lkmn", self.uav_mu, self.uav_mu.conj()) + self.uav_R

    @property
    def sat_E(self) -> np.ndarray:
        return np.einsum("km,kn->kmn", self.sat_mu, self.sat_mu.conj()) + self.sat_R

    def uav(self, l: int, k: int) -> LinkStatistics:
        return LinkStatistics(self.uav_mu[l, k], self.uav_R[l, k])

    def sat(self, k: int) -> LinkStatistics:
        return LinkStatistics(self.sat_mu[k], self.sat_R[k])

    @classmethod
    def from_links(cls, uav_links, sat_links) -> "NetworkStatistics":
        """``uav_links[l][k]`` and ``sat_links[k]`` are LinkStatistics."""
        uav_mu = np.array([[s.mu for s in row] for row in uav_links])
        uav_R = np.array([[s.R for s in row] for row in uav_links])
        sat_mu = np.array([s.mu for s in sat_links])
        sat_R = np.array([s.R for s in sat_links])
        return cls(uav_mu, uav_R, sat_mu, sat_R)


def network_statistics(geometry: Geometry, config: ScenarioConfig,
                       rng: np.random.Generator) -> NetworkStatistics:
    z_uav, z_sat = draw_shadowing(config, rng)
    uav = [[link_statistics(geometry, config, ("uav", l, k), shadow_db=z_uav[l, k])
            for k in range(config.K)] for l in range(config.L)]
    sat = [link_statistics(geometry, config, ("sat", k), shadow_db=z_sat[k])
           for k in range(config.K)]
    return NetworkStatistics.from_links(uav, sat)


def covariance_factor(R: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """F with F F^H = R; tiny negative eigenvalues are clipped."""
    R = np.asarray(R, dtype=complex)
    lam, V = np.linalg.eigh((R + R.conj().T) / 2)
    tr = max(float(np.real(np.trace(R))), 0.0)
    if lam.size and lam.min() < -rtol * max(tr, np.finfo(float).tiny):
        raise np.linalg.LinAlgError("covariance is not positive semidefinite")
    return V * np.sqrt(np.clip(lam, 0.0, None))


def sample_channel(stats: LinkStatistics, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draw ``h = mu + F z`` with ``z`` circularly-symmetric unit Gaussian."""
    F = covariance_factor(stats.R)
    n = stats.size
    shape = (n,) if size is None else (size, n)
    z = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)
    return stats.mu + z @ F.T
