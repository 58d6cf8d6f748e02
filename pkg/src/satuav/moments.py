"""Closed-form MR precoding moments entering the downlink SINR.

With MR precoding (``w = h``) the hardening-bound SINR of GU k needs

* ``b[k, i]``: ``E{psi_{k,i}}`` with ``[psi_{k,i}]_l = h_{l,i}^H h_{l,k}``,
* ``Csq[k, i]``: second moment of ``psi_{k,i}`` (centred when ``i == k``),
* satellite moments ``E||g_k||^2``, ``E||g_k||^4`` and ``E|g_k^H g_i|^2``.

Two fourth-moment modes exist.  ``paper_elementwise`` sums per-antenna moments
as if the antennas were independent; ``exact_gaussian`` uses the exact complex
Gaussian result and is the default.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import LinkStatistics, NetworkStatistics

MODES = ("exact_gaussian", "paper_elementwise")
PSD_RTOL = 1e-10


def _corr(mu, R):
    return np.einsum("...m,...n->...mn", mu, mu.conj()) + R


def _trace(A):
    return np.real(np.einsum("...mm->...", A))


def _fourth(mu, R, mode):
    """E||h||^4 for h ~ CN(mu, R), vectorised over leading axes."""
    if mode == "exact_gaussian":
        E = _corr(mu, R)
        trE = _trace(E)
        trE2 = np.real(np.einsum("...mn,...nm->...", E, E))
        return trE**2 + trE2 - np.sum(np.abs(mu) ** 2, axis=-1) ** 2
    if mode == "paper_elementwise":
        m2 = np.abs(mu) ** 2
        var = np.real(np.einsum("...mm->...m", R))
        second = m2 + var
        fourth = m2**2 + 4 * m2 * var + 2 * var**2
        return np.sum(fourth, axis=-1) + np.sum(second, axis=-1) ** 2 - np.sum(second**2, axis=-1)
    raise ValueError(f"unknown moment mode {mode!r}")


def mean_psi_same(s: LinkStatistics) -> float:
    return float(_trace(s.E))


def mean_psi_cross(s_li: LinkStatistics, s_lk: LinkStatistics) -> complex:
    return complex(np.vdot(s_li.mu, s_lk.mu))


def fourth_moment_norm(s: LinkStatistics, mode: str = "exact_gaussian") -> float:
    return float(_fourth(s.mu, s.R, mode))


def second_moment_same_offdiag(s_lk: LinkStatistics, s_mk: LinkStatistics) -> float:
    return mean_psi_same(s_lk) * mean_psi_same(s_mk)


def second_moment_cross_diag(s_li: LinkStatistics, s_lk: LinkStatistics) -> float:
    return float(np.real(np.trace(s_li.E @ s_lk.E)))


def second_moment_cross_offdiag(s_li, s_lk, s_mi, s_mk) -> complex:
    """E{(h_{l,i}^H h_{l,k}) (h_{l',i}^H h_{l',k})^*} for two distinct UAVs."""
    return mean_psi_cross(s_li, s_lk) * np.conj(mean_psi_cross(s_mi, s_mk))


def psd_factor(C: np.ndarray, rtol: float = PSD_RTOL) -> np.ndarray:
    """Return F with F F^H = C for a Hermitian PSD ``C``.

    Eigenvalues down to ``-rtol * trace`` are clipped to zero; anything more
    negative raises ``LinAlgError``.
    """
    C = np.asarray(C)
    tr = float(np.real(np.trace(C)))
    d = np.real(np.diagonal(C))
    if not np.any(C - np.diag(np.diagonal(C))):
        if d.size and d.min() < -rtol * max(tr, 0.0):
            raise np.linalg.LinAlgError(f"matrix is indefinite (min eigenvalue {d.min():.3e})")
        return np.diag(np.sqrt(np.clip(d, 0.0, None))).astype(np.result_type(C.dtype, float))
    lam, V = np.linalg.eigh((C + C.conj().T) / 2)
    if lam.size and lam.min() < -rtol * max(tr, 0.0):
        raise np.linalg.LinAlgError(f"matrix is indefinite (min eigenvalue {lam.min():.3e})")
    return V * np.sqrt(np.clip(lam, 0.0, None))


@dataclass(frozen=True)
class PrecodingMoments:
    b: np.ndarray  # (K, K, L) complex, b[k, i, l]
    Csq: np.ndarray  # (K, K, L, L) complex
    Cfac: np.ndarray  # (K, K, L, L) complex, Cfac Cfac^H = Csq
    w_norm_sq: np.ndarray  # (L, K)
    sat_signal: np.ndarray  # (K,)  E{g_k^H g_k}
    sat_fourth: np.ndarray  # (K,)  E||g_k||^4
    sat_cross: np.ndarray  # (K, K) E|g_k^H g_i|^2, diagonal holds sat_fourth
    mode: str = "exact_gaussian"

    @property
    def L(self) -> int:
        return self.w_norm_sq.shape[0]

    @property
    def K(self) -> int:
        return self.w_norm_sq.shape[1]

    def B(self, eta_sn) -> np.ndarray:
        """Satellite interference-plus-beamforming-uncertainty term per GU."""
        eta_sn = np.asarray(eta_sn, dtype=float)
        return self.sat_cross @ eta_sn - eta_sn * self.sat_signal**2

    def signal_gain(self) -> np.ndarray:
        """Real b_{k,k} vectors as a (K, L) array."""
        K = self.K
        return np.real(self.b[np.arange(K), np.arange(K)])


def assemble_moments(stats: NetworkStatistics, mode: str = "exact_gaussian") -> PrecodingMoments:
    if mode not in MODES:
        raise ValueError(f"unknown moment mode {mode!r}")
    L, K = stats.L, stats.K
    mu, R = stats.uav_mu, stats.uav_R
    E = _corr(mu, R)  # (L, K, M, M)
    trE = _trace(E)  # (L, K)

    # b[k, i, l] = mu_{l,i}^H mu_{l,k}, replaced by tr(E_{l,k}) on the diagonal
    b = np.einsum("lim,lkm->kil", mu.conj(), mu)
    idx = np.arange(K)
    b[idx, idx] = trE.T

    # tr(E_{l,i} E_{l,k}) -> (K, K, L)
    trEE = np.real(np.einsum("limn,lknm->kil", E, E))
    Csq = np.einsum("kil,kij->kilj", b, b.conj())
    ll = np.arange(L)
    Csq[:, :, ll, ll] = trEE
    var = _fourth(mu, R, mode) - trE**2  # (L, K)
    # cancellation leaves roundoff of order eps * trE^2 for near-deterministic links
    var = np.where((var < 0) & (var >= -PSD_RTOL * trE**2), 0.0, var)
    for k in range(K):
        Csq[k, k] = np.diag(var[:, k])

    Cfac = np.empty_like(Csq)
    for k in range(K):
        for i in range(K):
            Cfac[k, i] = psd_factor(Csq[k, i])

    Eg = _corr(stats.sat_mu, stats.sat_R)
    sat_signal = _trace(Eg)
    sat_fourth = _fourth(stats.sat_mu, stats.sat_R, mode)
    sat_cross = np.real(np.einsum("imn,knm->ki", Eg, Eg))
    sat_cross[idx, idx] = sat_fourth

    return PrecodingMoments(b, Csq, Cfac, trE, sat_signal, sat_fourth, sat_cross, mode)
