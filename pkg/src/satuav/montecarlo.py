"""Sampling estimates of the precoding moments and of the downlink SE.

Channels are drawn directly from their Gaussian law and every expectation is
formed as a sample mean, without touching the closed-form moment code.  Trials
run in fixed-size chunks; chunk ``j`` of a run with seed ``s`` draws from
``SeedSequence([s, j])`` and the chunk sums are reduced in chunk order, so the
result does not depend on how chunks are spread over workers.

Moment standard errors come from the delta method (a second pass regenerates
the same chunks to accumulate squared influence values around the final
means).  SE standard errors use the delete-one jackknife over trials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .channel import NetworkStatistics
from .moments import PrecodingMoments
from .parallel import ordered_map
from .performance import PowerAllocation
from .scenario import ScenarioConfig

MIN_TRIALS = 1000
CHUNK = 1000


def _factor(R):
    """F with F F^H = R for a stack of Hermitian PSD matrices."""
    lam, V = np.linalg.eigh(R)
    return V * np.sqrt(np.clip(lam, 0.0, None))[..., None, :]


def _chunk_sizes(trials: int) -> list[int]:
    n = max(1, math.ceil(trials / CHUNK))
    base, extra = divmod(trials, n)
    return [base + (j < extra) for j in range(n)]


@dataclass(frozen=True)
class _Sampler:
    uav_mu: np.ndarray
    uav_F: np.ndarray
    sat_mu: np.ndarray
    sat_F: np.ndarray
    seed: int

    @classmethod
    def from_stats(cls, stats: NetworkStatistics, seed: int):
        return cls(stats.uav_mu, _factor(stats.uav_R), stats.sat_mu, _factor(stats.sat_R), seed)

    def draw(self, j: int, size: int):
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, j]))

        def cn(shape):
            return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)

        z = cn((size,) + self.uav_mu.shape)
        h = self.uav_mu + np.einsum("lkmn,tlkn->tlkm", self.uav_F, z)
        zg = cn((size,) + self.sat_mu.shape)
        g = self.sat_mu + np.einsum("kmn,tkn->tkm", self.sat_F, zg)
        return h, g

    def mean_channel(self):
        return self.uav_mu[None], self.sat_mu[None]


def _raw(h, g):
    """Per-trial psi[t,k,i,l] = h_{l,i}^H h_{l,k}, ||g_k||^2, |g_k^H g_i|^2."""
    psi = np.einsum("tlim,tlkm->tkil", h.conj(), h)
    gg = np.einsum("tim,tkm->tki", g.conj(), g)
    n2 = np.real(np.einsum("tkk->tk", gg))
    return psi, n2, np.abs(gg) ** 2


def _outer(psi):
    return psi[..., :, None] * psi[..., None, :].conj()


# --- moment estimation -------------------------------------------------------

def _moment_pass1(sampler: _Sampler, shift: dict, job):
    j, size = job
    psi, n2, cross = _raw(*sampler.draw(j, size))
    return {
        "psi": np.sum(psi - shift["psi"], axis=0),
        "out": np.sum(_outer(psi) - shift["out"], axis=0),
        "n2": np.sum(n2 - shift["n2"], axis=0),
        "cross": np.sum(cross - shift["cross"], axis=0),
    }


def _moment_pass2(sampler: _Sampler, means: dict, eta_sn, job):
    j, size = job
    psi, n2, cross = _raw(*sampler.draw(j, size))
    K = psi.shape[1]
    k = np.arange(K)
    d_psi = psi - means["psi"]
    d_out = _outer(psi) - means["out"]
    # centred second moment of psi_{k,k}: influence (x - m)(x - m)^* - C
    u = d_psi[:, k, k]
    d_out[:, k, k] = _outer(u) - means["cov"]
    d_n2 = n2 - means["n2"]
    d_cross = cross - means["cross"]
    d_B = d_cross @ eta_sn - 2 * eta_sn * means["n2"] * d_n2

    def sq(x):
        return np.sum(np.real(x) ** 2, axis=0), np.sum(np.imag(x) ** 2, axis=0)

    psi_re, psi_im = sq(d_psi)
    out_re, out_im = sq(d_out)
    return {"psi_re": psi_re, "psi_im": psi_im, "out_re": out_re, "out_im": out_im,
            "n2": np.sum(d_n2**2, axis=0), "cross": np.sum(d_cross**2, axis=0),
            "B": np.sum(d_B**2, axis=0)}


def _reduce(parts: list[dict]) -> dict:
    return {key: np.sum(np.stack([p[key] for p in parts]), axis=0) for key in parts[0]}


@dataclass(frozen=True)
class MomentEstimate:
    moments: PrecodingMoments
    B: np.ndarray  # satellite term for ``eta_sn``
    eta_sn: np.ndarray
    stderr: dict = field(repr=False)  # complex entries split into *_re / *_im
    trials: int = 0
    seed: int = 0


def estimate_moments(stats: NetworkStatistics, trials: int, seed: int, eta_sn=None,
                     workers: int | None = None) -> MomentEstimate:
    """Sample means of every quantity in :class:`PrecodingMoments`, with SEs."""
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {trials}")
    K, L = stats.K, stats.L
    eta_sn = np.ones(K) if eta_sn is None else np.asarray(eta_sn, float)
    sampler = _Sampler.from_stats(stats, int(seed))
    # shifting by the mean-channel values keeps the sums small and makes
    # deterministic channels come out exact
    psi0, n20, cross0 = _raw(*sampler.mean_channel())
    shift = {"psi": psi0[0], "out": _outer(psi0)[0], "n2": n20[0], "cross": cross0[0]}
    jobs = list(enumerate(_chunk_sizes(trials)))

    S = _reduce(ordered_map(partial(_moment_pass1, sampler, shift), jobs, workers))
    m = {key: shift[key] + S[key] / trials for key in S}
    k = np.arange(K)
    m_kk = m["psi"][k, k]  # (K, L)
    cov = m["out"][k, k] - _outer(m_kk)
    m["cov"] = cov

    Q = _reduce(ordered_map(partial(_moment_pass2, sampler, m, eta_sn), jobs, workers))
    norm = trials * (trials - 1)
    se = {key: np.sqrt(v / norm) for key, v in Q.items()}

    Csq = m["out"].copy()
    Csq[k, k] = cov
    b = m["psi"].copy()
    b[k, k] = np.real(m_kk)
    w_norm_sq = np.real(m_kk).T
    Cfac = np.empty_like(Csq)
    for a in range(K):
        for c in range(K):
            C = (Csq[a, c] + Csq[a, c].conj().T) / 2
            Cfac[a, c] = _factor(C)
    sat_signal = m["n2"]
    sat_cross = m["cross"]
    sat_fourth = np.diag(sat_cross).copy()
    B = sat_cross @ eta_sn - eta_sn * sat_signal**2

    stderr = {"b_re": se["psi_re"], "b_im": se["psi_im"], "Csq_re": se["out_re"],
              "Csq_im": se["out_im"], "w_norm_sq": se["psi_re"][k, k].T,
              "sat_signal": se["n2"], "sat_cross": se["cross"],
              "sat_fourth": np.diag(se["cross"]).copy(), "B": se["B"]}
    mom = PrecodingMoments(b, Csq, Cfac, w_norm_sq, sat_signal, sat_fourth, sat_cross, "sampled")
    return MomentEstimate(mom, B, eta_sn, stderr, trials, int(seed))


def moment_zscores(est: MomentEstimate, ref: PrecodingMoments) -> dict:
    """|estimate - reference| / SE for every entry; zero-SE entries must match."""

    def z(a, b, s):
        diff = np.abs(np.asarray(a) - np.asarray(b))
        tiny = 1e-9 * (1 + np.abs(np.asarray(b)))
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(s > 0, diff / np.where(s > 0, s, 1.0), np.where(diff <= tiny, 0.0, np.inf))
        return out

    e = est.moments
    B_ref = ref.B(est.eta_sn)
    return {
        "b_re": z(e.b.real, ref.b.real, est.stderr["b_re"]),
        "b_im": z(e.b.imag, ref.b.imag, est.stderr["b_im"]),
        "Csq_re": z(e.Csq.real, ref.Csq.real, est.stderr["Csq_re"]),
        "Csq_im": z(e.Csq.imag, ref.Csq.imag, est.stderr["Csq_im"]),
        "sat_signal": z(e.sat_signal, ref.sat_signal, est.stderr["sat_signal"]),
        "sat_cross": z(e.sat_cross, ref.sat_cross, est.stderr["sat_cross"]),
        "B": z(est.B, B_ref, est.stderr["B"]),
    }


# --- spectral efficiency -----------------------------------------------------

def _thermal_noise(config: ScenarioConfig) -> float:
    return 10 ** ((-174 + 10 * math.log10(config.bandwidth) + config.noise_figure_gu - 30) / 10)


def _se_scalars(sampler: _Sampler, sq_eta, eta_sn, h, g):
    """Per-trial (X_kk, sum_i |X_ki|^2, ||g_k||^2, sum_i eta_i |g_k^H g_i|^2)."""
    psi, n2, cross = _raw(h, g)
    X = np.einsum("li,tkil->tki", sq_eta, psi)
    K = X.shape[1]
    Xkk = np.real(X[:, np.arange(K), np.arange(K)])
    return np.stack([Xkk, np.sum(np.abs(X) ** 2, axis=2), n2, cross @ eta_sn], axis=-1)


def _se_chunk(sampler: _Sampler, sq_eta, eta_sn, shift, job):
    j, size = job
    return _se_scalars(sampler, sq_eta, eta_sn, *sampler.draw(j, size)) - shift


def _sinr_from_means(m, eta_sn, noise):
    """SINR from means of the four per-trial scalars; ``m`` is (..., K, 4)."""
    mx, my, mg, mz = (m[..., q] for q in range(4))
    num = eta_sn * mg**2 + mx**2
    den = my - mx**2 + mz - eta_sn * mg**2 + noise
    return num / den


@dataclass(frozen=True)
class SeEstimate:
    se: np.ndarray
    stderr: np.ndarray
    sinr: np.ndarray
    trials: int
    seed: int


def estimate_se(config: ScenarioConfig, stats: NetworkStatistics, alloc: PowerAllocation,
                trials: int, seed: int, workers: int | None = None) -> SeEstimate:
    """Hardening-bound SE with all expectations replaced by sample means."""
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials, got {trials}")
    alloc = alloc.for_mode(config.mode)
    sq_eta = np.sqrt(alloc.eta_ap)
    eta_sn = alloc.eta_sn
    sampler = _Sampler.from_stats(stats, int(seed))
    shift = _se_scalars(sampler, sq_eta, eta_sn, *sampler.mean_channel())[0]
    jobs = list(enumerate(_chunk_sizes(trials)))
    D = np.concatenate(ordered_map(partial(_se_chunk, sampler, sq_eta, eta_sn, shift), jobs, workers))
    noise = _thermal_noise(config)

    T = D.shape[0]
    md = np.sum(D, axis=0) / T
    sinr = _sinr_from_means(shift + md, eta_sn, noise)
    se = np.log2(1 + sinr)
    loo = shift + md + (md - D) / (T - 1)  # delete-one means, (T, K, 4)
    # replicates centred on the full-sample value so constant replicates give exactly 0
    theta = np.log2(1 + _sinr_from_means(loo, eta_sn, noise)) - se
    stderr = np.sqrt((T - 1) / T * np.sum((theta - theta.mean(axis=0)) ** 2, axis=0))
    return SeEstimate(se, stderr, sinr, T, int(seed))
