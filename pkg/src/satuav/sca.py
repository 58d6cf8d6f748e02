"""Successive convex approximation for UAV-layer energy-efficiency maximisation.

The EE problem is rewritten with auxiliaries ``r`` (per-GU EE share),
``gamma`` (inverse SINR), ``xi`` (interference plus noise) and ``t`` (total
UAV power).  Each iteration solves a convex surrogate built around the current
iterate:

* ``log2(1 + 1/gamma) / t >= r`` is replaced by its tangent plane, a global
  under-estimator since the left side is jointly convex;
* ``xi / gamma`` on the right of the signal constraint is replaced by its
  first-order expansion;
* the convex signal power ``|b_kk^T eta_k|^2`` on the left of the same
  constraint is replaced by its tangent, which lower-bounds it everywhere;
* per-UAV budgets, the total-power definition and the interference bound stay
  as convex quadratics.

Satellite powers are held fixed.  After every solve the auxiliaries are
refreshed from the true closed-form SINR and power at the new UAV powers, so
the objective ``sum r`` of an accepted iterate equals its EE.  A step that
would break the SE threshold or lower the EE is halved until it does not.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import conic
from .moments import PrecodingMoments
from .performance import (PerformanceReport, PowerAllocation, energy_efficiency,
                          noise_power, signal_terms, total_power)
from .scenario import Mode, ScenarioConfig

log = logging.getLogger(__name__)

GAMMA_MIN = 1e-8
GAMMA_CAP = 1e8  # stands in for 1/(2^0 - 1) when the SE threshold is zero
LN2 = math.log(2.0)


@dataclass(frozen=True)
class Affine:
    """``const + sum coef[name] . value[name]``."""

    const: float
    coef: dict

    def __call__(self, **values) -> float:
        return float(self.const + sum(np.dot(c, values[name]) for name, c in self.coef.items()))


def linearize_rate_over_power(gamma_bar: float, t_bar: float) -> Affine:
    """Tangent plane of ``log2(1 + 1/gamma) / t`` at ``(gamma_bar, t_bar)``."""
    if gamma_bar <= 0 or t_bar <= 0:
        raise ValueError("expansion point must be positive")
    A = math.log2(1 + 1 / gamma_bar)
    c_t = -A / t_bar**2
    c_g = -1.0 / (gamma_bar**2 * t_bar * (1 + 1 / gamma_bar) * LN2)
    const = A / t_bar - c_t * t_bar - c_g * gamma_bar
    return Affine(const, {"gamma": c_g, "t": c_t})


def linearize_fraction(xi_bar: float, gamma_bar: float) -> Affine:
    """First-order expansion of ``xi / gamma`` at ``(xi_bar, gamma_bar)``."""
    if gamma_bar <= 0:
        raise ValueError("gamma_bar must be positive")
    c_xi = 1.0 / gamma_bar
    c_g = -xi_bar / gamma_bar**2
    const = xi_bar / gamma_bar - c_xi * xi_bar - c_g * gamma_bar
    return Affine(const, {"xi": c_xi, "gamma": c_g})


def linearize_signal_quadratic(b, eta_bar) -> Affine:
    """Tangent ``2 (b.eta_bar)(b.eta) - (b.eta_bar)^2`` of ``(b.eta)^2``."""
    b = np.real(np.asarray(b))
    s = float(b @ np.asarray(eta_bar, dtype=float))
    return Affine(-s * s, {"eta": 2 * s * b})


def qos_gamma_max(config: ScenarioConfig) -> np.ndarray:
    se = config.se_min_vector()
    with np.errstate(divide="ignore"):
        g = 1.0 / (2.0**se - 1.0)
    return np.minimum(g, GAMMA_CAP)


@dataclass(frozen=True)
class ScaIterate:
    eta_sqrt: np.ndarray  # (L, K), column k is the sqrt-power vector of GU k
    r: np.ndarray
    gamma: np.ndarray
    xi: np.ndarray  # W
    t: float  # W

    @property
    def objective(self) -> float:
        return float(np.sum(self.r))

    def allocation(self, eta_sn) -> PowerAllocation:
        return PowerAllocation(self.eta_sqrt**2, eta_sn)


def _true_terms(eta_sqrt, eta_sn, moments):
    num, interf = signal_terms(PowerAllocation(eta_sqrt**2, eta_sn), moments)
    return num, interf


def init_state(config: ScenarioConfig, moments: PrecodingMoments, init_alloc: PowerAllocation) -> ScaIterate:
    """Starting iterate: gamma at the QoS bound, xi and t consistent with it."""
    alloc = init_alloc.for_mode(config.mode)
    gamma = qos_gamma_max(config)
    num, _ = _true_terms(np.sqrt(alloc.eta_ap), alloc.eta_sn, moments)
    xi = gamma * num
    t = total_power(alloc, moments, config)
    r = np.log2(1 + 1 / gamma) / t
    return ScaIterate(np.sqrt(alloc.eta_ap), r, gamma, xi, t)


def refresh_state(config: ScenarioConfig, moments: PrecodingMoments, eta_sqrt, eta_sn) -> ScaIterate:
    """Auxiliaries evaluated at their tightest values for the given powers."""
    noise = noise_power(config)
    num, interf = _true_terms(eta_sqrt, eta_sn, moments)
    xi = interf + noise
    with np.errstate(divide="ignore"):
        gamma = np.where(num > 0, xi / np.where(num > 0, num, 1.0), np.inf)
    gamma = np.clip(gamma, GAMMA_MIN, None)
    t = total_power(PowerAllocation(eta_sqrt**2, eta_sn), moments, config)
    r = np.log2(1 + 1 / gamma) / t
    return ScaIterate(np.asarray(eta_sqrt, float), r, gamma, xi, t)


def _time_scale(config: ScenarioConfig, L: int) -> float:
    ref = L * config.static_power
    return ref if ref > 0 else L * config.P_ap_dl / config.amp_efficiency


def build_subproblem(state: ScaIterate, moments: PrecodingMoments, config: ScenarioConfig,
                     eta_sn) -> conic.ConicProblem:
    """Convex surrogate around ``state`` in normalised variables.

    UAV variables are ``u[l,k] = sqrt(eta[l,k] E||w_{l,k}||^2 / P_ap_dl)`` so
    ``u^2`` is the fraction of the UAV budget spent on the link; powers and
    interference are normalised by the noise power, ``t`` and ``r`` by the
    static power of the UAV layer.
    """
    L, K = moments.L, moments.K
    P = config.P_ap_dl
    noise = noise_power(config)
    t_ref = _time_scale(config, L)
    eta_sn = np.asarray(eta_sn, float)
    D = np.sqrt(P / moments.w_norm_sq)  # (L, K): eta_sqrt = D * u
    gmax = qos_gamma_max(config)

    prob = conic.ConicProblem()
    u_idx = np.empty((L, K), dtype=int)
    for l in range(L):
        for k in range(K):
            u_idx[l, k] = prob.add_variable(f"u_{l}_{k}", 0.0, 1.0)
    r_idx = [prob.add_variable(f"r_{k}") for k in range(K)]
    g_idx = [prob.add_variable(f"gamma_{k}", GAMMA_MIN, gmax[k]) for k in range(K)]
    x_idx = [prob.add_variable(f"xi_{k}", 0.0) for k in range(K)]
    t_min = L * config.static_power / t_ref
    t_idx = prob.add_variable("t", t_min)
    n = prob.n

    # per-UAV budgets
    for l in range(L):
        F = np.zeros((K, n))
        F[np.arange(K), u_idx[l]] = 1.0
        prob.add_quadratic(F, None, -1.0, tag=f"budget_{l}")

    # total power definition: (P/eps) ||u||^2 + L P0 <= t
    F = np.zeros((L * K, n))
    F[np.arange(L * K), u_idx.ravel()] = math.sqrt(P / (config.amp_efficiency * t_ref))
    prob.add_quadratic(F, {t_idx: -1.0}, t_min, tag="power")

    B = moments.B(eta_sn)
    u_bar = state.eta_sqrt / D
    for k in range(K):
        # interference: sum_i ||Cfac_{k,i}^H eta_i||^2 + B_k + noise <= xi_k
        rows = []
        for i in range(K):
            CH = moments.Cfac[k, i].conj().T * (D[:, i] / math.sqrt(noise))
            for part in (CH.real, CH.imag):
                keep = np.any(part != 0, axis=1)
                if keep.any():
                    blk = np.zeros((int(keep.sum()), n))
                    blk[:, u_idx[:, i]] = part[keep]
                    rows.append(blk)
        F = np.vstack(rows) if rows else np.zeros((1, n))
        prob.add_quadratic(F, {x_idx[k]: -1.0}, B[k] / noise + 1.0, tag=f"interference_{k}")

        # signal: sat + tangent(|g^T u|^2) >= lin(xi/gamma)
        g = np.real(moments.b[k, k]) * D[:, k] / math.sqrt(noise)
        tan = linearize_signal_quadratic(g, u_bar[:, k])
        frac = linearize_fraction(state.xi[k] / noise, state.gamma[k])
        sat = eta_sn[k] * moments.sat_signal[k] ** 2 / noise
        coeffs = {int(j): float(c) for j, c in zip(u_idx[:, k], tan.coef["eta"])}
        coeffs[x_idx[k]] = -frac.coef["xi"]
        coeffs[g_idx[k]] = -frac.coef["gamma"]
        prob.add_linear(coeffs, ">=", frac.const - sat - tan.const, tag=f"signal_{k}")

        # rate: r_k <= tangent of log2(1 + 1/gamma_k) / t
        rate = linearize_rate_over_power(state.gamma[k], state.t)
        prob.add_linear({r_idx[k]: 1.0,
                         g_idx[k]: -t_ref * rate.coef["gamma"],
                         t_idx: -t_ref * rate.coef["t"] * t_ref},
                        "<=", t_ref * rate.const, tag=f"rate_{k}")

    prob.set_objective({j: 1.0 for j in r_idx}, "max")
    prob.meta.update(u_idx=u_idx, r_idx=r_idx, g_idx=g_idx, x_idx=x_idx, t_idx=t_idx,
                     D=D, noise=noise, t_ref=t_ref)
    return prob


def pack_state(prob: conic.ConicProblem, state: ScaIterate) -> np.ndarray:
    """Iterate expressed in the subproblem's normalised variables."""
    m = prob.meta
    x = np.zeros(prob.n)
    x[m["u_idx"]] = state.eta_sqrt / m["D"]
    x[m["r_idx"]] = state.r * m["t_ref"]
    x[m["g_idx"]] = state.gamma
    x[m["x_idx"]] = state.xi / m["noise"]
    x[m["t_idx"]] = state.t / m["t_ref"]
    return x


def unpack_powers(prob: conic.ConicProblem, x: np.ndarray) -> np.ndarray:
    u = np.clip(x[prob.meta["u_idx"]], 0.0, None)
    # project solver round-off back onto the per-UAV budgets
    norms = np.sqrt(np.sum(u**2, axis=1, keepdims=True))
    u = u / np.maximum(norms, 1.0)
    return u * prob.meta["D"]


def converged(prev: float, cur: float, eps: float) -> bool:
    return abs(cur - prev) / abs(prev) <= eps if prev != 0 else cur == prev


def stopping_index(objectives, eps: float) -> int | None:
    """Index of the value at which the relative-change rule first fires."""
    for n in range(1, len(objectives)):
        if converged(objectives[n - 1], objectives[n], eps):
            return n
    return None


@dataclass
class ScaResult:
    allocation: PowerAllocation
    report: PerformanceReport
    state: ScaIterate
    trace: list[dict] = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    @property
    def iterations(self) -> int:
        return len(self.trace) - 1

    @property
    def objectives(self) -> list[float]:
        return [row["objective"] for row in self.trace]


def _acceptable(state: ScaIterate, gmax: np.ndarray) -> bool:
    return bool(np.all(state.gamma <= gmax * (1 + 1e-9)))


def sca_solve(config: ScenarioConfig, moments: PrecodingMoments, init_alloc: PowerAllocation,
              tol: float = 1e-8, max_halvings: int = 10, check_inheritance: bool = True) -> ScaResult:
    """Run the SCA loop from a feasible allocation; satellite powers stay fixed."""
    alloc0 = init_alloc.for_mode(config.mode)
    eta_sn = alloc0.eta_sn
    if config.mode == Mode.NTN_ONLY:
        rep = energy_efficiency(alloc0, moments, config)
        st = refresh_state(config, moments, np.sqrt(alloc0.eta_ap), eta_sn)
        return ScaResult(alloc0, rep, st, [], True, "no UAV variables")

    gmax = qos_gamma_max(config)
    state = init_state(config, moments, alloc0)
    best_ee = energy_efficiency(alloc0, moments, config).ee
    trace = [dict(iteration=0, objective=state.objective, ee=best_ee, status="init", step=0.0,
                  inherited_violation=0.0)]
    done, reason = False, "max_iters"
    alloc = alloc0
    for it in range(1, config.sca_max_iters + 1):
        prob = build_subproblem(state, moments, config, eta_sn)
        x_prev = pack_state(prob, state)
        viol = max(prob.violations(x_prev).values())
        if check_inheritance and viol > 1e-6 * (1 + np.max(np.abs(x_prev))):
            log.warning("previous iterate violates the new subproblem by %.3e", viol)
        sol = conic.solve(prob, tol=tol, x0=x_prev)
        if sol.status not in ("optimal", "max_iter") or not np.all(np.isfinite(sol.x)):
            reason = f"subproblem {sol.status}"
            trace.append(dict(iteration=it, objective=state.objective, ee=best_ee,
                              status=sol.status, step=0.0, inherited_violation=viol))
            break
        target = unpack_powers(prob, sol.x)
        step, accepted = 1.0, None
        for _ in range(max_halvings + 1):
            cand_sqrt = state.eta_sqrt + step * (target - state.eta_sqrt)
            cand = refresh_state(config, moments, cand_sqrt, eta_sn)
            if _acceptable(cand, gmax) and cand.objective >= best_ee * (1 - 1e-12):
                accepted = cand
                break
            step *= 0.5
        if accepted is None:
            # no improving step along the surrogate direction: stationary
            trace.append(dict(iteration=it, objective=state.objective, ee=best_ee,
                              status=sol.status, step=0.0, inherited_violation=viol))
            done, reason = True, "stalled"
            break
        prev_obj = state.objective
        state = accepted
        alloc = state.allocation(eta_sn)
        best_ee = state.objective
        trace.append(dict(iteration=it, objective=state.objective, ee=best_ee, status=sol.status,
                          step=step, inherited_violation=viol))
        if converged(prev_obj, state.objective, config.sca_epsilon):
            done, reason = True, "epsilon"
            break

    return ScaResult(alloc, energy_efficiency(alloc, moments, config), state, trace, done, reason)
