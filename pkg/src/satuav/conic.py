"""Small second-order cone programs: linear objective, affine and convex
quadratic constraints, variable bounds.

Problems are built in a solver-neutral form (:class:`ConicProblem`) and solved
by a primal-dual interior-point method (cvxopt ``conelp``).  Convex quadratic
constraints ``||F x||^2 + q.x + c0 <= 0`` are lifted to second-order cones
(rotated when ``q != 0``).  Fixed variables are eliminated and the data is
equilibrated before solving; the scaling is undone on output.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

try:
    import cvxopt
    from cvxopt import solvers as _cvx_solvers
except ImportError:  # pragma: no cover
    cvxopt = None

log = logging.getLogger(__name__)

STATUSES = ("optimal", "infeasible", "unbounded", "max_iter", "numerical_error")


@dataclass
class QuadConstraint:
    F: sp.csr_matrix  # (rows, n)
    q: np.ndarray  # (n,)
    c0: float
    tag: str

    def value(self, x: np.ndarray) -> float:
        Fx = self.F @ x
        return float(Fx @ Fx + self.q @ x + self.c0)


@dataclass
class ConicProblem:
    """Variables with bounds, linear objective, ``<=``/``==`` rows and convex
    quadratic ``<= 0`` constraints.  Every constraint carries a tag."""

    names: list[str] = field(default_factory=list)
    lb: list[float] = field(default_factory=list)
    ub: list[float] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    sense: str = "max"
    lin: list[tuple[dict[int, float], float, str, str]] = field(default_factory=list)
    quad: list[QuadConstraint] = field(default_factory=list)
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return len(self.names)

    def add_variable(self, name: str, lb: float = -math.inf, ub: float = math.inf) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name!r}")
        self.names.append(name)
        self.lb.append(float(lb))
        self.ub.append(float(ub))
        self._index[name] = len(self.names) - 1
        return self._index[name]

    def __post_init__(self):
        self._index = {nm: i for i, nm in enumerate(self.names)}

    def index(self, name: str) -> int:
        return self._index[name]

    def _coeffs(self, coeffs) -> dict[int, float]:
        return {(self._index[k] if isinstance(k, str) else int(k)): float(v) for k, v in coeffs.items()}

    def set_objective(self, coeffs, sense: str = "max") -> None:
        if sense not in ("max", "min"):
            raise ValueError("sense must be 'max' or 'min'")
        self.objective = self._coeffs(coeffs)
        self.sense = sense

    def add_linear(self, coeffs, rel: str, rhs: float, tag: str = "") -> None:
        """``sum coeffs * x  rel  rhs`` with rel in ``<=``, ``>=``, ``==``."""
        c = self._coeffs(coeffs)
        if rel == ">=":
            c, rhs, rel = {k: -v for k, v in c.items()}, -rhs, "<="
        if rel not in ("<=", "=="):
            raise ValueError(f"bad relation {rel!r}")
        self.lin.append((c, float(rhs), rel, tag))

    def add_quadratic(self, F, q=None, c0: float = 0.0, tag: str = "") -> None:
        """``||F x||^2 + q.x + c0 <= 0``; ``q`` may be a dict or a dense vector."""
        F = sp.csr_matrix(F, dtype=float)
        if F.shape[1] != self.n:
            raise ValueError("quadratic factor has the wrong number of columns")
        if isinstance(q, dict):
            qv = np.zeros(self.n)
            for k, v in self._coeffs(q).items():
                qv[k] = v
        else:
            qv = np.zeros(self.n) if q is None else np.asarray(q, dtype=float)
        self.quad.append(QuadConstraint(F, qv, float(c0), tag))

    def add_quadratic_matrix(self, Q, q=None, c0: float = 0.0, tag: str = "") -> None:
        """``x^T Q x + q.x + c0 <= 0`` for PSD ``Q``; rejects indefinite ``Q``."""
        Q = np.asarray(Q, dtype=float)
        lam, V = np.linalg.eigh((Q + Q.T) / 2)
        if lam.min() < -1e-10 * max(1.0, abs(lam).max()):
            raise ValueError("quadratic constraint matrix is not PSD")
        self.add_quadratic((V * np.sqrt(np.clip(lam, 0, None))).T, q, c0, tag)

    def tags(self) -> list[str]:
        return [t for *_, t in self.lin] + [qc.tag for qc in self.quad]

    def violations(self, x) -> dict[str, float]:
        """Largest violation per constraint tag at ``x`` (0 when satisfied)."""
        x = np.asarray(x, dtype=float)
        out: dict[str, float] = {}

        def put(tag, v):
            out[tag] = max(out.get(tag, 0.0), float(v))

        lo, hi = np.asarray(self.lb), np.asarray(self.ub)
        put("bounds", max(0.0, np.max(lo - x, initial=0.0), np.max(x - hi, initial=0.0)))
        for c, rhs, rel, tag in self.lin:
            v = sum(a * x[j] for j, a in c.items()) - rhs
            put(tag, abs(v) if rel == "==" else max(v, 0.0))
        for qc in self.quad:
            put(qc.tag, max(qc.value(x), 0.0))
        return out

    def objective_value(self, x) -> float:
        return float(sum(v * x[j] for j, v in self.objective.items()))

    def dump(self) -> str:
        """Plain-text listing: variables first, then one constraint per line."""
        lines = [f"{self.sense} " + " ".join(f"{v:+.17g}*{self.names[j]}" for j, v in sorted(self.objective.items()))]
        for nm, lo, hi in zip(self.names, self.lb, self.ub):
            lines.append(f"var {nm} {lo:.17g} {hi:.17g}")
        for c, rhs, rel, tag in self.lin:
            terms = " ".join(f"{v:+.17g}*{self.names[j]}" for j, v in sorted(c.items()))
            lines.append(f"lin {tag or '-'} {terms} {rel} {rhs:.17g}")
        for qc in self.quad:
            coo = qc.F.tocoo()
            ent = " ".join(f"F[{i},{self.names[j]}]={v:.17g}" for i, j, v in zip(coo.row, coo.col, coo.data))
            lin = " ".join(f"{v:+.17g}*{self.names[j]}" for j, v in enumerate(qc.q) if v)
            lines.append(f"quad {qc.tag or '-'} ||F x||^2 {lin} {qc.c0:+.17g} <= 0 ; {ent}")
        return "\n".join(lines) + "\n"


@dataclass
class ConicSolution:
    x: np.ndarray
    objective: float
    status: str
    gap: float
    residual: float
    iterations: int
    names: list[str] = field(default_factory=list, repr=False)

    @property
    def values(self) -> dict[str, float]:
        return dict(zip(self.names, self.x.tolist()))


def _ruiz(blocks_rows, M, iters=8):
    """Row/column equilibration; rows of one cone share a single scale."""
    M = sp.csr_matrix(M)
    m, n = M.shape
    r = np.ones(m)
    c = np.ones(n)
    for _ in range(iters):
        A = sp.diags(r) @ M @ sp.diags(c)
        absA = abs(A)
        rmax = np.asarray(absA.max(axis=1).todense()).ravel()
        rs = np.ones(m)
        for rows in blocks_rows:
            mx = rmax[rows].max() if len(rows) else 0.0
            rs[rows] = 1.0 / math.sqrt(mx) if mx > 0 else 1.0
        cmax = np.asarray(absA.max(axis=0).todense()).ravel()
        cs = np.where(cmax > 0, 1.0 / np.sqrt(np.where(cmax > 0, cmax, 1.0)), 1.0)
        r *= rs
        c *= cs
    return r, c


def _to_cvx(A):
    A = sp.coo_matrix(A)
    return cvxopt.spmatrix(A.data.tolist(), A.row.tolist(), A.col.tolist(), size=A.shape)


def solve(problem: ConicProblem, tol: float = 1e-8, iter_cap: int = 100, x0=None) -> ConicSolution:
    if cvxopt is None:  # pragma: no cover
        raise ImportError("cvxopt is required for the conic solver")
    n = problem.n
    lb, ub = np.asarray(problem.lb), np.asarray(problem.ub)
    if np.any(lb > ub):
        return ConicSolution(np.full(n, np.nan), math.nan, "infeasible", math.inf, math.inf, 0, problem.names)

    fixed = lb == ub
    free = np.flatnonzero(~fixed)
    xfix = np.where(fixed, lb, 0.0)
    nf = free.size
    col = {j: t for t, j in enumerate(free)}

    sign = -1.0 if problem.sense == "max" else 1.0
    cvec = np.zeros(nf)
    const_obj = 0.0
    for j, v in problem.objective.items():
        if fixed[j]:
            const_obj += v * xfix[j]
        else:
            cvec[col[j]] = sign * v

    # linear inequality and equality rows
    Gi, Gj, Gv, h = [], [], [], []
    Ai, Aj, Av, bvec = [], [], [], []
    data_norm = 0.0

    def row(target_i, target_j, target_v, target_rhs, coeffs, rhs):
        r = len(target_rhs)
        for j, a in coeffs.items():
            if fixed[j]:
                rhs -= a * xfix[j]
            elif a != 0.0:
                target_i.append(r)
                target_j.append(col[j])
                target_v.append(a)
        target_rhs.append(rhs)

    for j in free:
        if np.isfinite(ub[j]):
            row(Gi, Gj, Gv, h, {j: 1.0}, ub[j])
        if np.isfinite(lb[j]):
            row(Gi, Gj, Gv, h, {j: -1.0}, -lb[j])
    for c, rhs, rel, _ in problem.lin:
        data_norm = max(data_norm, abs(rhs), *(abs(v) for v in c.values()))
        if rel == "==":
            row(Ai, Aj, Av, bvec, c, rhs)
        else:
            row(Gi, Gj, Gv, h, c, rhs)
    n_lin = len(h)
    G_lin = sp.csr_matrix((Gv, (Gi, Gj)), shape=(n_lin, nf))

    # second-order cones
    cone_mats, cone_h, cone_dims = [], [], []
    for qc in problem.quad:
        Ffree = qc.F[:, free]
        c0 = qc.c0 + float(qc.q[fixed] @ xfix[fixed])
        Fx0 = qc.F[:, np.flatnonzero(fixed)] @ xfix[fixed] if fixed.any() else np.zeros(qc.F.shape[0])
        q = qc.q[free]
        data_norm = max(data_norm, abs(qc.c0), np.abs(qc.q).max(initial=0.0),
                        abs(qc.F).max() if qc.F.nnz else 0.0)
        k = Ffree.shape[0]
        if not np.any(q):
            if c0 + Fx0 @ Fx0 > 0 and not Ffree.nnz:
                return ConicSolution(np.full(n, np.nan), math.nan, "infeasible", math.inf, math.inf, 0, problem.names)
            # ||F x + Fx0|| <= sqrt(-c0)
            if c0 > 0:
                return ConicSolution(np.full(n, np.nan), math.nan, "infeasible", math.inf, math.inf, 0, problem.names)
            G = sp.vstack([sp.csr_matrix((1, nf)), -Ffree])
            hh = np.concatenate([[math.sqrt(-c0)], Fx0])
        else:
            # ||F x + Fx0||^2 <= u := -q.x - c0, as ||(2(Fx+Fx0), u/a - a)|| <= u/a + a
            a = math.sqrt(max(1.0, abs(c0)))
            qrow = sp.csr_matrix(q[None, :] / a)
            G = sp.vstack([qrow, -2.0 * Ffree, qrow])
            hh = np.concatenate([[-c0 / a + a], 2.0 * Fx0, [-c0 / a - a]])
            k += 1
        cone_mats.append(G)
        cone_h.append(hh)
        cone_dims.append(k + 1)

    G = sp.vstack([G_lin] + cone_mats).tocsr() if cone_mats else G_lin
    hvec = np.concatenate([np.asarray(h, float)] + cone_h) if cone_h else np.asarray(h, float)
    A = sp.csr_matrix((Av, (Ai, Aj)), shape=(len(bvec), nf))
    bvec = np.asarray(bvec, float)

    # equilibration
    blocks, start = [[i] for i in range(n_lin)], n_lin
    for d in cone_dims:
        blocks.append(list(range(start, start + d)))
        start += d
    blocks += [[G.shape[0] + i] for i in range(A.shape[0])]
    r, cs = _ruiz(blocks, sp.vstack([G, A]) if A.shape[0] else G)
    rg, ra = r[: G.shape[0]], r[G.shape[0]:]
    Gs = sp.diags(rg) @ G @ sp.diags(cs)
    hs = rg * hvec
    As = sp.diags(ra) @ A @ sp.diags(cs)
    bs = ra * bvec
    cs_obj = cs * cvec
    cscale = np.abs(cs_obj).max() if np.any(cs_obj) else 1.0
    cs_obj = cs_obj / cscale

    dims = {"l": n_lin, "q": cone_dims, "s": []}
    opts = {"show_progress": False, "abstol": tol, "reltol": tol, "feastol": max(tol, 1e-10),
            "maxiters": int(iter_cap)}
    kwargs = {}
    if x0 is not None:
        y0 = np.asarray(x0, float)[free] / cs
        s0 = hs - Gs @ y0
        if _interior(s0, n_lin, cone_dims):
            kwargs["primalstart"] = {"x": cvxopt.matrix(y0), "s": cvxopt.matrix(s0)}
    args = [cvxopt.matrix(cs_obj), _to_cvx(Gs), cvxopt.matrix(hs), dims]
    if A.shape[0]:
        args += [_to_cvx(As), cvxopt.matrix(bs)]
    res = None
    # cvxopt can hit a domain error in its scaling update on badly conditioned
    # data; retry cold and then with a looser tolerance before giving up
    for attempt_kwargs, attempt_tol in ((kwargs, tol), ({}, tol), ({}, max(tol, 1e-7))):
        opts.update(abstol=attempt_tol, reltol=attempt_tol, feastol=max(attempt_tol, 1e-10))
        try:
            res = _cvx_solvers.conelp(*args, options=opts, **attempt_kwargs)
            break
        except (ValueError, ArithmeticError) as exc:
            log.debug("conelp failed (%s); retrying", exc)
    if res is None:
        return ConicSolution(np.full(n, np.nan), math.nan, "numerical_error", math.inf, math.inf, 0,
                             problem.names)

    status = {"optimal": "optimal", "primal infeasible": "infeasible",
              "dual infeasible": "unbounded"}.get(res["status"], "max_iter")
    x = xfix.copy()
    if res["x"] is not None and status in ("optimal", "max_iter"):
        x[free] = cs * np.asarray(res["x"]).ravel()
    else:
        x[free] = np.nan
    gap = res.get("relative gap")
    gap = float(gap) if gap is not None else math.inf
    viol = problem.violations(x) if np.all(np.isfinite(x)) else {"": math.inf}
    residual = max(viol.values(), default=0.0)
    if status == "optimal" and residual > 10 * max(tol, 1e-10) * (1.0 + data_norm):
        status = "max_iter"
    obj = problem.objective_value(x) if np.all(np.isfinite(x)) else math.nan
    return ConicSolution(x, obj, status, gap, residual, int(res.get("iterations", 0)), problem.names)


def _interior(s, n_lin, dims, margin=1e-9):
    if np.any(s[:n_lin] <= margin):
        return False
    i = n_lin
    for d in dims:
        blk = s[i:i + d]
        if blk[0] - np.linalg.norm(blk[1:]) <= margin:
            return False
        i += d
    return True
