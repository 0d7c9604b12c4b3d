"""Dense strictly convex QP solver.

    minimize    0.5 u'Hu + f'u
    subject to  A u <= b,  C u = d

Dual active-set method (Goldfarb-Idnani): start at the unconstrained
minimum, add equality rows, then repeatedly add the most violated inequality
while dropping active rows whose multiplier would turn negative. Each
iteration re-factorizes the active set through a QR of ``L^-1 N'`` with
``H = L L'``; problem sizes here (n <= 88) make that cheap enough and keeps the
method free of rank-one update bookkeeping.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, qr, solve_triangular

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITER = "max-iter"


@dataclass
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    C: np.ndarray | None = None
    d: np.ndarray | None = None

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = self.H.shape[0]
        self.f = np.asarray(self.f, dtype=float).reshape(-1)
        if self.H.shape != (n, n) or self.f.shape != (n,):
            raise ValueError(f"H must be n x n and f length n; got {self.H.shape}, {self.f.shape}")
        if not np.allclose(self.H, self.H.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(self.H).max())):
            raise ValueError("H must be symmetric")
        self.A, self.b = _rows(self.A, self.b, n, "A/b")
        self.C, self.d = _rows(self.C, self.d, n, "C/d")

    @property
    def n(self) -> int:
        return self.H.shape[0]

    def objective(self, u) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.H @ u + self.f @ u)


def _rows(M, v, n, name):
    if M is None:
        return np.zeros((0, n)), np.zeros(0)
    M = np.asarray(M, dtype=float).reshape(-1, n)
    v = np.asarray(v, dtype=float).reshape(-1)
    if M.shape[0] != v.shape[0]:
        raise ValueError(f"{name}: {M.shape[0]} rows but {v.shape[0]} bounds")
    return M, v


@dataclass
class QpSolution:
    u: np.ndarray
    status: str
    kkt_residual: float
    ineq_multipliers: np.ndarray = field(repr=False)
    eq_multipliers: np.ndarray = field(repr=False)
    active: tuple = ()
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status == OPTIMAL


def kkt_residual(p: QpProblem, u, mu, nu) -> float:
    """Max of stationarity, primal infeasibility and complementarity violations."""
    u = np.asarray(u, dtype=float)
    stat = p.H @ u + p.f + p.A.T @ mu + p.C.T @ nu
    res = float(np.max(np.abs(stat))) if stat.size else 0.0
    if p.A.shape[0]:
        slack = p.A @ u - p.b
        res = max(res, float(np.max(slack)), float(np.max(np.abs(mu * slack))),
                  float(-np.min(mu)))
    if p.C.shape[0]:
        res = max(res, float(np.max(np.abs(p.C @ u - p.d))))
    return max(res, 0.0)


class _ActiveSet:
    """Factorization of the active rows N in the metric of H."""

    def __init__(self, L, n):
        self.L = L
        self.n = n
        self.rows = []
        self.refresh()

    def refresh(self):
        k = len(self.rows)
        if k:
            N = np.array([r for r in self.rows])
            M = solve_triangular(self.L, N.T, lower=True)
            self.Q, R = qr(M, mode="full")
            self.R = R[:k, :k]
        else:
            self.Q = np.eye(self.n)
            self.R = np.zeros((0, 0))

    def step(self, a):
        """Primal/dual directions for raising the multiplier of row ``a``."""
        k = len(self.rows)
        dv = self.Q.T @ solve_triangular(self.L, a, lower=True)
        d1, d2 = dv[:k], dv[k:]
        z = -solve_triangular(self.L, self.Q[:, k:] @ d2, lower=True, trans="T")
        r = -solve_triangular(self.R, d1) if k else np.zeros(0)
        return z, r, float(d2 @ d2), float(dv @ dv)

    def polish(self, f, bounds):
        """Exact minimizer and multipliers with the active rows as equalities."""
        k = len(self.rows)
        g = solve_triangular(self.L, f, lower=True)
        Qg = self.Q.T @ g
        y = -self.Q[:, k:] @ Qg[k:]
        lam = np.zeros(0)
        if k:
            y1 = solve_triangular(self.R, np.asarray(bounds), trans="T")
            y = y + self.Q[:, :k] @ y1
            lam = -solve_triangular(self.R, y1 + Qg[:k])
        x = solve_triangular(self.L, y, lower=True, trans="T")
        return x, lam


def solve(problem: QpProblem, warm_start=None, max_iter: int | None = None,
          tol: float = 1e-12) -> QpSolution:
    """Solve a strictly convex QP.

    ``warm_start`` is the previous solution; rows active there are tried first.
    Never raises on infeasibility; the status field reports it instead.
    """
    p = problem
    n = p.n
    try:
        L = np.linalg.cholesky(p.H)
    except np.linalg.LinAlgError as exc:
        raise ValueError("QP Hessian is not positive definite") from exc

    m, neq = p.A.shape[0], p.C.shape[0]
    if max_iter is None:
        max_iter = 10 * (m + neq) + 50
    x = -cho_solve((L, True), p.f)
    act = _ActiveSet(L, n)
    act_id = []         # ("eq", j, sign) or ("in", i)
    lam = []
    status = OPTIMAL
    iters = 0

    def add(entry, row, t):
        act.rows.append(row)
        act_id.append(entry)
        lam.append(t)
        act.refresh()

    # equalities: added with a full step, never dropped
    for j in range(neq):
        c, dj = p.C[j], p.d[j]
        s = c @ x - dj
        sign = 1.0
        if s < 0:
            sign, s = -1.0, -s
        row = sign * c
        z, r, dz, dn = act.step(row)
        if dz <= 1e-20 * max(dn, 1e-300):
            if s > 1e-9 * (1.0 + abs(dj) + np.linalg.norm(c) * np.linalg.norm(x)):
                status = INFEASIBLE
                break
            continue            # redundant row
        t = s / dz
        x = x + t * z
        lam = [l + t * ri for l, ri in zip(lam, r)]
        add(("eq", j, sign), row, t)
        iters += 1

    hint = set()
    if warm_start is not None and m:
        ws = np.asarray(warm_start, dtype=float)
        if ws.shape == (n,):
            hint = set(np.flatnonzero(np.abs(p.A @ ws - p.b) <= 1e-9 * (1.0 + np.abs(p.b))))

    row_norm = np.linalg.norm(p.A, axis=1) if m else np.zeros(0)
    while status == OPTIMAL:
        if iters >= max_iter:
            status = MAX_ITER
            break
        if not m:
            break
        viol = p.A @ x - p.b
        thresh = tol * (1.0 + np.abs(p.b) + row_norm * np.linalg.norm(x))
        in_act = {e[1] for e in act_id if e[0] == "in"}
        cand = [i for i in np.flatnonzero(viol > thresh) if i not in in_act]
        if not cand:
            break
        pri = [i for i in cand if i in hint] or cand
        sc = viol[pri] / np.maximum(row_norm[pri], 1e-300)
        ip = int(pri[int(np.argmax(sc))])
        a = p.A[ip]
        lam_p = 0.0
        while True:
            iters += 1
            if iters > max_iter:
                status = MAX_ITER
                break
            s = a @ x - p.b[ip]
            z, r, dz, dn = act.step(a)
            # partial step limited by active inequality multipliers
            t1, jblk = np.inf, -1
            for jj, (e, rj) in enumerate(zip(act_id, r)):
                if e[0] == "in" and rj < 0.0:
                    tj = lam[jj] / -rj
                    if tj < t1:
                        t1, jblk = tj, jj
            dependent = dz <= 1e-20 * max(dn, 1e-300)
            t2 = np.inf if dependent else max(s, 0.0) / dz
            if dependent and jblk < 0:
                status = INFEASIBLE
                break
            t = min(t1, t2)
            if not dependent:
                x = x + t * z
            lam = [l + t * ri for l, ri in zip(lam, r)]
            lam_p += t
            if t2 <= t1:
                add(("in", ip), a, lam_p)
                break
            del act.rows[jblk], act_id[jblk], lam[jblk]
            act.refresh()

    mu = np.zeros(m)
    nu = np.zeros(neq)
    bounds = [p.d[e[1]] * e[2] if e[0] == "eq" else p.b[e[1]] for e in act_id]
    if status == OPTIMAL:
        xp, lp = act.polish(p.f, bounds)
        # keep the polished point unless rounding made it worse
        if np.all(np.isfinite(xp)):
            x, lam = xp, list(lp)
    for e, l in zip(act_id, lam):
        if e[0] == "eq":
            nu[e[1]] = l * e[2]
        else:
            mu[e[1]] = max(l, 0.0) if status == OPTIMAL else l
    res = kkt_residual(p, x, mu, nu)
    if status != OPTIMAL:
        log.debug("QP terminated with status %s after %d iterations", status, iters)
    return QpSolution(u=x, status=status, kkt_residual=res, ineq_multipliers=mu,
                      eq_multipliers=nu, active=tuple(act_id), iterations=iters)
