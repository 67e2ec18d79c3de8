"""Dense bounded-variable primal simplex.

Solves ``min/max c.x  s.t.  A x (<=,=,>=) b,  lo <= x <= hi`` with a full
tableau. Bounds are handled natively: nonbasic variables sit at a finite
bound (or at zero when free). Phase 1 uses artificial variables only on rows
whose slack cannot absorb the initial residual.

Pricing is Dantzig's rule; after 50 consecutive degenerate pivots the solver
switches to Bland's rule until it makes progress again.
"""
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from pwlv import kernels

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-7
COST_TOL = 1e-7
DEGENERATE_LIMIT = 50
REFACTOR_EVERY = 100


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class LpNumericError(RuntimeError):
    """The simplex iterations broke down (singular basis, cycling, ...)."""


@dataclass
class LpResult:
    """Outcome of an LP solve.

    ``duals`` and ``reduced_costs`` satisfy ``c = A.T @ duals + reduced_costs``
    for the objective as given (maximization or not).
    """

    status: LpStatus
    objective: float = np.nan
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    duals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    reduced_costs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    basis: list = field(default_factory=list)
    iterations: int = 0
    pivots: list = field(default_factory=list)

    @property
    def optimal(self):
        return self.status is LpStatus.OPTIMAL


_SENSE = {"<=": 0, "=": 1, ">=": 2, "L": 0, "E": 1, "G": 2}


class _Tableau:
    def __init__(self, A, senses, b, lo, hi):
        m, n = A.shape
        self.m, self.n = m, n
        codes = np.array([_SENSE[s] for s in senses], dtype=np.int64)
        slo = np.where(codes == 2, -np.inf, 0.0)
        shi = np.where(codes == 0, np.inf, 0.0)

        xn = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        r = b - A @ xn
        # a slack can start basic when the residual sits inside its bounds
        slack_ok = (r >= slo - FEAS_TOL) & (r <= shi + FEAS_TOL)
        art_rows = np.flatnonzero(~slack_ok)
        na = len(art_rows)
        self.na = na
        N = n + m + na
        self.N = N

        full = np.zeros((m, N))
        full[:, :n] = A
        full[:, n:n + m] = np.eye(m)
        sign = np.ones(m)
        for t, i in enumerate(art_rows):
            sign[i] = 1.0 if r[i] >= 0 else -1.0
            full[i, n + m + t] = sign[i]
        self.full = full
        self.b = b.astype(float)

        self.lo = np.concatenate([lo, slo, np.zeros(na)])
        self.hi = np.concatenate([hi, shi, np.full(na, np.inf)])
        self.xval = np.concatenate([xn, np.zeros(m + na)])

        basis = np.arange(n, n + m)
        for t, i in enumerate(art_rows):
            basis[i] = n + m + t
        self.basis = basis
        self.is_basic = np.zeros(N, dtype=bool)
        self.is_basic[basis] = True

        # B is diagonal with entries 1 (slack) or sign (artificial)
        binv = np.where(np.isin(np.arange(m), art_rows), sign, 1.0)
        self.T = full * binv[:, None]
        beta = binv * r
        beta[slack_ok] = r[slack_ok]
        self.xval[basis] = beta
        self.pivots = []
        self.since_refactor = 0

    # -- core operations -------------------------------------------------
    def reduced_costs(self, cost):
        return cost - cost[self.basis] @ self.T

    def refactor(self):
        B = self.full[:, self.basis]
        try:
            self.T = np.linalg.solve(B, self.full)
        except np.linalg.LinAlgError as exc:
            raise LpNumericError("singular basis during refactorization") from exc
        nonbasic = ~self.is_basic
        rhs = self.b - self.full[:, nonbasic] @ self.xval[nonbasic]
        self.xval[self.basis] = np.linalg.solve(B, rhs)
        self.since_refactor = 0

    def iterate(self, cost, max_iter):
        """Run primal simplex on ``cost`` (minimization). Returns status."""
        d = self.reduced_costs(cost)
        degenerate = 0
        bland = False
        it = 0
        while True:
            it += 1
            if it > max_iter:
                raise LpNumericError("iteration limit reached")
            x = self.xval
            movable = (~self.is_basic) & (self.hi > self.lo)
            up = movable & (d < -COST_TOL) & (x < self.hi - FEAS_TOL)
            down = movable & (d > COST_TOL) & (x > self.lo + FEAS_TOL)
            cand = np.flatnonzero(up | down)
            if cand.size == 0:
                return LpStatus.OPTIMAL, it
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(d[cand]))])
            direction = 1.0 if up[j] else -1.0

            col = self.T[:, j]
            delta = -direction * col  # rate of change of each basic variable
            xb = x[self.basis]
            lob = self.lo[self.basis]
            hib = self.hi[self.basis]
            theta = np.full(self.m, np.inf)
            dec = delta < -PIVOT_TOL
            inc = delta > PIVOT_TOL
            with np.errstate(invalid="ignore"):
                theta[dec] = (xb[dec] - lob[dec]) / -delta[dec]
                theta[inc] = (hib[inc] - xb[inc]) / delta[inc]
            theta = np.where(np.isnan(theta), np.inf, np.maximum(theta, 0.0))
            flip = self.hi[j] - self.lo[j]
            tmin = theta.min() if self.m else np.inf
            if not np.isfinite(tmin) and not np.isfinite(flip):
                return LpStatus.UNBOUNDED, it

            if flip <= tmin:
                step = flip
                x[j] = self.hi[j] if direction > 0 else self.lo[j]
                x[self.basis] = xb + delta * step
                degenerate = 0
                bland = False
                continue

            ties = np.flatnonzero(theta <= tmin + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(col[ties]))])
            step = theta[r]
            leaving = self.basis[r]
            x[self.basis] = xb + delta * step
            x[j] = x[j] + direction * step
            x[leaving] = self.lo[leaving] if delta[r] < 0 else self.hi[leaving]

            kernels.pivot(self.T, r, j)
            self.basis[r] = j
            self.is_basic[leaving] = False
            self.is_basic[j] = True
            self.pivots.append((j, int(leaving)))
            d = d - d[j] * self.T[r]
            d[j] = 0.0

            if step <= 1e-12:
                degenerate += 1
                if degenerate >= DEGENERATE_LIMIT:
                    bland = True
            else:
                degenerate = 0
                bland = False

            self.since_refactor += 1
            if self.since_refactor >= REFACTOR_EVERY:
                self.refactor()
                d = self.reduced_costs(cost)


def simplex(c, A, senses, b, lo, hi, maximize=False, max_iter=None):
    """Solve an LP given as dense arrays. See module docstring."""
    A = np.asarray(A, dtype=float)
    c = np.asarray(c, dtype=float)
    b = np.asarray(b, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if A.ndim != 2:
        A = A.reshape(len(b), len(c))
    m, n = A.shape
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
        raise ValueError("LP data must be finite")
    if np.any(lo > hi + FEAS_TOL):
        return LpResult(LpStatus.INFEASIBLE)
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    tab = _Tableau(A, senses, b, lo, hi)
    iters = 0
    if tab.na:
        c1 = np.zeros(tab.N)
        c1[n + m:] = 1.0
        _, k = tab.iterate(c1, max_iter)
        iters += k
        tab.refactor()
        infeas = tab.xval[n + m:].sum()
        if infeas > FEAS_TOL * max(1.0, np.abs(b).max(initial=0.0)):
            return LpResult(LpStatus.INFEASIBLE, iterations=iters)
        # artificials are pinned at zero for phase 2
        tab.hi[n + m:] = 0.0
        tab.xval[n + m:] = np.clip(tab.xval[n + m:], 0.0, 0.0)

    # primal acceptance at the end is relative to the size of the data
    finite = np.concatenate([lo[np.isfinite(lo)], hi[np.isfinite(hi)]])
    scale = max(1.0, np.abs(b).max(initial=0.0), np.abs(A).max(initial=0.0) * np.abs(finite).max(initial=1.0))
    sgn = -1.0 if maximize else 1.0
    cost = np.zeros(tab.N)
    cost[:n] = sgn * c
    for _ in range(5):
        status, k = tab.iterate(cost, max_iter)
        iters += k
        if status is LpStatus.UNBOUNDED:
            return LpResult(LpStatus.UNBOUNDED, iterations=iters, pivots=tab.pivots)
        tab.refactor()
        if _clean(tab, cost, FEAS_TOL * scale):
            break
    else:
        raise LpNumericError("could not reach a clean optimal basis")

    x = tab.xval[:n].copy()
    B = tab.full[:, tab.basis]
    y = np.linalg.solve(B.T, cost[tab.basis])
    red = cost[:n] - A.T @ y
    return LpResult(
        LpStatus.OPTIMAL,
        objective=float(c @ x),
        x=x,
        duals=sgn * y,
        reduced_costs=sgn * red,
        basis=[int(v) for v in tab.basis],
        iterations=iters,
        pivots=tab.pivots,
    )


def _clean(tab, cost, primal_tol=FEAS_TOL):
    """True when the refactored basis is primal feasible and dual optimal."""
    x = tab.xval
    viol = np.maximum(tab.lo - x, 0.0) + np.maximum(x - tab.hi, 0.0)
    if viol.max(initial=0.0) > primal_tol:
        return False
    d = tab.reduced_costs(cost)
    nb = (~tab.is_basic) & (tab.hi > tab.lo)
    bad_up = nb & (d < -COST_TOL) & (x < tab.hi - FEAS_TOL)
    bad_down = nb & (d > COST_TOL) & (x > tab.lo + FEAS_TOL)
    # snap basic values onto bounds they only miss by rounding
    tab.xval = np.clip(x, tab.lo, tab.hi)
    return not (bad_up.any() or bad_down.any())


def solve_lp(model, objective=None, lo=None, hi=None, extra_rows=()):
    """LP relaxation of a :class:`~pwlv.formulation.MipModel`.

    ``objective`` overrides the model objective with a ``(sense, coeffs)``
    pair where ``coeffs`` is a dense vector over the model variables.
    ``lo``/``hi`` override variable bounds; ``extra_rows`` are additional
    :class:`~pwlv.formulation.LinearConstraint` rows (e.g. cuts).
    """
    A, senses, b = model.dense_rows(extra_rows)
    vlo, vhi = model.bounds()
    if lo is not None:
        vlo = np.asarray(lo, dtype=float)
    if hi is not None:
        vhi = np.asarray(hi, dtype=float)
    if objective is None:
        sense, c = model.objective_sense, model.objective_vector()
    else:
        sense, c = objective
    return simplex(c, A, senses, b, vlo, vhi, maximize=(sense == "max"))
