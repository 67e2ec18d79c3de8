"""Separation oracles for the lazily generated cut families.

All separators take a :class:`QueryPoint` in neuron-local coordinates and a
:class:`~pwlv.formulation.NeuronContext`, and return cuts in the local form
``cx.x + cy.y + cz.zind  (sense)  rhs`` where ``zind`` is the vector of piece
indicators. :meth:`Cut.to_constraint` maps a cut onto model columns.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pwlv import kernels
from pwlv.formulation import NeuronContext, onehot_cut_coefficients, region_rows, Polytope

VIOLATION_TOL = 1e-6
NORMALIZE_TOL = 1e-9


# ---------------------------------------------------------------------------
# data types


def project_simplex(v):
    """Euclidean projection onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    ks = np.arange(1, len(v) + 1)
    cond = u - css / ks > 0
    r = ks[cond][-1]
    return np.maximum(v - css[r - 1] / r, 0.0)


@dataclass
class QueryPoint:
    """Relaxation values of one neuron: inputs, output and piece indicators.

    ``z`` may be given as the single ReLU/leaky binary; it is expanded to
    the indicator pair (z, 1 - z).
    """

    x: np.ndarray
    y: float
    z: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.y = float(self.y)
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if len(z) == 1:
            z = np.array([z[0], 1.0 - z[0]])
        self.z = z

    def normalized(self):
        """Copy with z projected onto the simplex (removes LP noise)."""
        z = self.z
        if np.all(z >= 0) and abs(z.sum() - 1.0) <= 1e-15:
            return self
        return QueryPoint(self.x, self.y, project_simplex(z))


@dataclass
class Cut:
    cx: np.ndarray
    cy: float
    cz: np.ndarray
    sense: str
    rhs: float
    family: str
    witness: tuple
    violation: float = 0.0
    facet: bool | None = None
    meta: dict = field(default_factory=dict)

    def lhs(self, x, y, z):
        return float(self.cx @ x + self.cy * y + self.cz @ z)

    def violation_at(self, q: QueryPoint):
        v = self.lhs(q.x, q.y, q.z) - self.rhs
        return v if self.sense == "<=" else -v

    def rhs_of_y(self, x, z):
        """For cuts with cy = 1: the bound on y implied at (x, z)."""
        return (self.rhs - float(self.cx @ x) - float(self.cz @ z)) / self.cy

    def to_constraint(self, bind, name=""):
        from pwlv.formulation import LinearConstraint

        terms, const = bind.row_terms(self.cx, self.cy, self.cz)
        return LinearConstraint.make(terms, self.sense, self.rhs - const, name)

    def key(self):
        return (self.family, self.sense, self.witness)


def _finish(cut: Cut, q: QueryPoint, tol):
    cut.violation = cut.violation_at(q)
    if tol is None or cut.violation > tol:
        return cut
    return None


# ---------------------------------------------------------------------------
# ReLU over a box


def relu_ideal_cut(ctx: NeuronContext, mask) -> Cut:
    """Member of the ReLU family for subset I = {i : mask[i]}.

    y <= sum_{I} w_i (x_i - Lb_i (1 - z)) + (b + sum_{not I} w_i Ub_i) z.
    """
    w, b = ctx.f.weights, ctx.f.bias
    m = np.asarray(mask, dtype=bool)
    cx = -np.where(m, w, 0.0)
    cz = np.array([-(b + float(np.sum(np.where(m, 0.0, w * ctx.ubr)))),
                   float(np.sum(np.where(m, w * ctx.lbr, 0.0)))])
    return Cut(cx, 1.0, cz, "<=", 0.0, "ReluIdeal", tuple(int(i) for i in np.flatnonzero(m)))


def separate_relu_ideal(q: QueryPoint, ctx: NeuronContext, tol=VIOLATION_TOL):
    """Most violated member: i in I iff w_i x_i < w_i (Lb_i (1-z) + Ub_i z)."""
    q = q.normalized()
    w = ctx.f.weights
    zh = float(q.z[0])
    mask, _ = kernels.relu_select(w, q.x, ctx.lbr, ctx.ubr, zh)
    return _finish(relu_ideal_cut(ctx, mask), q, tol)


# ---------------------------------------------------------------------------
# max of d over a box


def maxd_cut(ctx: NeuronContext, mapping) -> Cut:
    """Member for the mapping I: coordinate i takes the weight of piece I(i).

    y <= sum_i (w^{I(i)}_i x_i + sum_k max{(w^k_i - w^{I(i)}_i) L_i, (...) U_i} z_k)
         + sum_k b^k z_k, over the enclosing box of the context.
    """
    W, L, U = ctx.W, ctx.lo, ctx.hi
    I = np.asarray(mapping, dtype=np.int64)
    cols = np.arange(ctx.eta)
    wsel = W[I, cols]
    diff = W - wsel[None, :]
    coef = np.maximum(diff * L, diff * U).sum(axis=1)
    return Cut(-wsel, 1.0, -(coef + ctx.b), "<=", 0.0, "MaxDBox", tuple(int(i) for i in I))


def separate_max_d_box(q: QueryPoint, ctx: NeuronContext, tol=VIOLATION_TOL):
    """Per coordinate argmin over pieces (smallest index on ties).

    Contexts whose simplex blocks all have two coordinates are separated
    in the lambda view instead (see :func:`separate_simplex_p2`).
    """
    q = q.normalized()
    if not ctx.is_box and all(blk.p == 2 for blk in ctx.blocks):
        return separate_simplex_p2(q, ctx, tol)
    choice, _ = kernels.maxd_select(ctx.W, q.x, ctx.lo, ctx.hi, q.z, ctx.order)
    return _finish(maxd_cut(ctx, choice), q, tol)


def _p2_sorted(ctx):
    out = []
    for blk in ctx.blocks:
        wt = blk.vert[:, 0] - blk.vert[:, 1]
        out.append(np.argsort(wt, kind="stable"))
    return out


def simplex_p2_cut(ctx: NeuronContext, K) -> Cut:
    """Member of the two-coordinate simplex family for positions ``K``.

    Per block with vertex weights V (d x 2) and wt^k = V^k_1 - V^k_2 sorted
    ascending by sigma: wt^{sigma K} lam_1 + sum_{t<=K} V^{sigma t}_2 z
    + sum_{t>K} (V^{sigma t}_1 - wt^{sigma K}) z.
    """
    d = ctx.d
    cx = np.zeros(ctx.eta)
    cz = ctx.b + ctx.lam_const
    cz = cz.astype(float).copy()
    wit = []
    for blk, sig, k in zip(ctx.blocks, _p2_sorted(ctx), K):
        V = blk.vert
        wt = V[:, 0] - V[:, 1]
        piv = wt[sig[k]]
        idx, xc, c0 = blk.to_x(np.array([piv, 0.0]))
        cx[idx] += xc
        cz += c0
        for t in range(d):
            piece = sig[t]
            cz[piece] += V[piece, 1] if t <= k else V[piece, 0] - piv
        wit.append(int(sig[k]))
    return Cut(-cx, 1.0, -cz, "<=", 0.0, "MaxDBox", tuple(wit))


def separate_simplex_p2(q: QueryPoint, ctx: NeuronContext, tol=VIOLATION_TOL):
    q = q.normalized()
    K = []
    for blk, sig in zip(ctx.blocks, _p2_sorted(ctx)):
        lam = blk.lam(q.x)
        _, k = _p2_min(blk.vert[sig], lam, q.z[sig])
        K.append(k)
    return _finish(simplex_p2_cut(ctx, K), q, tol)


def _p2_min(Vs, x, zs):
    """min over K of wt_K x_1 + sum_{t<=K} V2 z + sum_{t>K} (V1 - wt_K) z.

    ``Vs`` and ``zs`` are already in ascending wt order. Returns (value, K).
    """
    wt = Vs[:, 0] - Vs[:, 1]
    pre2 = np.cumsum(Vs[:, 1] * zs)
    suf1 = np.cumsum((Vs[:, 0] * zs)[::-1])[::-1]
    sufz = np.cumsum(zs[::-1])[::-1]
    d = len(wt)
    vals = np.empty(d)
    for K in range(d):
        above1 = suf1[K + 1] if K + 1 < d else 0.0
        abovez = sufz[K + 1] if K + 1 < d else 0.0
        vals[K] = wt[K] * x[0] + pre2[K] + above1 - wt[K] * abovez
    K = int(np.argmin(vals))
    return float(vals[K]), K


# ---------------------------------------------------------------------------
# two pieces over products of simplices


def onehot_cut(ctx: NeuronContext, J) -> Cut:
    """Member of the d = 2 simplex family for sorted positions ``J``."""
    cx, cz, const = onehot_cut_coefficients(ctx, J)
    wit = tuple(int(perm[j]) for (perm, _), j in zip(ctx.onehot_sorted, J))
    return Cut(-cx, 1.0, -cz, "<=", const, "OneHotRelu", wit)


def separate_onehot_relu(q: QueryPoint, ctx: NeuronContext, tol=VIOLATION_TOL):
    """Greedy knapsack per block; ties go to the smallest sorted position."""
    q = q.normalized()
    wt_all, xs_all, starts = [], [], [0]
    for blk, (perm, wt) in zip(ctx.blocks, ctx.onehot_sorted):
        wt_all.append(wt)
        xs_all.append(blk.lam(q.x)[perm])
        starts.append(starts[-1] + len(wt))
    if not wt_all:
        J = []
    else:
        J, _ = kernels.onehot_select(np.concatenate(wt_all), np.concatenate(xs_all),
                                     np.array(starts, dtype=np.int64), float(q.z[0]))
    return _finish(onehot_cut(ctx, list(J)), q, tol)


def _check_simplex(v, what):
    v = np.asarray(v, dtype=float)
    if np.any(v < -NORMALIZE_TOL) or abs(v.sum() - 1.0) > NORMALIZE_TOL:
        raise ValueError(f"{what} must lie in the simplex (sum {v.sum():.12g})")
    return v


def knapsack_transport_d2(x, z, w1, w2):
    """Transport value for two suppliers via the greedy knapsack closed form.

    Returns ``(value, J)`` with J the original index of the pivot coordinate.
    """
    x = _check_simplex(x, "x")
    z = _check_simplex(z, "z")
    if len(z) != 2:
        raise ValueError("z must have two entries")
    w1 = np.asarray(w1, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    wt = w1 - w2
    perm = np.argsort(wt, kind="stable")
    val, j = kernels.knapsack_min(wt[perm], x[perm], float(z[0]))
    return float(val + w2 @ x), int(perm[j])


def knapsack_transport_p2(x, z, W):
    """Transport value for a two-point x against d pieces (``W`` is d x 2).

    Returns ``(value, K)`` with K the original index of the pivot piece.
    """
    x = _check_simplex(x, "x")
    z = _check_simplex(z, "z")
    W = np.asarray(W, dtype=float)
    if len(x) != 2 or W.shape != (len(z), 2):
        raise ValueError("expects x of length 2 and W of shape (d, 2)")
    wt = W[:, 0] - W[:, 1]
    sig = np.argsort(wt, kind="stable")
    val, k = _p2_min(W[sig], x, z[sig])
    return val, int(sig[k])


# ---------------------------------------------------------------------------
# leaky ReLU


def leaky_cut(ctx: NeuronContext, mask) -> Cut:
    """y <= sum_I (w x - (1-a) w Lb (1-z)) + sum_notI (a w x + (1-a) w Ub z) + b z + a b (1-z)."""
    a = ctx.alpha
    w, b = ctx.f.weights, ctx.f.bias
    m = np.asarray(mask, dtype=bool)
    cx = -np.where(m, w, a * w)
    z1 = b + (1 - a) * float(np.sum(np.where(m, 0.0, w * ctx.ubr)))
    z2 = a * b - (1 - a) * float(np.sum(np.where(m, w * ctx.lbr, 0.0)))
    return Cut(cx, 1.0, -np.array([z1, z2]), "<=", 0.0, "Leaky", tuple(int(i) for i in np.flatnonzero(m)))


def separate_leaky(q: QueryPoint, ctx: NeuronContext, alpha=None, tol=VIOLATION_TOL):
    """Per coordinate: i in I iff w x - (1-a) w Lb (1-z) < a w x + (1-a) w Ub z.

    The difference of the two sides is (1 - a) times the ReLU comparison, so
    the ReLU selection kernel gives the same subset.
    """
    a = ctx.alpha if alpha is None else alpha
    if not (0.0 < a < 1.0):
        raise ValueError(f"alpha must lie in (0,1), got {a}")
    q = q.normalized()
    mask, _ = kernels.relu_select(ctx.f.weights, q.x, ctx.lbr, ctx.ubr, float(q.z[0]))
    return _finish(leaky_cut(ctx, mask), q, tol)


# ---------------------------------------------------------------------------
# clipped ReLU


def clipped_phi(ctx: NeuronContext, mask):
    w = ctx.f.weights
    m = np.asarray(mask, dtype=bool)
    return float(np.sum(np.where(m, w * ctx.lbr, w * ctx.ubr)) + ctx.f.bias)


def clipped_upper_cut(ctx: NeuronContext, mask) -> Cut:
    """y <= sum_I w x + (b + sum_notI w Ub)(z2 + z3) - (sum_I w Lb) z1."""
    w, b = ctx.f.weights, ctx.f.bias
    m = np.asarray(mask, dtype=bool)
    s_out = b + float(np.sum(np.where(m, 0.0, w * ctx.ubr)))
    s_in = float(np.sum(np.where(m, w * ctx.lbr, 0.0)))
    cut = Cut(-np.where(m, w, 0.0), 1.0, np.array([s_in, -s_out, -s_out]), "<=", 0.0, "Clipped",
              ("upper",) + tuple(int(i) for i in np.flatnonzero(m)))
    cut.facet = clipped_phi(ctx, m) < ctx.cap
    return cut


def clipped_lower_cut(ctx: NeuronContext, mask) -> Cut:
    """y >= sum_I w x + (b + sum_notI w Lb)(z1 + z2) - (sum_I w Ub - C) z3."""
    w, b = ctx.f.weights, ctx.f.bias
    m = np.asarray(mask, dtype=bool)
    s_out = b + float(np.sum(np.where(m, 0.0, w * ctx.lbr)))
    s_in = float(np.sum(np.where(m, w * ctx.ubr, 0.0))) - ctx.cap
    cut = Cut(-np.where(m, w, 0.0), 1.0, np.array([-s_out, -s_out, s_in]), ">=", 0.0, "Clipped",
              ("lower",) + tuple(int(i) for i in np.flatnonzero(m)))
    cut.facet = clipped_phi(ctx, ~m) > 0
    return cut


def separate_clipped(q: QueryPoint, ctx: NeuronContext, cap=None, tol=VIOLATION_TOL):
    """Up to two cuts: the most violated upper and lower members.

    Upper: minimize the right-hand side per coordinate, which is the ReLU
    rule with z replaced by z2 + z3. Lower: maximize it per coordinate,
    i in I iff w x - w Ub z3 > w Lb (z1 + z2).
    """
    C = ctx.cap if cap is None else cap
    if not C > 0:
        raise ValueError("cap must be positive")
    q = q.normalized()
    w = ctx.f.weights
    z1, z2, z3 = q.z
    mask_up, _ = kernels.relu_select(w, q.x, ctx.lbr, ctx.ubr, z2 + z3)
    mask_lo = w * q.x - w * ctx.ubr * z3 > w * ctx.lbr * (z1 + z2)
    out = []
    for cut in (clipped_upper_cut(ctx, mask_up), clipped_lower_cut(ctx, mask_lo)):
        cut = _finish(cut, q, tol)
        if cut is not None:
            out.append(cut)
    return out


# ---------------------------------------------------------------------------
# ideal family by subgradient on the dual form


def _region_lp(ctx, poly, k, c):
    A, b = region_rows(ctx, k)
    return poly.optimize(c, A, b, maximize=True)


def dual_cut_value(ctx: NeuronContext, alpha, poly=None, skip=()):
    """h_k(alpha) = max over D_k of (w^k - alpha).x and the maximizers."""
    from pwlv.lp import LpStatus

    poly = poly or Polytope.from_domain(ctx.dom)
    vals = np.full(ctx.d, -np.inf)
    pts = np.zeros((ctx.d, ctx.eta))
    for k in range(ctx.d):
        if k in skip:
            continue
        res = _region_lp(ctx, poly, k, ctx.W[k] - alpha)
        if res.status is LpStatus.OPTIMAL:
            vals[k] = res.objective
            pts[k] = res.x
    return vals, pts


def ideal_dual_cut(ctx: NeuronContext, alpha, hvals, witness=()) -> Cut:
    """y <= alpha.x + sum_k (h_k + b^k) z_k (pieces with empty D_k dropped)."""
    h = np.where(np.isfinite(hvals), hvals, 0.0)
    return Cut(-np.asarray(alpha, dtype=float), 1.0, -(h + ctx.b), "<=", 0.0, "IdealDualSubgradient",
               tuple(witness))


def separate_ideal_dual_subgradient(q: QueryPoint, ctx: NeuronContext, poly=None, iters=200,
                                    tol=VIOLATION_TOL):
    """Subgradient descent on alpha for the dual form of the ideal family.

    Starts at alpha = sum_k z_k w^k, steps 1/sqrt(t) along
    -(x - sum_k z_k x^k*), and keeps the best alpha seen. A piece whose
    region is empty but has z_k above tolerance yields the feasibility cut
    z_k <= 0 instead.
    """
    if ctx.kind == "clipped":
        raise ValueError("the dual family is defined for max-type neurons")
    q = q.normalized()
    poly = poly or Polytope.from_domain(ctx.dom)
    vals, _ = dual_cut_value(ctx, np.zeros(ctx.eta), poly)
    empty = [k for k in range(ctx.d) if not np.isfinite(vals[k])]
    for k in empty:
        if q.z[k] > tol:
            cz = np.zeros(ctx.d)
            cz[k] = 1.0
            cut = Cut(np.zeros(ctx.eta), 0.0, cz, "<=", 0.0, "IdealDualSubgradient", ("prune", k))
            return _finish(cut, q, tol)
    alpha = q.z @ ctx.W
    best_val, best_alpha, best_h = np.inf, alpha.copy(), None
    for t in range(1, iters + 1):
        h, pts = dual_cut_value(ctx, alpha, poly, skip=empty)
        live = np.isfinite(h)
        val = float(alpha @ q.x + np.sum((h[live] + ctx.b[live]) * q.z[live]))
        if val < best_val - 1e-15:
            best_val, best_alpha, best_h = val, alpha.copy(), h.copy()
        g = q.x - q.z[live] @ pts[live]
        if np.linalg.norm(g) <= 1e-12:
            break
        alpha = alpha - g / np.sqrt(t)
    cut = ideal_dual_cut(ctx, best_alpha, best_h, ("alpha",) + tuple(np.round(best_alpha, 12)))
    return _finish(cut, q, tol)


# ---------------------------------------------------------------------------
# dispatch


def separate_family(fam, q: QueryPoint, tol=None):
    """Run the separator matching ``fam.kind``; returns a list of cuts."""
    tol = VIOLATION_TOL if tol is None else tol
    ctx = fam.ctx
    kind = fam.kind
    if kind == "ReluIdeal":
        cut = separate_relu_ideal(q, ctx, tol)
    elif kind == "MaxDBox":
        cut = separate_max_d_box(q, ctx, tol)
    elif kind == "OneHotRelu":
        cut = separate_onehot_relu(q, ctx, tol)
    elif kind == "Leaky":
        cut = separate_leaky(q, ctx, tol=tol)
    elif kind == "Clipped":
        return separate_clipped(q, ctx, tol=tol)
    elif kind == "IdealDualSubgradient":
        cut = separate_ideal_dual_subgradient(q, ctx, iters=fam.options.get("iters", 200), tol=tol)
    else:
        raise ValueError(f"unknown family {kind}")
    return [] if cut is None else [cut]
