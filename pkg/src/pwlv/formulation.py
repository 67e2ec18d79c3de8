"""MIP building blocks for piecewise-linear neurons and whole networks.

Every nonlinear neuron is described by a :class:`NeuronContext` (its affine
pieces and input domain) and a :class:`NeuronBinding` (which model columns
hold its inputs, output and binaries). Builders add constraint blocks to a
:class:`MipModel`; cut families are registered on the model and separated
lazily by :mod:`pwlv.bnc`.

Binaries are modelled through *piece indicators*: for a neuron with d pieces
the indicator vector is ``Z @ zvars + z0``. A ReLU or leaky unit has a single
binary z with indicators (z, 1 - z), the first piece being the active one; a
max-of-d neuron has one binary per piece; a clipped unit has three binaries
(zero, linear, capped).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from pwlv.model import (
    AffineFunc,
    Domain,
    Interval,
    ModelError,
    Network,
    VerificationInstance,
    affine_bounds,
    dominance_margins,
    linearize_stable_neurons,
    propagate_bounds,
)

FAMILY_KINDS = ("ReluIdeal", "MaxDBox", "OneHotRelu", "Leaky", "Clipped", "IdealDualSubgradient")
MODES = ("bigm", "extended", "bigm_with_cuts")


class FormulationError(ModelError):
    """A builder was asked for a block it cannot produce."""


# ---------------------------------------------------------------------------
# model containers


@dataclass(frozen=True)
class VarRef:
    index: int
    name: str
    kind: str  # "C" or "B"
    lo: float
    hi: float

    def __post_init__(self):
        if self.kind not in ("C", "B"):
            raise FormulationError(f"variable {self.name} has unsupported kind {self.kind!r}")
        if self.kind == "B" and (self.lo < 0 or self.hi > 1):
            raise FormulationError(f"binary {self.name} must have bounds inside [0,1]")


@dataclass(frozen=True)
class LinearConstraint:
    """``sum coef * x[idx]  (sense)  rhs`` with unique, nonzero entries."""

    coefs: tuple
    sense: str
    rhs: float
    name: str = ""

    @classmethod
    def make(cls, terms, sense, rhs, name=""):
        acc = {}
        for idx, c in terms:
            acc[int(idx)] = acc.get(int(idx), 0.0) + float(c)
        coefs = tuple((i, c) for i, c in sorted(acc.items()) if c != 0.0)
        if not all(np.isfinite(c) for _, c in coefs) or not np.isfinite(rhs):
            raise FormulationError(f"constraint {name!r} has non-finite data")
        if sense not in ("<=", "=", ">="):
            raise FormulationError(f"bad sense {sense!r}")
        return cls(coefs, sense, float(rhs), name)

    def lhs(self, x):
        return float(sum(c * x[i] for i, c in self.coefs))

    def violation(self, x):
        v = self.lhs(x) - self.rhs
        if self.sense == "<=":
            return v
        if self.sense == ">=":
            return -v
        return abs(v)


class MipModel:
    """Variables, rows, objective and lazily separated cut families."""

    def __init__(self):
        self.vars: list[VarRef] = []
        self.rows: list[LinearConstraint] = []
        self.objective: dict = {}
        self.objective_const = 0.0
        self.objective_sense = "max"
        self.families: list = []
        self.neurons: dict = {}
        # optional: input point -> {(layer, index): piece}, from a forward pass
        self.pattern_hook = None
        self._names: dict = {}

    # construction
    def add_var(self, name, kind="C", lo=-np.inf, hi=np.inf):
        if name in self._names:
            raise FormulationError(f"duplicate variable name {name}")
        v = VarRef(len(self.vars), name, kind, float(lo), float(hi))
        self.vars.append(v)
        self._names[name] = v.index
        return v.index

    def add_row(self, terms, sense, rhs, name=""):
        row = LinearConstraint.make(terms, sense, rhs, name or f"c{len(self.rows)}")
        for i, _ in row.coefs:
            if not 0 <= i < len(self.vars):
                raise FormulationError(f"row {row.name} references unknown variable {i}")
        self.rows.append(row)
        return row

    def set_objective(self, terms, sense="max", const=0.0):
        acc = {}
        for i, c in terms:
            acc[int(i)] = acc.get(int(i), 0.0) + float(c)
        self.objective = {i: c for i, c in sorted(acc.items()) if c != 0.0}
        self.objective_sense = sense
        self.objective_const = float(const)

    def set_bounds(self, idx, lo=None, hi=None):
        v = self.vars[idx]
        self.vars[idx] = VarRef(v.index, v.name, v.kind,
                                v.lo if lo is None else float(lo),
                                v.hi if hi is None else float(hi))

    # queries
    def var_index(self, name):
        return self._names[name]

    @property
    def num_vars(self):
        return len(self.vars)

    def binaries(self):
        return np.array([v.index for v in self.vars if v.kind == "B"], dtype=np.int64)

    def bounds(self):
        return (np.array([v.lo for v in self.vars]), np.array([v.hi for v in self.vars]))

    def objective_vector(self):
        c = np.zeros(self.num_vars)
        for i, v in self.objective.items():
            c[i] = v
        return c

    def dense_rows(self, extra=()):
        rows = list(self.rows) + list(extra)
        A = np.zeros((len(rows), self.num_vars))
        for r, row in enumerate(rows):
            for i, c in row.coefs:
                A[r, i] = c
        return A, [row.sense for row in rows], np.array([row.rhs for row in rows])

    def objective_value(self, x):
        return float(self.objective_vector() @ x) + self.objective_const

    def max_violation(self, x, extra=()):
        lo, hi = self.bounds()
        worst = float(max(np.max(lo - x, initial=0.0), np.max(x - hi, initial=0.0)))
        for row in list(self.rows) + list(extra):
            worst = max(worst, row.violation(x))
        return worst

    def summary(self):
        nb = len(self.binaries())
        return {"variables": self.num_vars, "continuous": self.num_vars - nb,
                "binaries": nb, "rows": len(self.rows), "families": len(self.families)}


# ---------------------------------------------------------------------------
# neuron description


@dataclass
class Block:
    """One simplex of the lambda view of a neuron input domain.

    ``idx`` are the input coordinates; ``vert`` is d x p, the value of each
    piece's linear part at each vertex. For an interval coordinate the two
    vertices are (L, U) and lambda = ((U-x)/(U-L), (x-L)/(U-L)); for a simplex
    block lambda is x itself.
    """

    kind: str  # "interval" | "simplex"
    idx: np.ndarray
    vert: np.ndarray
    lo: float = 0.0
    hi: float = 1.0

    @property
    def p(self):
        return self.vert.shape[1]

    def lam(self, x):
        if self.kind == "simplex":
            return np.asarray(x)[self.idx]
        t = (x[self.idx[0]] - self.lo) / (self.hi - self.lo)
        return np.array([1.0 - t, t])

    def to_x(self, coef):
        """Map lambda coefficients to (x indices, x coefficients, constant)."""
        coef = np.asarray(coef, dtype=float)
        if self.kind == "simplex":
            return self.idx, coef, 0.0
        L, U = self.lo, self.hi
        a = (coef[1] - coef[0]) / (U - L)
        const = (coef[0] * U - coef[1] * L) / (U - L)
        return self.idx, np.array([a]), const


class NeuronContext:
    """Pieces, domain and cached bounds for one nonlinear neuron.

    ``W``/``b`` hold the pieces indexed by piece indicator: for ReLU these
    are (f, 0), for leaky (f, alpha f), for max the d pieces and for clipped
    (0, f, C). ``f`` is the underlying affine map of single-input units.
    """

    def __init__(self, kind, W, b, dom: Domain, alpha=None, cap=None, f=None, coord=None):
        self.kind = kind
        self.W = np.atleast_2d(np.asarray(W, dtype=float))
        self.b = np.asarray(b, dtype=float).reshape(-1)
        self.dom = dom
        self.alpha = alpha
        self.cap = cap
        self.f = f
        self.coord = coord
        if self.W.shape[1] != dom.dim:
            raise FormulationError("piece dimension does not match domain")
        if kind == "max" and self.d < 2:
            raise FormulationError("max neuron needs d >= 2")

    @classmethod
    def from_neuron(cls, nrn, dom: Domain, coord=None):
        kind = nrn.kind
        if kind == "linear":
            raise FormulationError("linear neurons have no context")
        if kind == "max":
            return cls("max", nrn.W, nrn.b, dom, coord=coord)
        f = nrn.pieces[0]
        return cls.single(kind, f, dom, alpha=nrn.activation.alpha, cap=nrn.activation.cap, coord=coord)

    @classmethod
    def single(cls, kind, f: AffineFunc, dom: Domain, alpha=None, cap=None, coord=None):
        w, b = f.weights, f.bias
        z = np.zeros_like(w)
        if kind == "relu":
            return cls(kind, [w, z], [b, 0.0], dom, f=f, coord=coord)
        if kind == "leaky":
            return cls(kind, [w, alpha * w], [b, alpha * b], dom, alpha=alpha, f=f, coord=coord)
        if kind == "clipped":
            return cls(kind, [z, w, z], [0.0, b, cap], dom, cap=cap, f=f, coord=coord)
        raise FormulationError(f"no single-affine context for {kind}")

    @classmethod
    def relu(cls, w, b, lo, hi):
        """Convenience: ReLU of w.x + b over the box [lo, hi]."""
        return cls.single("relu", AffineFunc(w, b), Domain.box(lo, hi))

    @classmethod
    def max_of(cls, W, b, lo, hi):
        return cls("max", W, b, Domain.box(lo, hi))

    # basic views
    @property
    def d(self):
        return self.W.shape[0]

    @property
    def eta(self):
        return self.W.shape[1]

    @property
    def lo(self):
        return self.dom.lo

    @property
    def hi(self):
        return self.dom.hi

    @property
    def is_box(self):
        return self.dom.is_box

    def box(self):
        return [Interval(float(a), float(c)) for a, c in zip(self.lo, self.hi)]

    def value(self, x):
        """True activation output at input x."""
        if self.kind == "clipped":
            return float(np.clip(self.f(x), 0.0, self.cap))
        return float(np.max(self.W @ x + self.b))

    def pattern(self, x):
        """Index of the piece realised at x (smallest on ties)."""
        if self.kind == "clipped":
            v = self.f(x)
            return 0 if v <= 0 else (2 if v >= self.cap else 1)
        return int(np.argmax(self.W @ x + self.b))

    # bounds
    @cached_property
    def f_bounds(self):
        """(M-, M+) of the underlying single affine map over the domain."""
        hi, _ = self.dom.maximize(self.f.weights)
        lo, _ = self.dom.minimize(self.f.weights)
        return lo + self.f.bias, hi + self.f.bias

    @cached_property
    def box_f_bounds(self):
        iv = affine_bounds(self.f, self.box())
        return iv.lo, iv.hi

    @cached_property
    def lbr(self):
        w = self.f.weights if self.f is not None else self.W[0]
        return np.where(w >= 0, self.lo, self.hi)

    @cached_property
    def ubr(self):
        w = self.f.weights if self.f is not None else self.W[0]
        return np.where(w >= 0, self.hi, self.lo)

    @cached_property
    def order(self):
        """eta x d: piece indices sorted by weight per coordinate (stable)."""
        return np.ascontiguousarray(np.argsort(self.W, axis=0, kind="stable").T.astype(np.int64))

    @cached_property
    def blocks(self):
        """Lambda view of the domain; fixed interval coordinates are folded
        into ``const`` (one constant per piece)."""
        blocks = []
        const = np.zeros(self.d)
        for g in self.dom.groups:
            blocks.append(Block("simplex", g, self.W[:, g]))
        for i in self.dom.interval_idx:
            L, U = self.lo[i], self.hi[i]
            if U - L <= 1e-12:
                const += self.W[:, i] * L
                continue
            vert = np.column_stack([self.W[:, i] * L, self.W[:, i] * U])
            blocks.append(Block("interval", np.array([i]), vert, L, U))
        self._lam_const = const
        return blocks

    @property
    def lam_const(self):
        self.blocks
        return self._lam_const

    @cached_property
    def onehot_sorted(self):
        """Per block: (sort permutation, sorted wtilde) for the d=2 family."""
        out = []
        for blk in self.blocks:
            wt = blk.vert[0] - blk.vert[1]
            perm = np.argsort(wt, kind="stable")
            out.append((perm, wt[perm]))
        return out

    def regions(self):
        """Per piece, rows ``a.x + c <= 0`` describing where it is realised."""
        out = []
        if self.kind == "clipped":
            w, b, C = self.f.weights, self.f.bias, self.cap
            out.append([(w, b)])
            out.append([(-w, -b), (w, b - C)])
            out.append([(-w, C - b)])
            return out
        for k in range(self.d):
            out.append([(self.W[l] - self.W[k], self.b[l] - self.b[k]) for l in range(self.d) if l != k])
        return out


@dataclass
class NeuronBinding:
    """Model columns of a neuron: inputs, output, binaries and z mapping."""

    x: np.ndarray
    y: int
    z: np.ndarray
    Z: np.ndarray
    z0: np.ndarray

    @classmethod
    def single_z(cls, x, y, z):
        return cls(np.asarray(x), y, np.array([z]), np.array([[1.0], [-1.0]]), np.array([0.0, 1.0]))

    @classmethod
    def onehot_z(cls, x, y, zs):
        zs = np.asarray(zs)
        return cls(np.asarray(x), y, zs, np.eye(len(zs)), np.zeros(len(zs)))

    def indicators(self, sol):
        return self.Z @ np.asarray(sol)[self.z] + self.z0

    def row_terms(self, cx, cy, cz):
        """Model terms and constant for the local form cx.x + cy.y + cz.zind."""
        terms = [(int(i), float(c)) for i, c in zip(self.x, cx) if c != 0.0]
        if cy:
            terms.append((int(self.y), float(cy)))
        cz = np.asarray(cz, dtype=float)
        zc = cz @ self.Z
        terms += [(int(i), float(c)) for i, c in zip(self.z, zc) if c != 0.0]
        return terms, float(cz @ self.z0)

    def binary_values(self, k):
        """Values of the model binaries that select piece ``k``."""
        target = np.zeros(self.Z.shape[0])
        target[k] = 1.0
        v, *_ = np.linalg.lstsq(self.Z, target - self.z0, rcond=None)
        return np.round(v)

    def add_local(self, model, cx, cy, cz, sense, rhs, name):
        terms, const = self.row_terms(cx, cy, cz)
        return model.add_row(terms, sense, rhs - const, name)


@dataclass
class CutFamily:
    kind: str
    ctx: NeuronContext
    bind: NeuronBinding
    name: str = ""
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise FormulationError(f"unknown cut family {self.kind}")
        if len(self.bind.x) != self.ctx.eta or self.bind.Z.shape[0] != self.ctx.d:
            raise FormulationError("family binding does not match its context")

    def query(self, sol):
        from pwlv.cuts import QueryPoint

        sol = np.asarray(sol)
        return QueryPoint(sol[self.bind.x], float(sol[self.bind.y]), self.bind.indicators(sol))

    def separate(self, q, tol=None):
        from pwlv import cuts

        return cuts.separate_family(self, q, tol)


@dataclass
class NeuronEntry:
    ctx: NeuronContext
    bind: NeuronBinding
    layer: int
    index: int


# ---------------------------------------------------------------------------
# per-neuron blocks


def _require_box(ctx, what):
    if not ctx.is_box:
        raise FormulationError(f"{what} needs a box domain; simplex blocks present (use the one-hot path)")


def relu_bigM(ctx: NeuronContext, bind: NeuronBinding, model: MipModel, tag="n"):
    """y >= f, y <= f - M-(1-z), y <= M+ z, y >= 0."""
    if ctx.kind != "relu":
        raise FormulationError("relu_bigM needs a ReLU context")
    _require_box(ctx, "relu_bigM")
    w, b = ctx.f.weights, ctx.f.bias
    Mm, Mp = ctx.f_bounds
    zero = np.zeros(ctx.d)
    return [
        bind.add_local(model, -w, 1.0, zero, ">=", b, f"{tag}_lo"),
        bind.add_local(model, -w, 1.0, [0.0, Mm], "<=", b, f"{tag}_up"),
        bind.add_local(model, np.zeros_like(w), 1.0, [-Mp, 0.0], "<=", 0.0, f"{tag}_on"),
        bind.add_local(model, np.zeros_like(w), 1.0, zero, ">=", 0.0, f"{tag}_nn"),
    ]


def relu_extended(ctx: NeuronContext, bind: NeuronBinding, model: MipModel, tag="n"):
    """Multiple-choice ReLU block with the inactive copy x0 and x1 = x - x0."""
    if ctx.kind != "relu":
        raise FormulationError("relu_extended needs a ReLU context")
    _require_box(ctx, "relu_extended")
    w, b = ctx.f.weights, ctx.f.bias
    L, U = ctx.lo, ctx.hi
    x0 = [model.add_var(f"{tag}_v_{t}", "C", min(L[t], 0.0), max(U[t], 0.0)) for t in range(ctx.eta)]
    z = int(bind.z[0])
    y = int(bind.y)
    rows = []
    for t in range(ctx.eta):
        xt = int(bind.x[t])
        rows.append(model.add_row([(x0[t], 1.0), (z, L[t])], ">=", L[t], f"{tag}_x0lo_{t}"))
        rows.append(model.add_row([(x0[t], 1.0), (z, U[t])], "<=", U[t], f"{tag}_x0up_{t}"))
        rows.append(model.add_row([(xt, 1.0), (x0[t], -1.0), (z, -L[t])], ">=", 0.0, f"{tag}_x1lo_{t}"))
        rows.append(model.add_row([(xt, 1.0), (x0[t], -1.0), (z, -U[t])], "<=", 0.0, f"{tag}_x1up_{t}"))
    terms = [(y, 1.0), (z, -b)] + [(int(bind.x[t]), -w[t]) for t in range(ctx.eta)] + [(x0[t], w[t]) for t in range(ctx.eta)]
    rows.append(model.add_row(terms, "=", 0.0, f"{tag}_out"))
    rows.append(model.add_row([(x0[t], w[t]) for t in range(ctx.eta)] + [(z, -b)], "<=", -b, f"{tag}_off"))
    rows.append(model.add_row([(int(bind.x[t]), w[t]) for t in range(ctx.eta)]
                              + [(x0[t], -w[t]) for t in range(ctx.eta)] + [(z, b)], ">=", 0.0, f"{tag}_on"))
    return rows


def cayley_extended(ctx: NeuronContext, bind: NeuronBinding, model: MipModel, tag="n"):
    """Extended formulation with one scaled domain copy per piece.

    x = sum_k x^k, y = sum_k (g^k . x^k + c^k z_k) and x^k in z_k * D_k,
    where D_k is the domain cut down by the rows of piece k.
    """
    eta, d = ctx.eta, ctx.d
    L, U = ctx.lo, ctx.hi
    copies = [[model.add_var(f"{tag}_v_{k}_{t}", "C", min(L[t], 0.0), max(U[t], 0.0)) for t in range(eta)]
              for k in range(d)]
    rows = []

    def zterms(k, coef):
        e = np.zeros(d)
        e[k] = coef
        terms, const = bind.row_terms(np.zeros(eta), 0.0, e)
        return terms, const

    for t in range(eta):
        terms = [(int(bind.x[t]), 1.0)] + [(copies[k][t], -1.0) for k in range(d)]
        rows.append(model.add_row(terms, "=", 0.0, f"{tag}_sum_{t}"))
    out = [(int(bind.y), 1.0)]
    const = 0.0
    for k in range(d):
        out += [(copies[k][t], -ctx.W[k, t]) for t in range(eta)]
        zt, zc = zterms(k, -ctx.b[k])
        out += zt
        const += zc
    rows.append(model.add_row(out, "=", -const, f"{tag}_out"))
    regions = ctx.regions()
    for k in range(d):
        for t in range(eta):
            zt, zc = zterms(k, -L[t])
            rows.append(model.add_row([(copies[k][t], 1.0)] + zt, ">=", -zc, f"{tag}_lo_{k}_{t}"))
            zt, zc = zterms(k, -U[t])
            rows.append(model.add_row([(copies[k][t], 1.0)] + zt, "<=", -zc, f"{tag}_up_{k}_{t}"))
        for g_i, g in enumerate(ctx.dom.groups):
            zt, zc = zterms(k, -1.0)
            rows.append(model.add_row([(copies[k][t], 1.0) for t in g] + zt, "=", -zc, f"{tag}_simp_{k}_{g_i}"))
        for r_i, (a, c) in enumerate(regions[k]):
            zt, zc = zterms(k, c)
            rows.append(model.add_row([(copies[k][t], a[t]) for t in range(eta)] + zt, "<=", -zc,
                                      f"{tag}_reg_{k}_{r_i}"))
    if bind.Z.shape[1] == d and d > 1:
        rows.append(model.add_row([(int(zi), 1.0) for zi in bind.z], "=", 1.0, f"{tag}_choice"))
    return rows


def box_coefficients(ctx: NeuronContext, coeff_mode="paper"):
    """d x d matrix N of upper-row coefficients over the enclosing box.

    ``paper`` (the tight form): N[l,k] = sum_i max{(w^k_i - w^l_i) L_i, (w^k_i - w^l_i) U_i}.
    ``tjeng`` (the decoupled form): N[l,k] = max_{t != l}(M+(w^t.x) + b^t) - M-(w^l.x) - b^k
    for k != l, zero on the diagonal. The bias of the maximizing piece sits
    inside the max, which keeps the row valid for any biases.
    """
    W, b = ctx.W, ctx.b
    L, U = ctx.lo, ctx.hi
    d = ctx.d
    N = np.zeros((d, d))
    if coeff_mode == "paper":
        for l in range(d):
            diff = W - W[l]
            N[l] = np.maximum(diff * L, diff * U).sum(axis=1)
        np.fill_diagonal(N, 0.0)
        return N
    if coeff_mode == "tjeng":
        Mp = np.maximum(W * L, W * U).sum(axis=1)
        Mm = np.minimum(W * L, W * U).sum(axis=1)
        for l in range(d):
            top = max(Mp[t] + b[t] for t in range(d) if t != l)
            for k in range(d):
                if k != l:
                    N[l, k] = top - Mm[l] - b[k]
        return N
    raise FormulationError(f"unknown coefficient mode {coeff_mode!r}")


def max_d_bigM_box(ctx: NeuronContext, bind: NeuronBinding, model: MipModel, coeff_mode="paper", tag="n"):
    """Upper rows y <= w^l.x + sum_k (N[l,k] + b^k) z_k and lower rows y >= f^k.

    Works for any context whose pieces are a max (ReLU, leaky, max-of-d). A
    context with simplex blocks is relaxed to its enclosing box.
    """
    if ctx.kind == "clipped":
        raise FormulationError("clipped units are not a max of affine pieces")
    N = box_coefficients(ctx, coeff_mode)
    rows = []
    for l in range(ctx.d):
        rows.append(bind.add_local(model, -ctx.W[l], 1.0, -(N[l] + ctx.b), "<=", 0.0, f"{tag}_up_{l}"))
    for k in range(ctx.d):
        rows.append(bind.add_local(model, -ctx.W[k], 1.0, np.zeros(ctx.d), ">=", ctx.b[k], f"{tag}_lo_{k}"))
    if bind.Z.shape[1] == ctx.d:
        rows.append(model.add_row([(int(zi), 1.0) for zi in bind.z], "=", 1.0, f"{tag}_choice"))
    return rows


@dataclass
class Polytope:
    """{x : A_ub x <= b_ub, A_eq x = b_eq, lo <= x <= hi}."""

    A_ub: np.ndarray
    b_ub: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_domain(cls, dom: Domain):
        A, b, lo, hi = dom.polytope()
        return cls(np.zeros((0, dom.dim)), np.zeros(0), A, b, lo, hi)

    @property
    def dim(self):
        return len(self.lo)

    def optimize(self, c, extra_A=None, extra_b=None, maximize=True):
        """LP over the polytope with extra ``<=`` rows."""
        from pwlv.lp import simplex

        A_ub, b_ub = self.A_ub, self.b_ub
        if extra_A is not None and len(extra_A):
            A_ub = np.vstack([A_ub, extra_A])
            b_ub = np.concatenate([b_ub, extra_b])
        A = np.vstack([A_ub, self.A_eq])
        senses = ["<="] * len(b_ub) + ["="] * len(self.b_eq)
        return simplex(c, A, senses, np.concatenate([b_ub, self.b_eq]), self.lo, self.hi, maximize=maximize)


def region_rows(ctx: NeuronContext, k):
    """Dominance rows of piece k as (A, b) with A x <= b."""
    rows = ctx.regions()[k]
    if not rows:
        return np.zeros((0, ctx.eta)), np.zeros(0)
    return np.array([a for a, _ in rows]), np.array([-c for _, c in rows])


def polytope_coefficients(ctx: NeuronContext, poly: Polytope | None = None):
    """LP coefficients over each D_k, pruning pieces whose region is empty.

    Returns ``(kept, Nplus, Nminus)`` with matrices indexed by kept pieces.
    """
    from pwlv.lp import LpStatus

    if ctx.kind == "clipped":
        raise FormulationError("clipped units are not a max of affine pieces")
    poly = poly or Polytope.from_domain(ctx.dom)
    if not np.all(np.isfinite(poly.lo)) or not np.all(np.isfinite(poly.hi)):
        raise FormulationError("polytope must be bounded (finite variable bounds)")
    d = ctx.d
    Np = np.zeros((d, d))
    Nm = np.zeros((d, d))
    alive = np.ones(d, dtype=bool)
    for k in range(d):
        A, b = region_rows(ctx, k)
        for l in range(d):
            if l == k or not alive[k]:
                continue
            c = ctx.W[k] - ctx.W[l]
            top = poly.optimize(c, A, b, maximize=True)
            if top.status is LpStatus.INFEASIBLE:
                alive[k] = False
                break
            bot = poly.optimize(c, A, b, maximize=False)
            Np[l, k] = top.objective
            Nm[l, k] = bot.objective
        if d == 1:
            break
    kept = np.flatnonzero(alive)
    return kept, Np[np.ix_(kept, kept)], Nm[np.ix_(kept, kept)]


def max_d_bigM_polytope(ctx: NeuronContext, bind: NeuronBinding, model: MipModel, poly=None, tag="n"):
    """Upper and lower rows with LP coefficients; pruned pieces get z_k = 0.

    Call :func:`prune_context` first to drop pieces entirely; here any
    pruned piece keeps its binary but it is fixed to zero.
    """
    kept, Np, Nm = polytope_coefficients(ctx, poly)
    rows = []
    for a, l in enumerate(kept):
        cz = np.zeros(ctx.d)
        cz[kept] = -(Np[a] + ctx.b[kept])
        rows.append(bind.add_local(model, -ctx.W[l], 1.0, cz, "<=", 0.0, f"{tag}_up_{l}"))
        cz = np.zeros(ctx.d)
        cz[kept] = -(Nm[a] + ctx.b[kept])
        rows.append(bind.add_local(model, -ctx.W[l], 1.0, cz, ">=", 0.0, f"{tag}_lo_{l}"))
    if bind.Z.shape[1] == ctx.d:
        rows.append(model.add_row([(int(zi), 1.0) for zi in bind.z], "=", 1.0, f"{tag}_choice"))
        for k in range(ctx.d):
            if k not in kept:
                model.set_bounds(int(bind.z[k]), hi=0.0)
    return rows


def prune_context(ctx: NeuronContext):
    """Context without pieces whose region D_k is empty (max neurons)."""
    if ctx.kind != "max":
        return ctx
    marg = dominance_margins([AffineFunc(w, c) for w, c in zip(ctx.W, ctx.b)], ctx.dom)
    keep = [k for k, m in enumerate(marg) if m >= -1e-9]
    if len(keep) == ctx.d:
        return ctx
    if len(keep) < 2:
        raise FormulationError("pruning leaves a single piece; linearize the neuron instead")
    return NeuronContext("max", ctx.W[keep], ctx.b[keep], ctx.dom, coord=ctx.coord)


def leaky_bigM(ctx: NeuronContext, bind: NeuronBinding, model: MipModel, tag="n"):
    """y >= f, y >= a f, y <= f - (1-a) M- (1-z), y <= a f + (1-a) M+ z."""
    if ctx.kind != "leaky":
        raise FormulationError("leaky_bigM needs a leaky context")
    a = ctx.alpha
    if not (0.0 < a < 1.0):
        raise FormulationError(f"alpha must lie in (0,1), got {a}")
    w, b = ctx.f.weights, ctx.f.bias
    Mm, Mp = ctx.box_f_bounds
    zero = np.zeros(2)
    return [
        bind.add_local(model, -w, 1.0, zero, ">=", b, f"{tag}_lo"),
        bind.add_local(model, -a * w, 1.0, zero, ">=", a * b, f"{tag}_lo_a"),
        bind.add_local(model, -w, 1.0, [0.0, (1 - a) * Mm], "<=", b, f"{tag}_up"),
        bind.add_local(model, -a * w, 1.0, [-(1 - a) * Mp, 0.0], "<=", a * b, f"{tag}_up_a"),
    ]


def clipped_bigM(ctx: NeuronContext, bind: NeuronBinding, model: MipModel, tag="n"):
    """C z3 <= y <= C(z2+z3), y <= f - M- z1, y >= f + (C - M+) z3, sum z = 1."""
    if ctx.kind != "clipped":
        raise FormulationError("clipped_bigM needs a clipped context")
    C = ctx.cap
    if not C > 0:
        raise FormulationError(f"cap must be positive, got {C}")
    w, b = ctx.f.weights, ctx.f.bias
    Mm, Mp = ctx.box_f_bounds
    zx = np.zeros_like(w)
    rows = [
        bind.add_local(model, zx, 1.0, [0.0, 0.0, -C], ">=", 0.0, f"{tag}_cap_lo"),
        bind.add_local(model, zx, 1.0, [0.0, -C, -C], "<=", 0.0, f"{tag}_cap_up"),
        bind.add_local(model, -w, 1.0, [Mm, 0.0, 0.0], "<=", b, f"{tag}_up"),
        bind.add_local(model, -w, 1.0, [0.0, 0.0, -(C - Mp)], ">=", b, f"{tag}_lo"),
    ]
    rows.append(model.add_row([(int(zi), 1.0) for zi in bind.z], "=", 1.0, f"{tag}_choice"))
    return rows


def onehot_cut_coefficients(ctx: NeuronContext, J):
    """Local (cx, cz, const) of the d=2 simplex family member for mapping J.

    ``J[t]`` is a position in block t's ascending wtilde order. The member is
    y <= sum_t (wt_J z1 + sum_{j>J} (wt_j - wt_J) lam_j + sum_j V2_j lam_j)
         + b1 z1 + b2 z2 (+ fixed-coordinate constants per piece).
    Returned as y - cx.x - cz.zind <= const.
    """
    if ctx.d != 2:
        raise FormulationError("the simplex family needs exactly two pieces")
    cx = np.zeros(ctx.eta)
    cz = np.array([ctx.b[0] + ctx.lam_const[0], ctx.b[1] + ctx.lam_const[1]])
    const = 0.0
    for blk, (perm, wt), j in zip(ctx.blocks, ctx.onehot_sorted, J):
        lam = blk.vert[1].astype(float).copy()
        pos = np.empty_like(perm)
        pos[perm] = np.arange(len(perm))
        above = pos > j
        lam[above] += wt[pos[above]] - wt[j]
        idx, xc, c0 = blk.to_x(lam)
        cx[idx] += xc
        # the lambda constant multiplies sum(lam)=1; write it as (z1 + z2)
        cz += c0
        cz[0] += wt[j]
    return cx, cz, const


def onehot_relu_block(ctx: NeuronContext, bind: NeuronBinding, model: MipModel, tag="n"):
    """Lower rows y >= f^k plus the two seeded members of the simplex family.

    The seeded members use J = first and J = last sorted position in every
    block; they force y = f^1 at z1 = 1 and y = f^2 at z1 = 0. Returns the
    rows and an unregistered OneHotRelu family.
    """
    if ctx.d != 2 or ctx.kind not in ("relu", "leaky", "max"):
        raise FormulationError("one-hot block needs a two-piece max neuron")
    if ctx.is_box:
        raise FormulationError("one-hot block needs simplex blocks in the domain")
    rows = []
    for k in range(2):
        rows.append(bind.add_local(model, -ctx.W[k], 1.0, np.zeros(2), ">=", ctx.b[k], f"{tag}_lo_{k}"))
    first = [0] * len(ctx.blocks)
    last = [blk.p - 1 for blk in ctx.blocks]
    for name, J in (("min", first), ("max", last)):
        cx, cz, const = onehot_cut_coefficients(ctx, J)
        rows.append(bind.add_local(model, -cx, 1.0, -cz, "<=", const, f"{tag}_seed_{name}"))
    if bind.Z.shape[1] == 2:
        rows.append(model.add_row([(int(zi), 1.0) for zi in bind.z], "=", 1.0, f"{tag}_choice"))
    return rows, CutFamily("OneHotRelu", ctx, bind, tag)


# ---------------------------------------------------------------------------
# single-neuron models


def new_binding(model: MipModel, ctx: NeuronContext, xvars, tag, ylo=-np.inf, yhi=np.inf):
    y = model.add_var(f"y_{tag}", "C", ylo, yhi)
    if ctx.kind in ("relu", "leaky"):
        z = model.add_var(f"z_{tag}_0", "B", 0.0, 1.0)
        return NeuronBinding.single_z(xvars, y, z)
    zs = [model.add_var(f"z_{tag}_{k}", "B", 0.0, 1.0) for k in range(ctx.d)]
    return NeuronBinding.onehot_z(xvars, y, zs)


def add_neuron_block(model, ctx, bind, mode, coeff_mode="paper", tag="n", polytope=False,
                     register=True, subgradient=False):
    """Add the block for ``mode`` and register cut families if requested."""
    fam = None
    if mode == "extended":
        if ctx.kind == "relu" and ctx.is_box:
            relu_extended(ctx, bind, model, tag)
        else:
            cayley_extended(ctx, bind, model, tag)
        return None
    if ctx.kind == "clipped":
        clipped_bigM(ctx, bind, model, tag)
        fam = CutFamily("Clipped", ctx, bind, tag)
    elif ctx.kind == "leaky":
        leaky_bigM(ctx, bind, model, tag)
        fam = CutFamily("Leaky", ctx, bind, tag)
    elif ctx.d == 2 and not ctx.is_box:
        _, fam = onehot_relu_block(ctx, bind, model, tag)
    elif ctx.kind == "relu" and coeff_mode == "paper" and not polytope:
        relu_bigM(ctx, bind, model, tag)
        fam = CutFamily("ReluIdeal", ctx, bind, tag)
    else:
        if polytope:
            max_d_bigM_polytope(ctx, bind, model, tag=tag)
        else:
            max_d_bigM_box(ctx, bind, model, coeff_mode, tag)
            if ctx.kind == "relu":
                model.add_row([(int(bind.y), 1.0)], ">=", 0.0, f"{tag}_nn")
        fam = CutFamily("ReluIdeal" if ctx.kind == "relu" and ctx.is_box else "MaxDBox", ctx, bind, tag)
    if subgradient and ctx.kind != "clipped":
        fam = CutFamily("IdealDualSubgradient", ctx, bind, tag)
    if mode == "bigm_with_cuts" and register and fam is not None:
        model.families.append(fam)
    return fam


def neuron_model(ctx: NeuronContext, mode="bigm", coeff_mode="paper", objective=None, polytope=False,
                 subgradient=False):
    """A model over one neuron: inputs x_0_j, output y, binaries.

    ``objective`` is ``(cx, cy)`` maximized; default maximizes y.
    """
    model = MipModel()
    xv = [model.add_var(f"x_0_{j}", "C", ctx.lo[j], ctx.hi[j]) for j in range(ctx.eta)]
    for g_i, g in enumerate(ctx.dom.groups):
        model.add_row([(xv[t], 1.0) for t in g], "=", 1.0, f"simplex_0_{g_i}")
    bind = new_binding(model, ctx, np.array(xv), "1_0")
    add_neuron_block(model, ctx, bind, mode, coeff_mode, tag="n_1_0", polytope=polytope, subgradient=subgradient)
    model.neurons[(1, 0)] = NeuronEntry(ctx, bind, 1, 0)
    if objective is None:
        model.set_objective([(bind.y, 1.0)])
    else:
        cx, cy = objective
        model.set_objective([(xv[j], cx[j]) for j in range(ctx.eta)] + [(bind.y, cy)])
    return model, bind


# ---------------------------------------------------------------------------
# network assembly


@dataclass
class NetworkModel:
    model: MipModel
    network: Network
    domain: Domain
    bounds: object
    outputs: list
    inputs: list


def assemble_network_formulation(net: Network, dom: Domain, inst: VerificationInstance | None = None,
                                 mode="bigm", coeff_mode="paper", objective=None, preprocess=True,
                                 polytope=False, lp_tighten=False) -> MipModel:
    """MIP for the whole network, one block per nonlinear neuron.

    Variables are created layer-major, neuron-minor: inputs ``x_0_j``, then
    per layer i (1-based) ``y_i_j`` followed by that neuron's binaries
    ``z_i_j_k`` and auxiliaries. The objective maximizes target minus source
    logit for ``inst``, or ``objective`` (a vector over the outputs).
    """
    return build_network(net, dom, inst, mode, coeff_mode, objective, preprocess, polytope, lp_tighten).model


def build_network(net, dom, inst=None, mode="bigm", coeff_mode="paper", objective=None, preprocess=True,
                  polytope=False, lp_tighten=False) -> NetworkModel:
    if mode not in MODES:
        raise FormulationError(f"unknown mode {mode!r}; expected one of {MODES}")
    if inst is not None:
        inst.check(net, dom)
        dom = inst.effective_domain(dom)
    bounds = propagate_bounds(net, dom, lp_tighten=lp_tighten)
    if preprocess:
        net = linearize_stable_neurons(net, bounds)
        bounds = propagate_bounds(net, dom, lp_tighten=lp_tighten)
    model = MipModel()
    xv = [model.add_var(f"x_0_{j}", "C", dom.lo[j], dom.hi[j]) for j in range(dom.dim)]
    for g_i, g in enumerate(dom.groups):
        model.add_row([(xv[t], 1.0) for t in g], "=", 1.0, f"simplex_0_{g_i}")
    prev = np.array(xv)
    prev_dom = dom
    for i, layer in enumerate(net.layers, start=1):
        cur = []
        for j, nrn in enumerate(layer.neurons):
            post = bounds[i - 1, j].post
            tag = f"{i}_{j}"
            if nrn.kind == "linear":
                y = model.add_var(f"y_{tag}", "C", post.lo, post.hi)
                f = nrn.pieces[0]
                model.add_row([(y, 1.0)] + [(int(prev[t]), -f.weights[t]) for t in range(len(prev))],
                              "=", f.bias, f"n_{tag}_lin")
                cur.append(y)
                continue
            ctx = NeuronContext.from_neuron(nrn, prev_dom, coord=(i, j))
            if polytope and ctx.kind == "max":
                ctx = prune_context(ctx)
            bind = new_binding(model, ctx, prev, tag, post.lo, post.hi)
            add_neuron_block(model, ctx, bind, mode, coeff_mode, tag=f"n_{tag}", polytope=polytope)
            model.neurons[(i, j)] = NeuronEntry(ctx, bind, i, j)
            cur.append(bind.y)
        prev = np.array(cur)
        prev_dom = Domain([bounds[i - 1, j].post for j in range(len(cur))])
    if inst is not None:
        c = inst.objective(net)
    else:
        c = np.zeros(net.output_dim) if objective is None else np.asarray(objective, dtype=float)
    model.set_objective([(int(prev[t]), c[t]) for t in range(len(prev))])
    model.pattern_hook = _forward_patterns(net, model, xv)
    return NetworkModel(model, net, dom, bounds, list(prev), xv)


def _forward_patterns(net, model, xv):
    entries = dict(model.neurons)

    def hook(sol):
        acts = net.forward_all(np.asarray(sol)[xv])
        return {key: e.ctx.pattern(acts[key[0] - 1]) for key, e in entries.items()}

    return hook


def tighten_preactivation(net, dom, table, layer, piece: AffineFunc, iv: Interval) -> Interval:
    """LP bound on one pre-activation over the big-M relaxation of the layers
    before ``layer`` (0-based), using the bounds already in ``table``."""
    from pwlv.lp import LpStatus, solve_lp
    from pwlv.model import BoundsTable

    sub = Network(list(net.layers[:layer]), net.input_dim)
    sub_table = BoundsTable(table.layers[:layer])
    sub = linearize_stable_neurons(sub, sub_table)
    model = MipModel()
    xv = [model.add_var(f"x_0_{j}", "C", dom.lo[j], dom.hi[j]) for j in range(dom.dim)]
    for g in dom.groups:
        model.add_row([(xv[t], 1.0) for t in g], "=", 1.0)
    prev, prev_dom = np.array(xv), dom
    for i, lay in enumerate(sub.layers):
        cur = []
        for j, nrn in enumerate(lay.neurons):
            post = sub_table[i, j].post
            if nrn.kind == "linear":
                y = model.add_var(f"y_{i + 1}_{j}", "C", post.lo, post.hi)
                f = nrn.pieces[0]
                model.add_row([(y, 1.0)] + [(int(prev[t]), -f.weights[t]) for t in range(len(prev))], "=", f.bias)
                cur.append(y)
                continue
            ctx = NeuronContext.from_neuron(nrn, prev_dom)
            bind = new_binding(model, ctx, prev, f"{i + 1}_{j}", post.lo, post.hi)
            add_neuron_block(model, ctx, bind, "bigm", tag=f"n_{i + 1}_{j}")
            cur.append(bind.y)
        prev = np.array(cur)
        prev_dom = Domain([sub_table[i, j].post for j in range(len(cur))])
    c = np.zeros(model.num_vars)
    c[prev] = piece.weights
    hi = solve_lp(model, objective=("max", c))
    lo = solve_lp(model, objective=("min", c))
    new_lo, new_hi = iv.lo, iv.hi
    if hi.status is LpStatus.OPTIMAL:
        new_hi = min(new_hi, hi.objective + piece.bias)
    if lo.status is LpStatus.OPTIMAL:
        new_lo = max(new_lo, lo.objective + piece.bias)
    if new_lo > new_hi:
        new_lo = new_hi = 0.5 * (new_lo + new_hi)
    return Interval(new_lo, new_hi)
