"""Brute-force ground truth used to check the formulations and separators.

Nothing here is clever on purpose: support functions are computed piece by
piece with one LP per piece, MIP optima by enumerating activation patterns,
and separation by scoring every member of a family.
"""
from __future__ import annotations

import itertools

import numpy as np

from pwlv.formulation import NeuronContext, Polytope, region_rows
from pwlv.lp import LpStatus, simplex
from pwlv.model import Domain, Network, linearize_stable_neurons, propagate_bounds

FAMILY_GUARD = 2 ** 14
PATTERN_GUARD = 20


class GuardExceeded(RuntimeError):
    """An exhaustive oracle was asked for more work than its guard allows."""


# ---------------------------------------------------------------------------
# support function of the graph / Cayley embedding


def support_function_maxgraph(ctx: NeuronContext, cx, cy, cz=None, active=None, poly=None):
    """max over k in ``active`` of cz_k + max_{x in D_k} (cx + cy w^k).x + cy b^k.

    D_k is the part of the domain where piece k is realised (dominance is
    non-strict and always taken against every piece). Pieces with empty D_k
    are skipped; returns -inf if every active piece is empty.
    """
    poly = poly or Polytope.from_domain(ctx.dom)
    cx = np.asarray(cx, dtype=float)
    cz = np.zeros(ctx.d) if cz is None else np.asarray(cz, dtype=float)
    active = range(ctx.d) if active is None else active
    best = -np.inf
    for k in active:
        A, b = region_rows(ctx, k)
        res = poly.optimize(cx + cy * ctx.W[k], A, b, maximize=True)
        if res.status is LpStatus.INFEASIBLE:
            continue
        if res.status is not LpStatus.OPTIMAL:
            raise RuntimeError(f"support LP for piece {k} ended {res.status.value}")
        best = max(best, cz[k] + res.objective + cy * ctx.b[k])
    return best


# ---------------------------------------------------------------------------
# exact network optimum by activation enumeration


def _piece_options(nrn):
    """Per piece: (output weights over layer input, bias, region rows a.x + c <= 0)."""
    kind = nrn.kind
    if kind == "linear":
        f = nrn.pieces[0]
        return [(f.weights, f.bias, [])]
    if kind == "max":
        W, b = nrn.W, nrn.b
        return [(W[k], b[k], [(W[l] - W[k], b[l] - b[k]) for l in range(len(b)) if l != k])
                for k in range(len(b))]
    f = nrn.pieces[0]
    w, c = f.weights, f.bias
    zero = np.zeros_like(w)
    if kind == "relu":
        return [(w, c, [(-w, -c)]), (zero, 0.0, [(w, c)])]
    if kind == "leaky":
        a = nrn.activation.alpha
        return [(w, c, [(-w, -c)]), (a * w, a * c, [(w, c)])]
    C = nrn.activation.cap
    return [(zero, 0.0, [(w, c)]), (w, c, [(-w, -c), (w, c - C)]), (zero, C, [(-w, C - c)])]


def _lp_over(dom: Domain, rows, c=None, maximize=True):
    A_eq, b_eq, lo, hi = dom.polytope()
    n = dom.dim
    if rows:
        G = np.array([r[0] for r in rows])
        h = np.array([r[1] for r in rows])
    else:
        G, h = np.zeros((0, n)), np.zeros(0)
    A = np.vstack([G, A_eq])
    senses = ["<="] * len(h) + ["="] * len(b_eq)
    cost = np.zeros(n) if c is None else c
    return simplex(cost, A, senses, np.concatenate([h, b_eq]), lo, hi, maximize=maximize)


def enumerate_activation_optimum(net: Network, dom: Domain, objective, guard=PATTERN_GUARD,
                                 preprocess=True, return_point=False):
    """Exact max of ``objective . net(x)`` over the domain.

    Every nonlinear neuron is fixed to one of its pieces; with the pattern
    fixed the network is affine in x, the piece choices become linear rows,
    and one LP per feasible pattern gives the value. Partial patterns are
    pruned as soon as their rows become infeasible.
    """
    if preprocess:
        net = linearize_stable_neurons(net, propagate_bounds(net, dom))
    count = len(net.nonlinear_neurons())
    if count > guard:
        raise GuardExceeded(f"{count} nonlinear neurons exceed the enumeration guard of {guard}")
    objective = np.asarray(objective, dtype=float)
    n0 = net.input_dim
    neurons = [(i, j, nrn) for i, layer in enumerate(net.layers) for j, nrn in enumerate(layer.neurons)]
    best = [-np.inf, None]

    def rec(pos, A_prev, c_prev, A_cur, c_cur, rows):
        # A_prev/c_prev: affine map of the current layer's input; A_cur/c_cur:
        # outputs of the current layer computed so far
        if pos == len(neurons):
            A_out = np.array(A_cur)
            c_out = np.array(c_cur)
            res = _lp_over(dom, rows, objective @ A_out, maximize=True)
            if res.status is LpStatus.OPTIMAL:
                val = res.objective + float(objective @ c_out)
                if val > best[0]:
                    best[0], best[1] = val, res.x
            return
        i, j, nrn = neurons[pos]
        if j == 0 and pos > 0:
            A_prev, c_prev = np.array(A_cur), np.array(c_cur)
            A_cur, c_cur = [], []
        options = _piece_options(nrn)
        for w, c, regs in options:
            new_rows = list(rows)
            for a, r in regs:
                new_rows.append((a @ A_prev, -(r + a @ c_prev)))
            if len(options) > 1 and regs:
                feas = _lp_over(dom, new_rows)
                if feas.status is not LpStatus.OPTIMAL:
                    continue
            rec(pos + 1, A_prev, c_prev, A_cur + [w @ A_prev], c_cur + [c + w @ c_prev], new_rows)

    rec(0, np.eye(n0), np.zeros(n0), [], [], [])
    if return_point:
        return best[0], best[1]
    return best[0]


# ---------------------------------------------------------------------------
# transportation problem


def transport_lp(x, z, W, check_dual=False):
    """Max-weight transportation value; ``W[k, j]`` is the weight of (k, j).

    With ``check_dual`` the minimization form over (alpha, gamma) is solved
    as well and the two values must agree within 1e-8.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    W = np.asarray(W, dtype=float)
    d, p = W.shape
    if abs(x.sum() - 1) > 1e-9 or abs(z.sum() - 1) > 1e-9:
        raise ValueError("marginals must sum to one")
    A = np.zeros((p + d, d * p))
    for k in range(d):
        for j in range(p):
            A[j, k * p + j] = 1.0
            A[p + k, k * p + j] = 1.0
    res = simplex(W.reshape(-1), A, ["="] * (p + d), np.concatenate([x, z]),
                  np.zeros(d * p), np.full(d * p, np.inf), maximize=True)
    if res.status is not LpStatus.OPTIMAL:
        raise RuntimeError(f"transport LP ended {res.status.value}")
    if check_dual:
        # min alpha.x + gamma.z  s.t.  alpha_j + gamma_k >= W[k, j]
        D = np.zeros((d * p, p + d))
        for k in range(d):
            for j in range(p):
                D[k * p + j, j] = 1.0
                D[k * p + j, p + k] = 1.0
        dual = simplex(np.concatenate([x, z]), D, [">="] * (d * p), W.reshape(-1),
                       np.full(p + d, -np.inf), np.full(p + d, np.inf), maximize=False)
        if dual.status is not LpStatus.OPTIMAL or abs(dual.objective - res.objective) > 1e-8:
            raise RuntimeError("transport duality check failed")
    return res.objective


# ---------------------------------------------------------------------------
# exhaustive separation


def _all_subsets(n):
    if 2 ** n > FAMILY_GUARD:
        raise GuardExceeded(f"2^{n} subsets exceed the guard of {FAMILY_GUARD}")
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=bool).reshape(-1, n)


def _all_mappings(sizes):
    total = int(np.prod(sizes)) if len(sizes) else 1
    if total > FAMILY_GUARD:
        raise GuardExceeded(f"{total} mappings exceed the guard of {FAMILY_GUARD}")
    return np.array(list(itertools.product(*[range(s) for s in sizes])), dtype=np.int64).reshape(-1, len(sizes))


def family_size(ctx: NeuronContext, family):
    if family in ("ReluIdeal", "Leaky", "ClippedUpper", "ClippedLower"):
        return 2 ** ctx.eta
    if family == "Clipped":
        return 2 ** (ctx.eta + 1)
    if family == "MaxDBox":
        if not ctx.is_box and all(b.p == 2 for b in ctx.blocks):
            return ctx.d ** len(ctx.blocks)
        return ctx.d ** ctx.eta
    if family == "OneHotRelu":
        return int(np.prod([b.p for b in ctx.blocks]))
    raise ValueError(f"unknown family {family}")


def _member_scores(q, ctx: NeuronContext, family):
    """(witness array, rhs or lhs-bound array, sense) for every member."""
    x, z = q.x, q.z
    if family in ("ReluIdeal", "Leaky", "ClippedUpper", "ClippedLower"):
        w, b = ctx.f.weights, ctx.f.bias
        lb, ub = ctx.lbr, ctx.ubr
        S = _all_subsets(ctx.eta)
        if family == "ReluIdeal":
            zz = z[0]
            rhs = S @ (w * (x - lb * (1 - zz))) + (b + (~S) @ (w * ub)) * zz
            return S, rhs, "<="
        if family == "Leaky":
            a, zz = ctx.alpha, z[0]
            part1 = S @ (w * (x - lb * (1 - zz))) + (b + (~S) @ (w * ub)) * zz
            part2 = a * ((~S) @ (w * (x - ub * zz)) + (b + S @ (w * lb)) * (1 - zz))
            return S, part1 + part2, "<="
        z1, z2, z3 = z
        if family == "ClippedUpper":
            rhs = S @ (w * x) + (b + (~S) @ (w * ub)) * (z2 + z3) - (S @ (w * lb)) * z1
            return S, rhs, "<="
        rhs = S @ (w * x) + (b + (~S) @ (w * lb)) * (z1 + z2) - (S @ (w * ub) - ctx.cap) * z3
        return S, rhs, ">="
    if family == "MaxDBox" and (ctx.is_box or not all(b.p == 2 for b in ctx.blocks)):
        W, L, U = ctx.W, ctx.lo, ctx.hi
        Imaps = _all_mappings([ctx.d] * ctx.eta)
        cols = np.arange(ctx.eta)
        # T[i, l]: contribution of coordinate i when mapped to piece l
        T = np.zeros((ctx.eta, ctx.d))
        for i in range(ctx.eta):
            for l in range(ctx.d):
                diff = W[:, i] - W[l, i]
                T[i, l] = W[l, i] * x[i] + np.maximum(diff * L[i], diff * U[i]) @ z
        rhs = T[cols[None, :], Imaps].sum(axis=1) + ctx.b @ z
        return Imaps, rhs, "<="
    if family == "MaxDBox":
        Kmaps = _all_mappings([ctx.d] * len(ctx.blocks))
        T = np.zeros((len(ctx.blocks), ctx.d))
        for t, blk in enumerate(ctx.blocks):
            lam = blk.lam(x)
            V = blk.vert
            wt = V[:, 0] - V[:, 1]
            sig = np.argsort(wt, kind="stable")
            for K in range(ctx.d):
                piv = wt[sig[K]]
                val = piv * lam[0]
                for s in range(ctx.d):
                    k = sig[s]
                    val += (V[k, 1] if s <= K else V[k, 0] - piv) * z[k]
                T[t, K] = val
        rows = np.arange(len(ctx.blocks))
        rhs = T[rows[None, :], Kmaps].sum(axis=1) + (ctx.b + ctx.lam_const) @ z
        return Kmaps, rhs, "<="
    if family == "OneHotRelu":
        sizes = [blk.p for blk in ctx.blocks]
        Jmaps = _all_mappings(sizes)
        T = np.zeros((len(ctx.blocks), max(sizes) if sizes else 1))
        for t, blk in enumerate(ctx.blocks):
            lam = blk.lam(x)
            wt = blk.vert[0] - blk.vert[1]
            perm = np.argsort(wt, kind="stable")
            ws, ls = wt[perm], lam[perm]
            for J in range(blk.p):
                T[t, J] = ws[J] * z[0] + sum((ws[j] - ws[J]) * ls[j] for j in range(J + 1, blk.p))
            T[t, :blk.p] += blk.vert[1] @ lam
        rows = np.arange(len(ctx.blocks))
        rhs = T[rows[None, :], Jmaps].sum(axis=1) + (ctx.b + ctx.lam_const) @ z
        return Jmaps, rhs, "<="
    raise ValueError(f"unknown family {family}")


def exhaustive_separation(q, ctx: NeuronContext, family, guard=FAMILY_GUARD):
    """True maximum violation over every member and a maximizing witness.

    Witnesses are boolean subset masks or per-coordinate/per-block mappings
    (positions in sorted order for the simplex families). For ``Clipped``
    both the upper and the lower family are scored and the better one wins;
    its witness is prefixed with "upper" or "lower".
    """
    from pwlv.cuts import QueryPoint

    if not isinstance(q, QueryPoint):
        q = QueryPoint(*q)
    q = q.normalized()
    if family_size(ctx, family) > guard:
        raise GuardExceeded(f"family {family} has {family_size(ctx, family)} members (guard {guard})")
    if family == "Clipped":
        up = exhaustive_separation(q, ctx, "ClippedUpper", guard)
        lo = exhaustive_separation(q, ctx, "ClippedLower", guard)
        if lo[1] > up[1]:
            return ("lower", lo[0]), lo[1]
        return ("upper", up[0]), up[1]
    wit, bound, sense = _member_scores(q, ctx, family)
    viol = q.y - bound if sense == "<=" else bound - q.y
    k = int(np.argmax(viol))
    return wit[k], float(viol[k])


def enumerate_family(ctx: NeuronContext, family, guard=FAMILY_GUARD):
    """Every member of a family as a :class:`~pwlv.cuts.Cut` (small sizes)."""
    from pwlv import cuts

    if family_size(ctx, family) > guard:
        raise GuardExceeded(f"family {family} has {family_size(ctx, family)} members (guard {guard})")
    if family == "ReluIdeal":
        return [cuts.relu_ideal_cut(ctx, m) for m in _all_subsets(ctx.eta)]
    if family == "Leaky":
        return [cuts.leaky_cut(ctx, m) for m in _all_subsets(ctx.eta)]
    if family == "ClippedUpper":
        return [cuts.clipped_upper_cut(ctx, m) for m in _all_subsets(ctx.eta)]
    if family == "ClippedLower":
        return [cuts.clipped_lower_cut(ctx, m) for m in _all_subsets(ctx.eta)]
    if family == "Clipped":
        return enumerate_family(ctx, "ClippedUpper", guard) + enumerate_family(ctx, "ClippedLower", guard)
    if family == "MaxDBox":
        if not ctx.is_box and all(b.p == 2 for b in ctx.blocks):
            return [cuts.simplex_p2_cut(ctx, K) for K in _all_mappings([ctx.d] * len(ctx.blocks))]
        return [cuts.maxd_cut(ctx, I) for I in _all_mappings([ctx.d] * ctx.eta)]
    if family == "OneHotRelu":
        return [cuts.onehot_cut(ctx, J) for J in _all_mappings([b.p for b in ctx.blocks])]
    raise ValueError(f"unknown family {family}")
