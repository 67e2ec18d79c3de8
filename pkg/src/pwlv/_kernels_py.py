"""Pure-Python implementations of the hot kernels.

These are the reference versions. ``pwlv._kernels`` (Cython) mirrors every
function here with identical semantics; ``pwlv.kernels`` picks one at import.
"""
import numpy as np


def pivot(T, row, col):
    """In-place Gauss-Jordan pivot of tableau ``T`` on entry (row, col)."""
    prow = T[row] / T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, prow)
    T[row] = prow


def relu_select(w, xhat, lbr, ubr, zhat):
    """Per-coordinate choice for the ReLU ideal family.

    Returns ``(mask, rhs)``: ``mask[i]`` is 1 when coordinate i belongs to the
    minimizing subset, and ``rhs`` is the bias-free right-hand side
    ``sum_{i in I} w_i (x_i - lbr_i (1-z)) + sum_{i not in I} w_i ubr_i z``.
    """
    n = len(w)
    mask = np.zeros(n, dtype=np.int8)
    rhs = 0.0
    for i in range(n):
        inside = w[i] * (xhat[i] - lbr[i] * (1.0 - zhat))
        outside = w[i] * ubr[i] * zhat
        if inside < outside:
            mask[i] = 1
            rhs += inside
        else:
            rhs += outside
    return mask, rhs


def maxd_select(W, xhat, lo, hi, zhat, order):
    """Per-coordinate argmin for the max-of-d box family.

    ``W`` is d x eta, ``order[i]`` lists piece indices sorted by ``W[:, i]``
    ascending (ties by index). Returns ``(choice, rhs)`` where ``rhs`` excludes
    the ``sum_k b^k z_k`` term. Ties resolve to the smallest piece index.
    """
    d, n = W.shape
    choice = np.zeros(n, dtype=np.int64)
    rhs = 0.0
    for i in range(n):
        L = lo[i]
        U = hi[i]
        xi = xhat[i]
        # suffix sums over the sorted order: mass and weighted mass above
        tot_z = 0.0
        tot_wz = 0.0
        for t in range(d):
            k = order[i, t]
            tot_z += zhat[k]
            tot_wz += W[k, i] * zhat[k]
        below_z = 0.0
        below_wz = 0.0
        best = np.inf
        best_l = -1
        t = 0
        while t < d:
            # group equal weights so the split is consistent
            wl = W[order[i, t], i]
            g = t
            grp_z = 0.0
            grp_wz = 0.0
            while g < d and W[order[i, g], i] == wl:
                k = order[i, g]
                grp_z += zhat[k]
                grp_wz += W[k, i] * zhat[k]
                g += 1
            above_z = tot_z - below_z - grp_z
            above_wz = tot_wz - below_wz - grp_wz
            val = wl * xi + U * (above_wz - wl * above_z) + L * (below_wz - wl * below_z)
            lmin = order[i, t]
            for s in range(t + 1, g):
                if order[i, s] < lmin:
                    lmin = order[i, s]
            if val < best or (val == best and lmin < best_l):
                best = val
                best_l = lmin
            below_z += grp_z
            below_wz += grp_wz
            t = g
        choice[i] = best_l
        rhs += best
    return choice, rhs


def knapsack_min(wt, x, z):
    """min over J of ``wt[J] z + sum_{j>J} (wt[j] - wt[J]) x[j]``.

    ``wt`` must be sorted ascending. Returns ``(value, J)`` with the smallest
    minimizing J. Linear time via running suffix sums.
    """
    p = len(wt)
    suf_x = 0.0
    suf_wx = 0.0
    best = np.inf
    best_j = 0
    vals = np.empty(p)
    for j in range(p - 1, -1, -1):
        vals[j] = wt[j] * (z - suf_x) + suf_wx
        suf_x += x[j]
        suf_wx += wt[j] * x[j]
    for j in range(p):
        if vals[j] < best:
            best = vals[j]
            best_j = j
    return best, best_j


def onehot_select(wt, xs, starts, z):
    """Blockwise ``knapsack_min`` over a flat array of sorted block weights.

    ``wt`` and ``xs`` are concatenated per-block arrays (weights ascending
    within a block, x values permuted to match); ``starts`` has length
    ``tau + 1``. Returns ``(choice, total)`` with within-block positions.
    """
    tau = len(starts) - 1
    choice = np.zeros(tau, dtype=np.int64)
    total = 0.0
    for b in range(tau):
        s = starts[b]
        e = starts[b + 1]
        val, j = knapsack_min(wt[s:e], xs[s:e], z)
        choice[b] = j
        total += val
    return choice, total
