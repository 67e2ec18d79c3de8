# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``pwlv._kernels_py``.

Same signatures, same tie-breaking, same return types.
"""
import numpy as np

cimport numpy as cnp

cnp.import_array()

cdef double INF = float("inf")


def pivot(double[:, :] T, Py_ssize_t row, Py_ssize_t col):
    """In-place Gauss-Jordan pivot of tableau ``T`` on entry (row, col)."""
    cdef Py_ssize_t m = T.shape[0], n = T.shape[1], i, j
    cdef double piv = T[row, col], f
    for j in range(n):
        T[row, j] = T[row, j] / piv
    for i in range(m):
        if i == row:
            continue
        f = T[i, col]
        if f == 0.0:
            continue
        for j in range(n):
            T[i, j] -= f * T[row, j]


def relu_select(w, xhat, lbr, ubr, double zhat):
    cdef double[::1] w_ = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] x_ = np.ascontiguousarray(xhat, dtype=np.float64)
    cdef double[::1] l_ = np.ascontiguousarray(lbr, dtype=np.float64)
    cdef double[::1] u_ = np.ascontiguousarray(ubr, dtype=np.float64)
    cdef Py_ssize_t n = w_.shape[0], i
    mask = np.zeros(n, dtype=np.int8)
    cdef cnp.int8_t[::1] m_ = mask
    cdef double rhs = 0.0, inside, outside
    for i in range(n):
        inside = w_[i] * (x_[i] - l_[i] * (1.0 - zhat))
        outside = w_[i] * u_[i] * zhat
        if inside < outside:
            m_[i] = 1
            rhs += inside
        else:
            rhs += outside
    return mask, rhs


def maxd_select(W, xhat, lo, hi, zhat, order):
    cdef double[:, ::1] W_ = np.ascontiguousarray(W, dtype=np.float64)
    cdef double[::1] x_ = np.ascontiguousarray(xhat, dtype=np.float64)
    cdef double[::1] lo_ = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hi_ = np.ascontiguousarray(hi, dtype=np.float64)
    cdef double[::1] z_ = np.ascontiguousarray(zhat, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] o_ = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t d = W_.shape[0], n = W_.shape[1], i, t, g, s, k
    choice = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] c_ = choice
    cdef double rhs = 0.0, L, U, xi, tot_z, tot_wz, below_z, below_wz
    cdef double best, wl, grp_z, grp_wz, above_z, above_wz, val
    cdef cnp.int64_t best_l, lmin
    for i in range(n):
        L = lo_[i]
        U = hi_[i]
        xi = x_[i]
        tot_z = 0.0
        tot_wz = 0.0
        for t in range(d):
            k = o_[i, t]
            tot_z += z_[k]
            tot_wz += W_[k, i] * z_[k]
        below_z = 0.0
        below_wz = 0.0
        best = INF
        best_l = -1
        t = 0
        while t < d:
            wl = W_[o_[i, t], i]
            g = t
            grp_z = 0.0
            grp_wz = 0.0
            while g < d and W_[o_[i, g], i] == wl:
                k = o_[i, g]
                grp_z += z_[k]
                grp_wz += W_[k, i] * z_[k]
                g += 1
            above_z = tot_z - below_z - grp_z
            above_wz = tot_wz - below_wz - grp_wz
            val = wl * xi + U * (above_wz - wl * above_z) + L * (below_wz - wl * below_z)
            lmin = o_[i, t]
            for s in range(t + 1, g):
                if o_[i, s] < lmin:
                    lmin = o_[i, s]
            if val < best or (val == best and lmin < best_l):
                best = val
                best_l = lmin
            below_z += grp_z
            below_wz += grp_wz
            t = g
        c_[i] = best_l
        rhs += best
    return choice, rhs


cdef (double, Py_ssize_t) _knapsack(double[::1] wt, double[::1] x, Py_ssize_t s, Py_ssize_t e, double z):
    cdef double suf_x = 0.0, suf_wx = 0.0, best = INF, v
    cdef Py_ssize_t j, best_j = 0
    # second pass needs the values in increasing j; store them on the way down
    cdef double[::1] vals = np.empty(e - s, dtype=np.float64)
    for j in range(e - 1, s - 1, -1):
        vals[j - s] = wt[j] * (z - suf_x) + suf_wx
        suf_x += x[j]
        suf_wx += wt[j] * x[j]
    for j in range(e - s):
        v = vals[j]
        if v < best:
            best = v
            best_j = j
    return best, best_j


def knapsack_min(wt, x, double z):
    cdef double[::1] w_ = np.ascontiguousarray(wt, dtype=np.float64)
    cdef double[::1] x_ = np.ascontiguousarray(x, dtype=np.float64)
    val, j = _knapsack(w_, x_, 0, w_.shape[0], z)
    return val, j


def onehot_select(wt, xs, starts, double z):
    cdef double[::1] w_ = np.ascontiguousarray(wt, dtype=np.float64)
    cdef double[::1] x_ = np.ascontiguousarray(xs, dtype=np.float64)
    cdef cnp.int64_t[::1] s_ = np.ascontiguousarray(starts, dtype=np.int64)
    cdef Py_ssize_t tau = s_.shape[0] - 1, b
    choice = np.zeros(tau, dtype=np.int64)
    cdef cnp.int64_t[::1] c_ = choice
    cdef double total = 0.0, val
    cdef Py_ssize_t j
    for b in range(tau):
        val, j = _knapsack(w_, x_, s_[b], s_[b + 1], z)
        c_[b] = j
        total += val
    return choice, total
