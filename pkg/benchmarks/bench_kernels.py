"""Compare the compiled kernels with the pure-Python fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly, so the environment switch in
``pwlv.kernels`` does not matter here. Every case first checks that the two
backends return the same result, then times them.
"""
import argparse
import timeit

import numpy as np

from pwlv import _kernels_py as py

try:
    from pwlv import _kernels as cy
except ImportError:  # pragma: no cover - depends on the build
    cy = None


def cases(rng):
    eta = 784
    w = rng.normal(size=eta)
    lo, hi = -np.ones(eta), np.ones(eta)
    x = rng.uniform(-1, 1, eta)
    lbr = np.where(w >= 0, lo, hi)
    ubr = np.where(w >= 0, hi, lo)
    yield "relu_select eta=784", "relu_select", (w, x, lbr, ubr, 0.4)

    d, eta2 = 4, 256
    W = rng.normal(size=(d, eta2))
    order = np.argsort(W.T, axis=1, kind="stable")
    z = rng.dirichlet(np.ones(d))
    yield "maxd_select d=4 eta=256", "maxd_select", (W, rng.uniform(-1, 1, eta2), -np.ones(eta2), np.ones(eta2), z, order)

    p = 512
    wt = np.sort(rng.normal(size=p))
    xs = rng.dirichlet(np.ones(p))
    yield "knapsack_min p=512", "knapsack_min", (wt, xs, 0.3)

    sizes = [10] * 50
    starts = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    wts = np.concatenate([np.sort(rng.normal(size=s)) for s in sizes])
    xss = np.concatenate([rng.dirichlet(np.ones(s)) for s in sizes])
    yield "onehot_select 50x10", "onehot_select", (wts, xss, starts, 0.6)

    m, n = 120, 300
    T = rng.normal(size=(m, n))
    yield "pivot 120x300", "pivot", (T, 7, 11)


def _same(a, b):
    if a is None and b is None:
        return True
    if isinstance(a, tuple):
        return all(_same(u, v) for u, v in zip(a, b))
    return np.allclose(a, b, rtol=1e-12, atol=1e-12)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if cy is None:
        print("compiled extension not built; only the Python backend is available")
    print(f"{'kernel':<28} {'python (us)':>12} {'cython (us)':>12} {'speedup':>8}")
    for label, name, call_args in cases(rng):
        fpy = getattr(py, name)
        if name == "pivot":
            # pivot works in place: give each call a fresh copy
            base = call_args[0]
            run_py = lambda: fpy(base.copy(), *call_args[1:])
        else:
            run_py = lambda: fpy(*call_args)
        t_py = min(timeit.repeat(run_py, number=1, repeat=args.repeat)) * 1e6
        if cy is None:
            print(f"{label:<28} {t_py:>12.1f} {'-':>12} {'-':>8}")
            continue
        fcy = getattr(cy, name)
        if name == "pivot":
            A, B = base.copy(), base.copy()
            fpy(A, *call_args[1:])
            fcy(B, *call_args[1:])
            assert np.allclose(A, B, rtol=1e-12, atol=1e-12), name
            run_cy = lambda: fcy(base.copy(), *call_args[1:])
        else:
            assert _same(fpy(*call_args), fcy(*call_args)), name
            run_cy = lambda: fcy(*call_args)
        t_cy = min(timeit.repeat(run_cy, number=1, repeat=args.repeat)) * 1e6
        print(f"{label:<28} {t_py:>12.1f} {t_cy:>12.1f} {t_py / t_cy:>7.1f}x")


if __name__ == "__main__":
    main()
