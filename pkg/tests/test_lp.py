import numpy as np
import pytest

from pwlv.lp import LpStatus, simplex

INF = np.inf


def test_textbook_max():
    # max x + y  s.t.  x + 2y <= 4, 3x + y <= 6, x, y >= 0  ->  (1.6, 1.2)
    res = simplex([1, 1], [[1, 2], [3, 1]], ["<=", "<="], [4, 6], [0, 0], [INF, INF], maximize=True)
    assert res.status is LpStatus.OPTIMAL
    assert res.objective == pytest.approx(2.8)
    np.testing.assert_allclose(res.x, [1.6, 1.2])


def test_minimize_with_equality_and_free_variable():
    # min x - y  s.t.  x + y = 1, y <= 3, x free
    res = simplex([1, -1], [[1, 1]], ["="], [1], [-INF, -INF], [INF, 3])
    assert res.optimal
    assert res.objective == pytest.approx(-5.0)
    np.testing.assert_allclose(res.x, [-2.0, 3.0])


def test_infeasible_rows():
    res = simplex([1.0], [[1.0], [1.0]], [">=", "<="], [2.0, 1.0], [-INF], [INF])
    assert res.status is LpStatus.INFEASIBLE


def test_crossed_bounds_are_infeasible():
    res = simplex([1.0], np.zeros((0, 1)), [], [], [1.0], [0.0])
    assert res.status is LpStatus.INFEASIBLE


def test_unbounded():
    res = simplex([1.0, 0.0], [[1.0, -1.0]], ["<="], [1.0], [0.0, 0.0], [INF, INF], maximize=True)
    assert res.status is LpStatus.UNBOUNDED


def test_bounds_only():
    res = simplex([2.0, -3.0], np.zeros((0, 2)), [], [], [-1.0, -2.0], [4.0, 5.0], maximize=True)
    assert res.objective == pytest.approx(2 * 4 + 3 * 2)


def test_rejects_nonfinite_data():
    with pytest.raises(ValueError):
        simplex([np.nan], [[1.0]], ["<="], [1.0], [0.0], [1.0])


def _random_lp(rng, m, n):
    A = rng.normal(size=(m, n))
    x0 = rng.uniform(-1, 1, n)
    senses = [["<=", ">=", "="][int(t)] for t in rng.integers(0, 3, m)]
    slack = rng.uniform(0, 1, m)
    b = A @ x0 + np.array([s if sn == "<=" else -s if sn == ">=" else 0.0 for sn, s in zip(senses, slack)])
    lo = x0 - rng.uniform(0.1, 2.0, n)
    hi = x0 + rng.uniform(0.1, 2.0, n)
    return rng.normal(size=n), A, senses, b, lo, hi


@pytest.mark.parametrize("seed", range(25))
def test_duality_certificate(seed):
    """c = A'y + r, primal feasibility and complementary slackness on bounds."""
    rng = np.random.default_rng(seed)
    c, A, senses, b, lo, hi = _random_lp(rng, int(rng.integers(1, 7)), int(rng.integers(2, 8)))
    res = simplex(c, A, senses, b, lo, hi, maximize=bool(seed % 2))
    assert res.optimal
    x = res.x
    assert np.all(x >= lo - 1e-7) and np.all(x <= hi + 1e-7)
    ax = A @ x
    for v, s, rhs in zip(ax, senses, b):
        if s == "<=":
            assert v <= rhs + 1e-7
        elif s == ">=":
            assert v >= rhs - 1e-7
        else:
            assert v == pytest.approx(rhs, abs=1e-7)
    np.testing.assert_allclose(A.T @ res.duals + res.reduced_costs, c, atol=1e-8)
    # a reduced cost can only be nonzero at a bound
    at_bound = np.isclose(x, lo, atol=1e-7) | np.isclose(x, hi, atol=1e-7)
    assert np.all(at_bound | (np.abs(res.reduced_costs) < 1e-7))
    # value of the dual certificate equals the primal objective
    assert res.duals @ b + res.reduced_costs @ x == pytest.approx(res.objective, abs=1e-7)


@pytest.mark.parametrize("seed", range(25))
def test_agrees_with_scipy(seed):
    opt = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(100 + seed)
    c, A, senses, b, lo, hi = _random_lp(rng, int(rng.integers(1, 8)), int(rng.integers(2, 9)))
    res = simplex(c, A, senses, b, lo, hi)
    ub = [i for i, s in enumerate(senses) if s != "="]
    sg = np.array([1.0 if senses[i] == "<=" else -1.0 for i in ub])
    eq = [i for i, s in enumerate(senses) if s == "="]
    ref = opt.linprog(c, A_ub=A[ub] * sg[:, None] if ub else None, b_ub=b[ub] * sg if ub else None,
                      A_eq=A[eq] if eq else None, b_eq=b[eq] if eq else None,
                      bounds=list(zip(lo, hi)), method="highs")
    assert ref.status == 0
    assert res.objective == pytest.approx(ref.fun, abs=1e-7)


def test_degenerate_lp_terminates():
    # many constraints through the same vertex
    n = 3
    rows = [np.eye(n)[i] for i in range(n)] + [np.ones(n), np.ones(n) * 2, [1, 1, 0], [0, 1, 1]]
    b = [0.0] * n + [0.0, 0.0, 0.0, 0.0]
    res = simplex(np.ones(n), np.array(rows), ["<="] * len(rows), b, -np.ones(n), np.ones(n), maximize=True)
    assert res.optimal
    assert res.objective == pytest.approx(0.0, abs=1e-9)
