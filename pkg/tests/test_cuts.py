import itertools

import numpy as np
import pytest

from helpers import random_context, random_query
from pwlv import oracle
from pwlv.cuts import (
    QueryPoint,
    clipped_lower_cut,
    clipped_upper_cut,
    knapsack_transport_d2,
    knapsack_transport_p2,
    maxd_cut,
    project_simplex,
    separate_clipped,
    separate_ideal_dual_subgradient,
    separate_leaky,
    separate_max_d_box,
    separate_onehot_relu,
    separate_relu_ideal,
)
from pwlv.formulation import NeuronContext, box_coefficients, neuron_model
from pwlv.lp import simplex
from pwlv.model import AffineFunc, Domain, Simplex


def example1():
    return NeuronContext.relu([1.0, 1.0], -1.5, [0.0, 0.0], [1.0, 1.0])


def test_example1_cut():
    cut = separate_relu_ideal(QueryPoint([1.0, 0.0], 0.25, 0.5), example1())
    assert cut.witness == (1,)
    assert cut.violation == pytest.approx(0.5, abs=1e-12)
    # y <= x2 - 0.5 z, written against the indicators (z, 1 - z)
    np.testing.assert_allclose(cut.cx, [0.0, -1.0])
    assert cut.rhs_of_y(np.array([0.3, 0.7]), np.array([1.0, 0.0])) == pytest.approx(0.2)
    assert cut.rhs_of_y(np.array([0.3, 0.7]), np.array([0.0, 1.0])) == pytest.approx(0.7)


def test_integer_point_is_not_separated():
    assert separate_relu_ideal(QueryPoint([1.0, 1.0], 0.5, 1.0), example1()) is None
    cut = separate_relu_ideal(QueryPoint([1.0, 1.0], 0.5, 1.0), example1(), tol=-np.inf)
    assert cut.witness == ()
    assert cut.violation == pytest.approx(0.0, abs=1e-12)


def test_max_d_reproduces_the_relu_cut():
    ctx = NeuronContext.max_of([[1.0, 1.0], [0.0, 0.0]], [-1.5, 0.0], [0.0, 0.0], [1.0, 1.0])
    cut = separate_max_d_box(QueryPoint([1.0, 0.0], 0.25, [0.5, 0.5]), ctx)
    assert cut.witness == (1, 0)
    assert cut.violation == pytest.approx(0.5)


def test_constant_mapping_is_a_big_m_row():
    rng = np.random.default_rng(2)
    ctx = random_context(rng, "max", 3, 3)
    N = box_coefficients(ctx)
    for l in range(3):
        cut = maxd_cut(ctx, [l] * 3)
        np.testing.assert_allclose(-cut.cx, ctx.W[l])
        np.testing.assert_allclose(-cut.cz, N[l] + ctx.b)


def test_onehot_tie_break():
    dom = Domain([Simplex(2)])
    ctx = NeuronContext.single("relu", AffineFunc([1.0, 3.0], -2.0), dom)
    cut = separate_onehot_relu(QueryPoint([0.5, 0.5], 0.8, 0.5), ctx)
    assert cut.witness == (0,)
    assert cut.violation == pytest.approx(0.3)
    # the graph vertex (e2, ReLU(1) = 1, z = 1) is not cut
    assert separate_onehot_relu(QueryPoint([0.0, 1.0], 1.0, 1.0), ctx) is None


def test_leaky_alpha_one_limit():
    ctx = random_context(np.random.default_rng(1), "leaky", 3)
    ctx.alpha = 1.0
    from pwlv.cuts import leaky_cut

    for mask in itertools.product((0, 1), repeat=3):
        cut = leaky_cut(ctx, mask)
        np.testing.assert_allclose(-cut.cx, ctx.f.weights)
        np.testing.assert_allclose(-cut.cz, [ctx.f.bias, ctx.f.bias])


def test_leaky_example_matches_exhaustive():
    ctx = NeuronContext.single("leaky", AffineFunc([1.0], 0.0), Domain.box([-1.0], [1.0]), alpha=0.1)
    q = QueryPoint([0.0], 0.45, 0.5)
    _, exact = oracle.exhaustive_separation(q, ctx, "Leaky")
    assert separate_leaky(q, ctx, tol=-np.inf).violation == pytest.approx(exact, abs=1e-12)
    assert separate_leaky(QueryPoint([1.0], 1.0, 1.0), ctx) is None
    with pytest.raises(ValueError):
        separate_leaky(q, ctx, alpha=1.5)


def test_clipped_facet_tags():
    ctx = NeuronContext.single("clipped", AffineFunc([1.0], 0.0), Domain.box([-1.0], [2.0]), cap=1.0)
    assert clipped_upper_cut(ctx, [True]).facet is True
    assert clipped_upper_cut(ctx, [False]).facet is False
    assert clipped_lower_cut(ctx, [True]).facet is True
    assert clipped_lower_cut(ctx, [False]).facet is False
    assert separate_clipped(QueryPoint([2.0], 1.0, [0.0, 0.0, 1.0]), ctx) == []


def test_knapsack_examples():
    val, j = knapsack_transport_d2([1.0], [0.3, 0.7], [5.0], [2.0])
    assert val == pytest.approx(2.9) and j == 0
    val, j = knapsack_transport_d2([0.5, 0.5], [1.0, 0.0], [1.0, 3.0], [0.0, 0.0])
    assert val == pytest.approx(2.0) and j == 0
    with pytest.raises(ValueError):
        knapsack_transport_d2([0.5, 0.6], [1.0, 0.0], [1.0, 3.0], [0.0, 0.0])


@pytest.mark.parametrize("seed", range(30))
def test_knapsack_symmetry_and_vertices(seed):
    rng = np.random.default_rng(seed)
    x, z = rng.dirichlet(np.ones(2)), rng.dirichlet(np.ones(2))
    W = rng.normal(size=(2, 2))
    a, _ = knapsack_transport_p2(x, z, W)
    b, _ = knapsack_transport_d2(z, x, W[:, 0], W[:, 1])
    assert a == pytest.approx(b, abs=1e-12)
    d = int(rng.integers(2, 6))
    W = rng.normal(size=(d, 2))
    k = int(rng.integers(d))
    val, _ = knapsack_transport_p2(x, np.eye(d)[k], W)
    assert val == pytest.approx(W[k] @ x, abs=1e-12)
    z = rng.dirichlet(np.ones(d))
    assert knapsack_transport_p2(x, z, W)[0] == pytest.approx(oracle.transport_lp(x, z, W), abs=1e-8)


SEPARATORS = {
    "ReluIdeal": lambda q, c: [separate_relu_ideal(q, c, -np.inf)],
    "MaxDBox": lambda q, c: [separate_max_d_box(q, c, -np.inf)],
    "Leaky": lambda q, c: [separate_leaky(q, c, tol=-np.inf)],
    "Clipped": lambda q, c: separate_clipped(q, c, tol=-np.inf),
}


@pytest.mark.parametrize("family, kind", [("ReluIdeal", "relu"), ("MaxDBox", "max"),
                                          ("Leaky", "leaky"), ("Clipped", "clipped")])
def test_separators_match_exhaustive(family, kind):
    rng = np.random.default_rng(len(family))
    for _ in range(100):
        ctx = random_context(rng, kind, int(rng.integers(1, 6)), int(rng.integers(2, 4)))
        q = random_query(rng, ctx)
        _, exact = oracle.exhaustive_separation(q, ctx, family)
        got = max(c.violation for c in SEPARATORS[family](q, ctx))
        assert got == pytest.approx(exact, abs=1e-9)


def test_simplex_separators_match_exhaustive():
    rng = np.random.default_rng(99)
    for _ in range(100):
        ctx = random_context(rng, "relu", int(rng.integers(2, 7)), simplex=True)
        q = random_query(rng, ctx)
        _, exact = oracle.exhaustive_separation(q, ctx, "OneHotRelu")
        assert separate_onehot_relu(q, ctx, -np.inf).violation == pytest.approx(exact, abs=1e-9)
        dom = Domain([Simplex(2)] * int(rng.integers(1, 4)))
        ctx = NeuronContext("max", rng.normal(size=(3, dom.dim)), rng.normal(size=3), dom)
        q = random_query(rng, ctx)
        _, exact = oracle.exhaustive_separation(q, ctx, "MaxDBox")
        assert separate_max_d_box(q, ctx, -np.inf).violation == pytest.approx(exact, abs=1e-9)


def _max_violation_on_slices(ctx, cut):
    """Largest violation of ``cut`` over every integer slice of the big-M block."""
    model, bind = neuron_model(ctx, "bigm")
    row = cut.to_constraint(bind)
    c = np.zeros(model.num_vars)
    for i, v in row.coefs:
        c[i] = v if row.sense == "<=" else -v
    off = -row.rhs if row.sense == "<=" else row.rhs
    A, senses, b = model.dense_rows()
    worst = -np.inf
    for k in range(ctx.d):
        lo, hi = model.bounds()
        vals = bind.binary_values(k)
        lo[bind.z] = hi[bind.z] = vals
        res = simplex(c, A, senses, b, lo, hi, maximize=True)
        if res.optimal:
            worst = max(worst, res.objective + off)
    return worst


@pytest.mark.parametrize("family, kind", [("ReluIdeal", "relu"), ("MaxDBox", "max"),
                                          ("Leaky", "leaky"), ("Clipped", "clipped")])
def test_cuts_are_valid(family, kind):
    rng = np.random.default_rng(len(kind) + 40)
    for _ in range(15):
        ctx = random_context(rng, kind, int(rng.integers(1, 4)), 3)
        for cut in SEPARATORS[family](random_query(rng, ctx), ctx):
            assert _max_violation_on_slices(ctx, cut) <= 1e-8


def test_onehot_cuts_are_valid():
    rng = np.random.default_rng(5)
    for _ in range(15):
        ctx = random_context(rng, "relu", 5, simplex=True)
        for cut in oracle.enumerate_family(ctx, "OneHotRelu"):
            assert _max_violation_on_slices(ctx, cut) <= 1e-8


def test_subgradient_no_stronger_than_exact_for_two_pieces():
    # (x, z) must lie in the projection of the hull, otherwise valid cuts can
    # be arbitrarily violated; take x as a z-weighted mix of region points
    rng = np.random.default_rng(8)
    done = 0
    while done < 20:
        ctx = random_context(rng, "max", 2, 2)
        pts = {}
        for x in ctx.dom.sample(rng, 200):
            pts.setdefault(ctx.pattern(x), x)
        if len(pts) < 2:
            continue
        done += 1
        z = rng.dirichlet(np.ones(2))
        x = z[0] * pts[0] + z[1] * pts[1]
        q = QueryPoint(x, ctx.value(x) + rng.uniform(0, 1), z)
        exact = separate_max_d_box(q, ctx, -np.inf).violation
        cut = separate_ideal_dual_subgradient(q, ctx, iters=60, tol=-np.inf)
        assert cut.violation <= exact + 1e-7
        assert _max_violation_on_slices(ctx, cut) <= 1e-7


def test_subgradient_beats_the_sharp_family_for_three_pieces():
    # pieces -x + 1, 0, x - 2 on [0, 3]; the hull of the Cayley embedding is
    # strictly tighter than the sharp family at this point
    ctx = NeuronContext.max_of([[-1.0], [0.0], [1.0]], [1.0, 0.0, -2.0], [0.0], [3.0])
    q = QueryPoint([1.75], 0.45, [0.0, 0.5, 0.5])
    assert separate_max_d_box(q, ctx) is None
    cut = separate_ideal_dual_subgradient(q, ctx)
    assert cut is not None and cut.violation > 0.15
    assert _max_violation_on_slices(ctx, cut) <= 1e-8


def test_subgradient_feasibility_cut_for_empty_region():
    ctx = NeuronContext.max_of([[1.0], [1.0]], [0.0, -1.0], [0.0], [1.0])
    cut = separate_ideal_dual_subgradient(QueryPoint([0.5], 0.5, [0.5, 0.5]), ctx)
    assert cut.witness == ("prune", 1)
    np.testing.assert_allclose(cut.cz, [0.0, 1.0])


def test_graph_points_are_never_cut():
    rng = np.random.default_rng(21)
    for kind, fam in [("relu", "ReluIdeal"), ("max", "MaxDBox"), ("leaky", "Leaky"), ("clipped", "Clipped")]:
        ctx = random_context(rng, kind, 3, 3)
        for x in ctx.dom.sample(rng, 20):
            q = QueryPoint(x, ctx.value(x), np.eye(ctx.d)[ctx.pattern(x)])
            assert all(c.violation <= 1e-9 for c in SEPARATORS[fam](q, ctx))


def test_project_simplex():
    v = project_simplex([0.5, 0.7, -0.1])
    assert v.sum() == pytest.approx(1.0)
    assert np.all(v >= 0)
    np.testing.assert_allclose(project_simplex([0.2, 0.8]), [0.2, 0.8])
