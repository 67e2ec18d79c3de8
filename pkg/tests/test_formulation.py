import numpy as np
import pytest

from helpers import Relaxation, random_context, random_network
from pwlv.formulation import (
    FormulationError,
    NeuronContext,
    box_coefficients,
    build_network,
    neuron_model,
    polytope_coefficients,
)
from pwlv.lp import solve_lp
from pwlv.model import AffineFunc, Domain, Interval, Simplex, VerificationInstance


def example1():
    return NeuronContext.relu([1.0, 1.0], -1.5, [0.0, 0.0], [1.0, 1.0])


def _row_dict(row):
    return dict(row.coefs), row.sense, row.rhs


def test_example1_bigm_rows():
    model, bind = neuron_model(example1(), "bigm")
    assert [v.name for v in model.vars] == ["x_0_0", "x_0_1", "y_1_0", "z_1_0_0"]
    assert model.binaries().tolist() == [3]
    rows = {r.name: _row_dict(r) for r in model.rows}
    # y >= x1 + x2 - 1.5
    assert rows["n_1_0_lo"] == ({0: -1.0, 1: -1.0, 2: 1.0}, ">=", -1.5)
    # y <= x1 + x2 - 1.5 + 1.5 (1 - z)
    assert rows["n_1_0_up"] == ({0: -1.0, 1: -1.0, 2: 1.0, 3: 1.5}, "<=", 0.0)
    # y <= 0.5 z
    assert rows["n_1_0_on"] == ({2: 1.0, 3: -0.5}, "<=", 0.0)
    assert rows["n_1_0_nn"] == ({2: 1.0}, ">=", 0.0)


def test_example1_big_m_values():
    ctx = example1()
    assert ctx.f_bounds == pytest.approx((-1.5, 0.5))


def test_degenerate_zero_lower_bound_still_emits_block():
    ctx = NeuronContext.relu([1.0], 0.0, [0.0], [1.0])
    model, _ = neuron_model(ctx, "bigm")
    assert len(model.rows) == 4


def test_example2_point_is_feasible_for_big_m():
    ctx = NeuronContext.relu([1.0, 1.0], 0.0, [-1.0, -1.0], [1.0, 1.0])
    model, bind = neuron_model(ctx, "bigm")
    sol = np.zeros(model.num_vars)
    sol[bind.x] = [1.0, -1.0]
    sol[bind.y] = 1.0
    sol[bind.z] = 0.5
    assert model.max_violation(sol) <= 1e-12


def test_extended_adds_a_copy_of_the_inputs():
    a, _ = neuron_model(example1(), "bigm")
    b, _ = neuron_model(example1(), "extended")
    assert b.num_vars == a.num_vars + 2


@pytest.mark.parametrize("seed", range(20))
def test_tight_coefficients_dominated_by_decoupled(seed):
    rng = np.random.default_rng(seed)
    ctx = random_context(rng, "max", int(rng.integers(1, 5)), int(rng.integers(2, 5)))
    tight, decoupled = box_coefficients(ctx, "paper"), box_coefficients(ctx, "tjeng")
    assert np.all(tight <= decoupled + 1e-12)
    assert np.all(np.diag(tight) == 0)


@pytest.mark.parametrize("seed", range(20))
def test_polytope_coefficients_match_box_for_two_pieces(seed):
    rng = np.random.default_rng(seed)
    ctx = random_context(rng, "max", int(rng.integers(1, 5)), 2)
    kept, Np, _ = polytope_coefficients(ctx)
    np.testing.assert_allclose(Np, box_coefficients(ctx)[np.ix_(kept, kept)], atol=1e-8)


def test_polytope_coefficients_can_be_tighter_for_three_pieces():
    # pieces x, -x, 0.5 on [-1, 1]: the box form overestimates over the regions
    ctx = NeuronContext.max_of([[1.0], [-1.0], [0.0]], [0.0, 0.0, 0.5], [-1.0], [1.0])
    kept, Np, _ = polytope_coefficients(ctx)
    assert kept.tolist() == [0, 1, 2]
    assert np.all(Np <= box_coefficients(ctx) + 1e-12)
    assert np.any(Np < box_coefficients(ctx) - 1e-6)


def test_polytope_drops_unreachable_pieces():
    ctx = NeuronContext.max_of([[1.0], [1.0]], [0.0, -1.0], [0.0], [1.0])
    kept, _, _ = polytope_coefficients(ctx)
    assert kept.tolist() == [0]


def _graph_point(model, bind, ctx, x):
    sol = np.zeros(model.num_vars)
    sol[bind.x] = x
    sol[bind.y] = ctx.value(x)
    k = ctx.pattern(x)
    sol[bind.z] = bind.binary_values(k)
    return sol


@pytest.mark.parametrize("kind", ["relu", "max", "leaky", "clipped"])
@pytest.mark.parametrize("coeff", ["paper", "tjeng"])
def test_graph_points_are_feasible(kind, coeff):
    """Every (x, g(x), e^k) is feasible for the big-M block (extended aux aside)."""
    rng = np.random.default_rng([ord(kind[0]), ord(coeff[0])])
    for _ in range(10):
        ctx = random_context(rng, kind, int(rng.integers(1, 4)), 3)
        model, bind = neuron_model(ctx, "bigm", coeff)
        for x in ctx.dom.sample(rng, 20):
            assert model.max_violation(_graph_point(model, bind, ctx, x)) <= 1e-9


@pytest.mark.parametrize("kind", ["relu", "max", "leaky", "clipped"])
def test_relaxations_contain_the_graph(kind):
    """The LP over every formulation mode is at least the best graph value."""
    rng = np.random.default_rng(7)
    for _ in range(8):
        ctx = random_context(rng, kind, 2, 3)
        cx, cy = rng.normal(size=2), rng.normal()
        best = max(cx @ x + cy * ctx.value(x) for x in ctx.dom.sample(rng, 300))
        for mode in ("bigm", "extended"):
            assert Relaxation(ctx, mode=mode).solve(cx, cy).objective >= best - 1e-9


def test_extended_formulation_is_ideal_for_relu():
    rng = np.random.default_rng(11)
    for _ in range(10):
        ctx = random_context(rng, "relu", 3)
        rel = Relaxation(ctx, mode="extended")
        for _ in range(20):
            res = rel.solve(rng.normal(size=3), rng.normal(), rng.normal(size=2))
            z = res.x[rel.bind.z]
            assert np.abs(z - np.round(z)).max() <= 1e-7


def test_onehot_neuron_uses_simplex_block():
    dom = Domain([Simplex(3), Simplex(2)])
    ctx = NeuronContext.single("relu", AffineFunc([1.0, -1.0, 0.5, 2.0, -2.0], 0.1), dom)
    model, bind = neuron_model(ctx, "bigm_with_cuts")
    assert [f.kind for f in model.families] == ["OneHotRelu"]
    assert any(r.name == "simplex_0_0" for r in model.rows)


def test_clipped_requires_positive_cap():
    ctx = NeuronContext.single("clipped", AffineFunc([1.0], 0.0), Domain.box([0.0], [1.0]), cap=0.0)
    with pytest.raises(FormulationError, match="cap"):
        neuron_model(ctx, "bigm")


def test_unknown_mode_rejected():
    net = random_network(np.random.default_rng(0), [2, 2])
    with pytest.raises(FormulationError):
        build_network(net, Domain.box([0, 0], [1, 1]), mode="nope")


def test_network_naming_and_objective():
    rng = np.random.default_rng(4)
    net = random_network(rng, [2, 3], ("relu",), n_out=2)
    dom = Domain.box([-1, -1], [1, 1])
    inst = VerificationInstance(np.zeros(2), 1.0, 0, 1)
    nm = build_network(net, dom, inst, "bigm", preprocess=False)
    names = [v.name for v in nm.model.vars]
    assert names[:2] == ["x_0_0", "x_0_1"]
    assert "y_1_0" in names and "z_1_0_0" in names and "y_2_1" in names
    # maximize target minus source logit
    assert nm.model.objective == {nm.outputs[0]: -1.0, nm.outputs[1]: 1.0}


@pytest.mark.parametrize("mode", ["bigm", "bigm_with_cuts", "extended"])
def test_network_lp_bounds_every_sample(mode):
    rng = np.random.default_rng(5)
    net = random_network(rng, [2, 4, 3], ("relu", "max", "leaky", "clipped"))
    dom = Domain.box([-1, -1], [1, 1])
    c = rng.normal(size=2)
    nm = build_network(net, dom, None, mode, objective=c)
    lp = solve_lp(nm.model).objective
    assert lp >= max(c @ net(x) for x in dom.sample(rng, 500)) - 1e-9


def test_binary_values_select_pieces():
    ctx = random_context(np.random.default_rng(0), "clipped", 2)
    model, bind = neuron_model(ctx, "bigm")
    for k in range(3):
        z = np.zeros(model.num_vars)
        z[bind.z] = bind.binary_values(k)
        np.testing.assert_allclose(bind.indicators(z), np.eye(3)[k])


def test_intervals_in_domain_are_respected():
    dom = Domain([Interval(-1.0, 2.0), Simplex(2)])
    ctx = NeuronContext("max", [[1.0, 0.0, 1.0], [-1.0, 1.0, 0.0]], [0.0, 0.2], dom)
    assert ctx.blocks[0].kind == "simplex"
    assert ctx.blocks[1].kind == "interval"
