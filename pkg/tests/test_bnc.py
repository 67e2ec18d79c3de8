import numpy as np
import pytest

from helpers import random_network
from pwlv import oracle
from pwlv.bnc import SolveParams, root_bound, solve_mip
from pwlv.formulation import MipModel, NeuronContext, build_network, neuron_model
from pwlv.lp import solve_lp
from pwlv.model import Domain


def example1(mode):
    ctx = NeuronContext.relu([1.0, 1.0], -1.5, [0.0, 0.0], [1.0, 1.0])
    model, _ = neuron_model(ctx, mode, objective=([0.0, -0.5], 1.0))
    return model


def test_example1_root_and_optimum():
    no_cuts = SolveParams(root_rounds=0, node_rounds=0)
    assert root_bound(example1("bigm"), no_cuts) == pytest.approx(0.25)
    res = solve_mip(example1("bigm"))
    assert res.status == "optimal"
    assert res.incumbent == pytest.approx(0.0, abs=1e-9)
    assert root_bound(example1("bigm_with_cuts")) == pytest.approx(0.0, abs=1e-9)
    res = solve_mip(example1("bigm_with_cuts"))
    assert res.root_bound_initial == pytest.approx(0.25)
    assert res.root_bound == pytest.approx(0.0, abs=1e-9)
    assert res.cuts_by_family.get("ReluIdeal", 0) >= 1


def test_infeasible_model():
    m = MipModel()
    x = m.add_var("x", "B", 0.0, 1.0)
    m.add_row([(x, 1.0)], ">=", 2.0)
    m.set_objective([(x, 1.0)])
    assert solve_mip(m).status == "infeasible"


def test_pure_lp_root_equals_lp():
    m = MipModel()
    a, b = m.add_var("a", "C", 0.0, 3.0), m.add_var("b", "C", 0.0, 3.0)
    m.add_row([(a, 1.0), (b, 2.0)], "<=", 4.0)
    m.set_objective([(a, 1.0), (b, 1.0)])
    assert root_bound(m) == pytest.approx(solve_lp(m).objective)
    assert solve_mip(m).incumbent == pytest.approx(3.5)


def test_minimization_sense():
    m = MipModel()
    x = m.add_var("x", "B", 0.0, 1.0)
    y = m.add_var("y", "C", -3.0, 3.0)
    m.add_row([(y, 1.0), (x, 1.5)], ">=", -1.0)
    m.add_row([(x, 1.0)], ">=", 0.3)
    m.set_objective([(y, 1.0)], sense="min")
    res = solve_mip(m)
    assert res.incumbent == pytest.approx(-2.5)
    assert root_bound(m) == pytest.approx(-2.5)


def test_only_continuous_and_binary_variables():
    from pwlv.formulation import FormulationError

    with pytest.raises(FormulationError, match="kind"):
        MipModel().add_var("n", "I", 0.0, 5.0)


def _net_case(seed):
    rng = np.random.default_rng(seed)
    net = random_network(rng, [2, 4, 3], ("relu", "max", "leaky", "clipped"))
    dom = Domain.box([-1.0, -1.0], [1.0, 1.0])
    return net, dom, rng.normal(size=2)


@pytest.mark.parametrize("seed", range(6))
def test_exact_and_monotone(seed):
    net, dom, c = _net_case(seed)
    exact = oracle.enumerate_activation_optimum(net, dom, c)
    roots = {}
    for mode in ("bigm", "bigm_with_cuts", "extended"):
        nm = build_network(net, dom, None, mode, objective=c)
        res = solve_mip(nm.model)
        assert res.status == "optimal"
        assert res.incumbent == pytest.approx(exact, abs=1e-6)
        assert c @ net(res.x[nm.inputs]) == pytest.approx(exact, abs=1e-6)
        roots[mode] = res.root_bound
    assert roots["bigm"] >= roots["bigm_with_cuts"] - 1e-7 >= exact - 2e-7


def test_deterministic():
    net, dom, c = _net_case(9)
    nm = build_network(net, dom, None, "bigm_with_cuts", objective=c)
    a, b = solve_mip(nm.model).to_record(), solve_mip(nm.model).to_record()
    a.pop("time"), b.pop("time")
    assert a == b


@pytest.mark.parametrize("search", ["best_bound", "depth_first"])
@pytest.mark.parametrize("branching", ["most_fractional", "first_fractional"])
def test_search_options_agree(search, branching):
    net, dom, c = _net_case(4)
    nm = build_network(net, dom, None, "bigm_with_cuts", objective=c)
    res = solve_mip(nm.model, SolveParams(search=search, branching=branching))
    assert res.incumbent == pytest.approx(oracle.enumerate_activation_optimum(net, dom, c), abs=1e-6)


def test_node_limit():
    rng = np.random.default_rng(2)
    net = random_network(rng, [3, 8, 8, 2], ("relu",))
    dom = Domain.box(-np.ones(3), np.ones(3))
    nm = build_network(net, dom, None, "bigm", objective=np.array([1.0, -1.0]), preprocess=False)
    res = solve_mip(nm.model, SolveParams(node_limit=1, root_rounds=0, heuristic=False))
    assert res.status in ("node_limit", "optimal")
    assert res.nodes <= 1
    if res.status == "node_limit":
        assert res.bound >= oracle.enumerate_activation_optimum(net, dom, [1.0, -1.0]) - 1e-7


def test_bad_params():
    with pytest.raises(ValueError):
        SolveParams(node_limit=0)
    with pytest.raises(ValueError):
        SolveParams(branching="random")
