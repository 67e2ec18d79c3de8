"""Random instance generators shared by the test modules."""
import numpy as np

from pwlv.formulation import NeuronContext
from pwlv.model import (
    LINEAR,
    Activation,
    AffineFunc,
    Domain,
    Layer,
    Network,
    Neuron,
    Simplex,
    VerificationInstance,
)

# "criterion N: PASS|FAIL ..." lines collected for the terminal summary
ACCEPTANCE_LINES = []


def random_box(rng, eta, spread=1.0):
    lo = -spread * rng.uniform(0.1, 1.0, eta)
    hi = spread * rng.uniform(0.1, 1.0, eta)
    return lo, hi


def random_neuron(rng, kind, n_in, d=2):
    if kind == "max":
        pieces = [AffineFunc(rng.normal(size=n_in), rng.normal(scale=0.3)) for _ in range(d)]
        return Neuron(pieces, Activation("max"))
    f = AffineFunc(rng.normal(size=n_in), rng.normal(scale=0.3))
    if kind == "leaky":
        return Neuron([f], Activation("leaky", alpha=0.1))
    if kind == "clipped":
        return Neuron([f], Activation("clipped", cap=0.5))
    if kind == "linear":
        return Neuron([f], LINEAR)
    return Neuron([f], Activation("relu"))


def random_network(rng, widths, kinds=("relu",), n_out=2, d=2):
    """Dense network: hidden layers of the given widths, linear outputs."""
    layers = []
    n_in = widths[0]
    for width in widths[1:]:
        neurons = [random_neuron(rng, kinds[int(rng.integers(len(kinds)))], n_in, d) for _ in range(width)]
        layers.append(Layer(neurons, n_in))
        n_in = width
    layers.append(Layer([random_neuron(rng, "linear", n_in) for _ in range(n_out)], n_in))
    return Network(layers, widths[0])


def random_context(rng, kind, eta, d=2, simplex=False):
    """Context over a random box, or over a product of simplices."""
    if simplex:
        sizes = []
        left = eta
        while left > 0:
            p = int(min(left, rng.integers(2, 4))) if left > 1 else 2
            sizes.append(p)
            left -= p
        dom = Domain([Simplex(p) for p in sizes])
    else:
        dom = Domain.box(*random_box(rng, eta))
    n = dom.dim
    if kind == "max":
        return NeuronContext("max", rng.normal(size=(d, n)), rng.normal(scale=0.3, size=d), dom)
    f = AffineFunc(rng.normal(size=n), rng.normal(scale=0.3))
    return NeuronContext.single(kind, f, dom, alpha=0.2, cap=0.5)


def random_instance(rng, net, dom, eps=0.5):
    center = dom.lo + (dom.hi - dom.lo) * rng.random(dom.dim)
    out = net(center)
    src = int(np.argmax(out))
    tgt = int((src + 1) % len(out))
    return VerificationInstance(center, eps, src, tgt)


def family_of(ctx):
    """Name of the cut family that fully describes ``ctx``'s relaxation."""
    if ctx.kind == "relu" and ctx.is_box:
        return "ReluIdeal"
    if ctx.kind == "leaky":
        return "Leaky"
    if ctx.kind == "clipped":
        return "Clipped"
    if not ctx.is_box and ctx.d == 2:
        return "OneHotRelu"
    return "MaxDBox"


def fix_indicator(bind, k, value):
    """(column, value) pairs that force piece indicator ``k`` to ``value``."""
    row = bind.Z[k]
    j = int(np.flatnonzero(row)[0])
    return [(int(bind.z[j]), (value - bind.z0[k]) / row[j])]


class Relaxation:
    """LP relaxation of one neuron, optionally with a whole cut family.

    The dense rows are built once so that many objectives can be solved
    cheaply.
    """

    def __init__(self, ctx, family=None, mode="bigm"):
        from pwlv.formulation import neuron_model
        from pwlv.oracle import enumerate_family

        self.ctx = ctx
        self.model, self.bind = neuron_model(ctx, mode)
        rows = []
        if family is not None:
            rows = [c.to_constraint(self.bind) for c in enumerate_family(ctx, family)]
        self.A, self.senses, self.b = self.model.dense_rows(rows)
        self.lo, self.hi = self.model.bounds()

    def solve(self, cx, cy, cz=None, fix=()):
        """max cx.x + cy.y + cz.zind with indicator fixings ``(k, value)``."""
        from pwlv.lp import simplex

        bind = self.bind
        cz = np.zeros(self.ctx.d) if cz is None else np.asarray(cz, dtype=float)
        c = np.zeros(self.model.num_vars)
        c[bind.x] += cx
        c[bind.y] += cy
        c[bind.z] += cz @ bind.Z
        lo, hi = self.lo.copy(), self.hi.copy()
        for k, v in fix:
            for j, val in fix_indicator(bind, k, v):
                lo[j] = hi[j] = val
        res = simplex(c, self.A, self.senses, self.b, lo, hi, maximize=True)
        if res.optimal:
            res.objective += float(cz @ bind.z0)
        return res


def random_query(rng, ctx, scale=1.0):
    """A QueryPoint with x in the domain, z in the simplex and y nearby."""
    from pwlv.cuts import QueryPoint

    x = ctx.dom.sample(rng, 1)[0]
    z = rng.dirichlet(np.ones(ctx.d))
    y = float(z @ (ctx.W @ x + ctx.b)) + scale * rng.normal()
    return QueryPoint(x, y, z)
