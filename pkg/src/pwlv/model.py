"""Networks, input domains and the preprocessing that runs before modelling.

A network is a list of dense layers. Every output neuron owns one or more
affine pieces of the layer input plus an activation; a max-of-d neuron owns d
pieces, every other kind owns exactly one. Domains are products of intervals
and probability simplices.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

KINDS = ("linear", "relu", "leaky", "clipped", "max")
IRREDUCIBLE_TOL = 1e-7


class ModelError(ValueError):
    """Invalid network, domain or instance data."""


# ---------------------------------------------------------------------------
# basic types


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)):
            raise ModelError(f"interval bounds must be finite, got [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ModelError(f"interval is empty: lo={self.lo} > hi={self.hi}")

    @property
    def width(self):
        return self.hi - self.lo

    def __iter__(self):
        yield self.lo
        yield self.hi


@dataclass(frozen=True)
class Simplex:
    p: int

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 2:
            raise ModelError(f"simplex block needs p >= 2, got {self.p}")


@dataclass(frozen=True)
class AffineFunc:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))
        if not np.all(np.isfinite(w)) or not np.isfinite(self.bias):
            raise ModelError("affine function has non-finite coefficients")

    def __call__(self, x):
        return np.asarray(x) @ self.weights + self.bias

    @property
    def dim(self):
        return len(self.weights)


@dataclass(frozen=True)
class Activation:
    kind: str
    alpha: float | None = None
    cap: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown activation kind {self.kind!r}")
        if self.kind == "leaky":
            if self.alpha is None or not (0.0 < self.alpha < 1.0):
                raise ModelError(f"leaky alpha must lie strictly inside (0,1), got {self.alpha}")
        if self.kind == "clipped":
            if self.cap is None or not (self.cap > 0.0):
                raise ModelError(f"clipped cap must be positive, got {self.cap}")

    def apply(self, v):
        """Apply to pre-activation values. ``v`` has the pieces on its last axis."""
        v = np.asarray(v, dtype=float)
        if self.kind == "max":
            return v.max(axis=-1)
        v = v[..., 0]
        if self.kind == "linear":
            return v
        if self.kind == "relu":
            return np.maximum(v, 0.0)
        if self.kind == "leaky":
            return np.maximum(v, self.alpha * v)
        return np.clip(v, 0.0, self.cap)

    def apply_interval(self, lo, hi):
        """Image of a pre-activation box (per piece for max) under the activation."""
        if self.kind == "max":
            return float(np.max(lo)), float(np.max(hi))
        lo, hi = float(lo[0]), float(hi[0])
        if self.kind == "linear":
            return lo, hi
        if self.kind == "relu":
            return max(lo, 0.0), max(hi, 0.0)
        if self.kind == "leaky":
            return max(lo, self.alpha * lo), max(hi, self.alpha * hi)
        return min(max(lo, 0.0), self.cap), min(max(hi, 0.0), self.cap)


LINEAR = Activation("linear")


@dataclass(frozen=True)
class Neuron:
    pieces: tuple
    activation: Activation

    def __post_init__(self):
        object.__setattr__(self, "pieces", tuple(self.pieces))
        d = len(self.pieces)
        if self.activation.kind == "max":
            if d < 2:
                raise ModelError("max neuron needs at least 2 pieces")
        elif d != 1:
            raise ModelError(f"{self.activation.kind} neuron takes exactly one affine piece")

    @property
    def kind(self):
        return self.activation.kind

    @property
    def W(self):
        return np.array([p.weights for p in self.pieces])

    @property
    def b(self):
        return np.array([p.bias for p in self.pieces])

    def preact(self, x):
        return np.asarray(x) @ self.W.T + self.b

    def __call__(self, x):
        return self.activation.apply(self.preact(x))


@dataclass(frozen=True)
class Layer:
    neurons: tuple
    in_dim: int

    def __post_init__(self):
        object.__setattr__(self, "neurons", tuple(self.neurons))

    @property
    def out_dim(self):
        return len(self.neurons)

    def __call__(self, x):
        return np.stack([n(x) for n in self.neurons], axis=-1)


@dataclass(frozen=True)
class Network:
    layers: tuple
    input_dim: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ModelError("network must have at least one layer")
        dim = self.input_dim
        for i, layer in enumerate(self.layers, start=1):
            if layer.in_dim != dim:
                raise ModelError(
                    f"dimension mismatch at layer {i}: expects {layer.in_dim} inputs, previous layer gives {dim}"
                )
            for j, nrn in enumerate(layer.neurons):
                for p in nrn.pieces:
                    if p.dim != dim:
                        raise ModelError(f"dimension mismatch at layer {i}, neuron {j}")
            dim = layer.out_dim
        if dim < 1:
            raise ModelError("final layer must output at least one value")

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    def __call__(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def forward_all(self, x):
        """All post-activation values, one array per layer (input included)."""
        out = [np.asarray(x, dtype=float)]
        for layer in self.layers:
            out.append(layer(out[-1]))
        return out

    def nonlinear_neurons(self):
        """(layer, neuron) coordinates of every non-linear neuron, 0-based."""
        return [
            (i, j)
            for i, layer in enumerate(self.layers)
            for j, n in enumerate(layer.neurons)
            if n.kind != "linear"
        ]


# ---------------------------------------------------------------------------
# domains


class Domain:
    """Product of interval and simplex blocks, optionally intersected with a box.

    ``lo``/``hi`` are per-coordinate bounds (simplex coordinates default to
    [0, 1]); ``groups`` lists the coordinate indices of each simplex block.
    """

    def __init__(self, blocks: Sequence, lo=None, hi=None):
        self.blocks = tuple(blocks)
        if not self.blocks:
            raise ModelError("domain needs at least one block")
        blo, bhi, groups, pos = [], [], [], 0
        for blk in self.blocks:
            if isinstance(blk, Interval):
                blo.append(blk.lo)
                bhi.append(blk.hi)
                pos += 1
            elif isinstance(blk, Simplex):
                blo.extend([0.0] * blk.p)
                bhi.extend([1.0] * blk.p)
                groups.append(np.arange(pos, pos + blk.p))
                pos += blk.p
            else:
                raise ModelError(f"unknown domain block {blk!r}")
        self.dim = pos
        self.groups = groups
        self.lo = np.array(blo) if lo is None else np.maximum(np.asarray(lo, float), blo)
        self.hi = np.array(bhi) if hi is None else np.minimum(np.asarray(hi, float), bhi)
        in_group = np.zeros(pos, dtype=bool)
        for g in groups:
            in_group[g] = True
        self.interval_idx = np.flatnonzero(~in_group)
        if np.any(self.lo > self.hi + 1e-12):
            raise ModelError("domain is empty (box bounds cross)")
        for g in groups:
            if self.lo[g].sum() > 1 + 1e-12 or self.hi[g].sum() < 1 - 1e-12:
                raise ModelError("domain is empty (simplex block cannot sum to one)")

    @classmethod
    def box(cls, lo, hi):
        return cls([Interval(float(a), float(b)) for a, b in zip(lo, hi)])

    @property
    def is_box(self):
        return not self.groups

    def restrict(self, lo, hi):
        """Intersect with the box [lo, hi]."""
        return Domain(self.blocks, np.maximum(self.lo, lo), np.minimum(self.hi, hi))

    def intervals(self):
        return [Interval(float(a), float(b)) for a, b in zip(self.lo, self.hi)]

    def contains(self, x, tol=1e-9):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            return False
        if np.any(x < self.lo - tol) or np.any(x > self.hi + tol):
            return False
        return all(abs(x[g].sum() - 1.0) <= tol for g in self.groups)

    def maximize(self, w):
        """Exact ``max w.x`` over the domain and a maximizer.

        Interval coordinates go to the better end; each simplex block is a
        fractional knapsack: start at the lower bounds and pour the remaining
        mass into the largest weights first.
        """
        w = np.asarray(w, dtype=float)
        x = np.where(w >= 0, self.hi, self.lo).astype(float)
        for g in self.groups:
            xs = self.lo[g].copy()
            mass = 1.0 - xs.sum()
            for t in np.argsort(-w[g], kind="stable"):
                add = min(self.hi[g][t] - xs[t], mass)
                xs[t] += add
                mass -= add
                if mass <= 0:
                    break
            x[g] = xs
        return float(w @ x), x

    def minimize(self, w):
        val, x = self.maximize(-np.asarray(w, dtype=float))
        return -val, x

    def polytope(self):
        """(A_eq, b_eq, lo, hi) describing the domain over x alone."""
        A = np.zeros((len(self.groups), self.dim))
        for r, g in enumerate(self.groups):
            A[r, g] = 1.0
        return A, np.ones(len(self.groups)), self.lo.copy(), self.hi.copy()

    def sample(self, rng, n):
        """``n`` random points of the domain (uniform on intervals)."""
        X = rng.uniform(self.lo, self.hi, size=(n, self.dim))
        for g in self.groups:
            lo, hi = self.lo[g], self.hi[g]
            pts = np.empty((n, len(g)))
            for r in range(n):
                # convex combination of a few random greedy vertices
                k = 3
                lam = rng.dirichlet(np.ones(k))
                acc = np.zeros(len(g))
                for t in range(k):
                    sub = Domain([Simplex(len(g))], lo, hi)
                    _, v = sub.maximize(rng.normal(size=len(g)))
                    acc += lam[t] * v
                pts[r] = acc
            X[:, g] = pts
        return X

    def to_json(self):
        out = []
        for blk in self.blocks:
            if isinstance(blk, Interval):
                out.append({"interval": [blk.lo, blk.hi]})
            else:
                out.append({"simplex": blk.p})
        return out

    def __repr__(self):
        return f"Domain(dim={self.dim}, blocks={len(self.blocks)}, simplices={len(self.groups)})"


@dataclass(frozen=True)
class VerificationInstance:
    """An infinity-norm ball around ``center`` and the output objective.

    With labels the objective is the target logit minus the source logit; a
    positive optimum is a counterexample to robustness. ``weights`` replaces
    the label pair by an arbitrary objective over the outputs.
    """

    center: np.ndarray
    epsilon: float
    source: int | None = None
    target: int | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float).reshape(-1))
        if self.epsilon < 0 or not np.isfinite(self.epsilon):
            raise ModelError("epsilon must be finite and nonnegative")
        if self.weights is not None:
            object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float).reshape(-1))
            if not np.all(np.isfinite(self.weights)):
                raise ModelError("objective weights must be finite")
        elif self.source is None or self.target is None:
            raise ModelError("instance needs source and target labels or objective weights")
        elif self.source == self.target:
            raise ModelError("source and target labels must differ")

    def check(self, net: Network, dom: Domain):
        if len(self.center) != net.input_dim:
            raise ModelError(f"center has length {len(self.center)}, network expects {net.input_dim}")
        if self.weights is not None:
            if len(self.weights) != net.output_dim:
                raise ModelError(f"objective has {len(self.weights)} weights, network has {net.output_dim} outputs")
        else:
            for lab in (self.source, self.target):
                if not 0 <= lab < net.output_dim:
                    raise ModelError(f"label {lab} outside the output layer (size {net.output_dim})")
        if not dom.contains(self.center, tol=1e-9):
            raise ModelError("center lies outside the declared domain")

    def effective_domain(self, dom: Domain) -> Domain:
        """The epsilon ball intersected with the declared domain."""
        return dom.restrict(self.center - self.epsilon, self.center + self.epsilon)

    def objective(self, net: Network):
        """Dense output-space objective."""
        if self.weights is not None:
            return self.weights.copy()
        c = np.zeros(net.output_dim)
        c[self.target] += 1.0
        c[self.source] -= 1.0
        return c


# ---------------------------------------------------------------------------
# ingestion


def _parse_domain(spec, dim):
    blocks = []
    for t, blk in enumerate(spec):
        if "interval" in blk:
            lo, hi = blk["interval"]
            try:
                blocks.append(Interval(float(lo), float(hi)))
            except ModelError as exc:
                raise ModelError(f"domain block {t}: {exc}") from None
        elif "simplex" in blk:
            blocks.append(Simplex(int(blk["simplex"])))
        else:
            raise ModelError(f"domain block {t}: expected 'interval' or 'simplex'")
    d = Domain(blocks)
    if d.dim != dim:
        raise ModelError(f"domain covers {d.dim} coordinates but input_dim is {dim}")
    return d


def _parse_activation(spec):
    kind = spec.get("kind", "linear")
    return Activation(kind, spec.get("alpha"), spec.get("cap")), int(spec.get("pieces", 1))


def network_from_dict(data) -> tuple[Network, Domain]:
    """Build a network and its declared domain from a parsed document."""
    try:
        dim = int(data["input_dim"])
        layer_specs = data["layers"]
    except (KeyError, TypeError) as exc:
        raise ModelError(f"network document is missing field {exc}") from None
    if not layer_specs:
        raise ModelError("network must have at least one layer")
    dom = _parse_domain(data.get("domain", [{"interval": [0.0, 1.0]}] * dim), dim)
    layers = []
    prev = dim
    for i, spec in enumerate(layer_specs, start=1):
        W = np.asarray(spec["weights"], dtype=float)
        b = np.asarray(spec["bias"], dtype=float).reshape(-1)
        if W.ndim != 2:
            raise ModelError(f"layer {i}: weights must be a matrix")
        if not np.all(np.isfinite(W)):
            r, c = np.argwhere(~np.isfinite(W))[0]
            raise ModelError(f"non-finite weight at layer {i}, row {r}, column {c}")
        if not np.all(np.isfinite(b)):
            raise ModelError(f"non-finite bias at layer {i}, row {int(np.argmax(~np.isfinite(b)))}")
        if W.shape[1] != prev:
            raise ModelError(f"dimension mismatch at layer {i}: weights have {W.shape[1]} columns, expected {prev}")
        if len(b) != W.shape[0]:
            raise ModelError(f"dimension mismatch at layer {i}: {W.shape[0]} weight rows but {len(b)} biases")
        act_spec = spec.get("activation", {"kind": "linear"})
        if isinstance(act_spec, list):
            acts = [_parse_activation(a) for a in act_spec]
        else:
            a = _parse_activation(act_spec)
            per = a[1] if a[0].kind == "max" else 1
            if W.shape[0] % per:
                raise ModelError(f"layer {i}: {W.shape[0]} rows is not a multiple of {per} pieces")
            acts = [a] * (W.shape[0] // per)
        neurons, row = [], 0
        for j, (act, d) in enumerate(acts):
            d = d if act.kind == "max" else 1
            if row + d > W.shape[0]:
                raise ModelError(f"layer {i}, neuron {j}: not enough weight rows")
            pieces = [AffineFunc(W[row + t], b[row + t]) for t in range(d)]
            try:
                neurons.append(Neuron(pieces, act))
            except ModelError as exc:
                raise ModelError(f"layer {i}, neuron {j}: {exc}") from None
            row += d
        if row != W.shape[0]:
            raise ModelError(f"layer {i}: {W.shape[0] - row} weight rows left unassigned")
        layers.append(Layer(neurons, prev))
        prev = len(neurons)
    return Network(layers, dim), dom


def load_network(text: str) -> tuple[Network, Domain]:
    """Parse a JSON network document (see README for the schema)."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"network file is not valid JSON: {exc}") from None
    return network_from_dict(data)


def load_instance(text: str) -> VerificationInstance:
    try:
        data = json.loads(text)
        if "objective" in data:
            return VerificationInstance(np.asarray(data["center"], dtype=float), float(data["epsilon"]),
                                        weights=np.asarray(data["objective"], dtype=float))
        return VerificationInstance(
            np.asarray(data["center"], dtype=float),
            float(data["epsilon"]),
            int(data["source_label"]),
            int(data["target_label"]),
        )
    except json.JSONDecodeError as exc:
        raise ModelError(f"instance file is not valid JSON: {exc}") from None
    except (KeyError, TypeError) as exc:
        raise ModelError(f"instance document is missing field {exc}") from None


def network_to_dict(net: Network, dom: Domain) -> dict:
    layers = []
    for layer in net.layers:
        rows, bias, acts = [], [], []
        for n in layer.neurons:
            for p in n.pieces:
                rows.append(p.weights.tolist())
                bias.append(p.bias)
            a = {"kind": n.kind}
            if n.kind == "leaky":
                a["alpha"] = n.activation.alpha
            if n.kind == "clipped":
                a["cap"] = n.activation.cap
            if n.kind == "max":
                a["pieces"] = len(n.pieces)
            acts.append(a)
        layers.append({"weights": rows, "bias": bias, "activation": acts})
    return {"input_dim": net.input_dim, "domain": dom.to_json(), "layers": layers}


# ---------------------------------------------------------------------------
# bounds


def affine_bounds(f: AffineFunc, box: Sequence[Interval]) -> Interval:
    """Exact range of ``f`` over a box: b + sum_i min/max(w_i L_i, w_i U_i)."""
    if len(box) != f.dim:
        raise ModelError(f"box has {len(box)} coordinates, function has {f.dim}")
    lo = np.array([iv.lo for iv in box])
    hi = np.array([iv.hi for iv in box])
    w = f.weights
    a, b = w * lo, w * hi
    return Interval(f.bias + float(np.minimum(a, b).sum()), f.bias + float(np.maximum(a, b).sum()))


@dataclass
class NeuronBounds:
    pre: list  # Interval per piece
    post: Interval


@dataclass
class BoundsTable:
    """Per-layer, per-neuron bounds; ``layers[i][j]`` is a NeuronBounds."""

    layers: list = field(default_factory=list)

    def __getitem__(self, key):
        i, j = key
        return self.layers[i][j]

    def post_box(self, i):
        """Intervals of the outputs of layer ``i`` (0-based)."""
        return [nb.post for nb in self.layers[i]]


def propagate_bounds(net: Network, dom: Domain, lp_tighten: bool = False) -> BoundsTable:
    """Interval bound propagation, exact on the first layer.

    First-layer pre-activations are optimized exactly over the domain
    (which may include simplex blocks); later layers use interval arithmetic
    on the previous layer's output box. With ``lp_tighten`` every unstable
    neuron's pre-activation bounds are then tightened by LP over the big-M
    relaxation of the layers before it.
    """
    if dom.dim != net.input_dim:
        raise ModelError(f"domain has {dom.dim} coordinates, network expects {net.input_dim}")
    table = BoundsTable()
    box = dom.intervals()
    for i, layer in enumerate(net.layers):
        row = []
        for nrn in layer.neurons:
            pre = []
            for p in nrn.pieces:
                if i == 0:
                    hi, _ = dom.maximize(p.weights)
                    lo, _ = dom.minimize(p.weights)
                    pre.append(Interval(lo + p.bias, hi + p.bias))
                else:
                    pre.append(affine_bounds(p, box))
            if lp_tighten and i > 0 and nrn.kind != "linear":
                from pwlv.formulation import tighten_preactivation

                pre = [tighten_preactivation(net, dom, table, i, p, iv) for p, iv in zip(nrn.pieces, pre)]
            lo = np.array([iv.lo for iv in pre])
            hi = np.array([iv.hi for iv in pre])
            row.append(NeuronBounds(pre, Interval(*nrn.activation.apply_interval(lo, hi))))
        table.layers.append(row)
        box = [nb.post for nb in row]
    return table


def _stable_replacement(nrn: Neuron, nb: NeuronBounds):
    """A cheaper neuron equal to ``nrn`` on the bounded range, or None."""
    kind = nrn.kind
    if kind == "linear":
        return None
    if kind == "max":
        lo = np.array([iv.lo for iv in nb.pre])
        hi = np.array([iv.hi for iv in nb.pre])
        keep = [k for k in range(len(nrn.pieces)) if not np.any(np.delete(lo, k) >= hi[k])]
        # several pieces may tie for dominance; keep the first
        if not keep:
            keep = [int(np.argmax(lo))]
        if len(keep) == 1:
            return Neuron([nrn.pieces[keep[0]]], LINEAR)
        if len(keep) < len(nrn.pieces):
            return Neuron([nrn.pieces[k] for k in keep], nrn.activation)
        return None
    f = nrn.pieces[0]
    lo, hi = nb.pre[0].lo, nb.pre[0].hi
    zero = AffineFunc(np.zeros_like(f.weights), 0.0)
    if kind == "relu":
        if lo >= 0:
            return Neuron([f], LINEAR)
        if hi <= 0:
            return Neuron([zero], LINEAR)
    elif kind == "leaky":
        a = nrn.activation.alpha
        if lo >= 0:
            return Neuron([f], LINEAR)
        if hi <= 0:
            return Neuron([AffineFunc(a * f.weights, a * f.bias)], LINEAR)
    elif kind == "clipped":
        C = nrn.activation.cap
        if hi <= 0:
            return Neuron([zero], LINEAR)
        if lo >= C:
            return Neuron([AffineFunc(np.zeros_like(f.weights), C)], LINEAR)
        if lo >= 0 and hi <= C:
            return Neuron([f], LINEAR)
    return None


def linearize_stable_neurons(net: Network, bounds: BoundsTable) -> Network:
    """Replace neurons whose activation pattern is fixed on the domain.

    A ReLU with pre-activation lo >= 0 becomes the identity of its input map,
    one with hi <= 0 becomes the zero map; leaky and clipped units are
    treated the same way, and max neurons drop pieces that are dominated by
    the bounds of another piece.
    """
    layers = []
    for i, layer in enumerate(net.layers):
        neurons = []
        for j, nrn in enumerate(layer.neurons):
            rep = _stable_replacement(nrn, bounds[i, j])
            neurons.append(nrn if rep is None else rep)
        layers.append(Layer(neurons, layer.in_dim))
    return Network(layers, net.input_dim)


def check_irreducible(pieces: Sequence[AffineFunc], dom: Domain, tol: float = IRREDUCIBLE_TOL):
    """Flag each piece that is strictly maximal somewhere on the domain.

    For piece k solve ``max D s.t. x in dom, D <= f^k(x) - f^l(x)`` for all
    l != k and report ``D* > tol``. Two pieces on a box use the closed form.
    """
    pieces = list(pieces)
    if len(pieces) < 2:
        raise ModelError("irreducibility needs at least two pieces")
    n = pieces[0].dim
    if any(p.dim != n for p in pieces) or n != dom.dim:
        raise ModelError("pieces and domain must share one dimension")
    if len(pieces) == 2 and dom.is_box:
        out = []
        for k in (0, 1):
            f, g = pieces[k], pieces[1 - k]
            diff = AffineFunc(f.weights - g.weights, f.bias - g.bias)
            out.append(affine_bounds(diff, dom.intervals()).hi > tol)
        return out
    return [bool(v > tol) for v in dominance_margins(pieces, dom)]


def dominance_margins(pieces, dom: Domain):
    """``D*`` of the irreducibility LP for every piece (may be negative)."""
    from pwlv.lp import LpStatus, simplex

    W = np.array([p.weights for p in pieces])
    b = np.array([p.bias for p in pieces])
    d, n = W.shape
    Aeq, beq, lo, hi = dom.polytope()
    out = []
    for k in range(d):
        others = [l for l in range(d) if l != k]
        # D - (w^k - w^l) x <= b^k - b^l
        rows = np.hstack([-(W[k] - W[others]), np.ones((d - 1, 1))])
        rhs = b[k] - b[others]
        A = np.vstack([rows, np.hstack([Aeq, np.zeros((len(beq), 1))])])
        senses = ["<="] * (d - 1) + ["="] * len(beq)
        c = np.zeros(n + 1)
        c[-1] = 1.0
        res = simplex(c, A, senses, np.concatenate([rhs, beq]),
                      np.append(lo, -np.inf), np.append(hi, np.inf), maximize=True)
        if res.status is not LpStatus.OPTIMAL:
            raise RuntimeError(f"irreducibility LP for piece {k} ended {res.status.value}")
        out.append(res.objective)
    return out


def prune_unreachable_pieces(nrn: Neuron, dom: Domain):
    """Drop pieces that are never maximal (non-strictly) on the domain.

    Returns the kept piece indices. A piece is dropped only when its region
    is empty, i.e. the dominance LP has a strictly negative optimum.
    """
    marg = dominance_margins(nrn.pieces, dom)
    return [k for k, m in enumerate(marg) if m >= -IRREDUCIBLE_TOL]


def with_activation(nrn: Neuron, act: Activation) -> Neuron:
    return replace(nrn, activation=act)
