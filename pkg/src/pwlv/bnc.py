"""A small branch-and-cut solver for :class:`~pwlv.formulation.MipModel`.

Each node solves the LP relaxation under its branching bounds plus every
cut in the global pool, runs a few separation rounds over the registered
cut families and then either prunes, records an incumbent or branches on
the most fractional binary. Nodes are explored best-bound first, with a
depth-first plunge until the first incumbent is known.
"""
from __future__ import annotations

import heapq
import itertools
import time
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from pwlv.cuts import VIOLATION_TOL
from pwlv.lp import LpNumericError, LpStatus, simplex

INT_TOL = 1e-6
GAP_TOL = 1e-6


@dataclass
class SolveParams:
    node_limit: int = 100_000
    time_limit: float = 600.0
    root_rounds: int = 10
    node_rounds: int = 2
    max_cuts: int = 1
    tol: float = VIOLATION_TOL
    branching: str = "most_fractional"
    search: str = "best_bound"
    deterministic: bool = True
    heuristic: bool = True

    def __post_init__(self):
        if self.node_limit <= 0 or self.time_limit <= 0:
            raise ValueError("node and time limits must be positive")
        if self.root_rounds < 0 or self.node_rounds < 0 or self.max_cuts < 1:
            raise ValueError("cut rounds must be non-negative and max_cuts at least 1")
        if self.branching not in ("most_fractional", "first_fractional"):
            raise ValueError(f"unknown branching rule {self.branching!r}")
        if self.search not in ("best_bound", "depth_first"):
            raise ValueError(f"unknown search strategy {self.search!r}")


@dataclass
class MipResult:
    """Outcome of :func:`solve_mip`; values are in the model's own sense.

    ``status`` is one of "optimal", "bounded" (time limit or LP trouble),
    "infeasible" or "node_limit".
    """

    status: str
    incumbent: float | None
    x: np.ndarray | None
    bound: float
    gap: float
    nodes: int
    cuts_by_family: dict = field(default_factory=dict)
    time: float = 0.0
    root_bound_initial: float = np.nan
    root_bound: float = np.nan

    @property
    def optimal(self):
        return self.status == "optimal"

    def to_record(self):
        return {
            "status": self.status,
            "incumbent": self.incumbent,
            "bound": self.bound,
            "gap": self.gap,
            "nodes": self.nodes,
            "cuts_by_family": dict(sorted(self.cuts_by_family.items())),
            "time": round(self.time, 6),
            "root_bound_initial": self.root_bound_initial,
            "root_bound": self.root_bound,
        }


class _Solver:
    def __init__(self, model, params: SolveParams):
        self.model = model
        self.params = params
        self.sign = 1.0 if model.objective_sense == "max" else -1.0
        self.c = self.sign * model.objective_vector()
        self.const = self.sign * model.objective_const
        self.A, self.senses, self.b = model.dense_rows()
        self.lo0, self.hi0 = model.bounds()
        self.bins = model.binaries()
        self.pool = []  # LinearConstraint rows
        self.pool_keys = set()
        self.cut_rows = np.zeros((0, model.num_vars))
        self.cut_senses = []
        self.cut_rhs = np.zeros(0)
        self.cuts_by_family = Counter()
        self.incumbent = -np.inf
        self.inc_x = None
        self.start = time.perf_counter()

    # LP with the current cut pool
    def lp(self, lo, hi):
        A = np.vstack([self.A, self.cut_rows])
        senses = list(self.senses) + self.cut_senses
        b = np.concatenate([self.b, self.cut_rhs])
        res = simplex(self.c, A, senses, b, lo, hi, maximize=True)
        if res.optimal:
            res.objective += self.const
        return res

    def add_cut(self, fam_idx, fam, cut):
        key = (fam_idx, cut.key())
        if key in self.pool_keys:
            return False
        row = cut.to_constraint(fam.bind, f"cut_{fam.kind}_{len(self.pool)}")
        self.pool_keys.add(key)
        self.pool.append(row)
        vec = np.zeros(self.model.num_vars)
        for i, v in row.coefs:
            vec[i] = v
        self.cut_rows = np.vstack([self.cut_rows, vec])
        self.cut_senses.append(row.sense)
        self.cut_rhs = np.append(self.cut_rhs, row.rhs)
        self.cuts_by_family[fam.kind] += 1
        return True

    def separate(self, sol):
        added = 0
        for idx, fam in enumerate(self.model.families):
            found = fam.separate(fam.query(sol), self.params.tol)
            found.sort(key=lambda c: -c.violation)
            for cut in found[: self.params.max_cuts]:
                added += self.add_cut(idx, fam, cut)
        return added

    def cut_loop(self, lo, hi, rounds, prune_at=-np.inf):
        res = self.lp(lo, hi)
        first = res
        for _ in range(rounds):
            if not res.optimal or res.objective <= prune_at + GAP_TOL:
                break
            if not self.separate(res.x):
                break
            res = self.lp(lo, hi)
        return first, res

    def fractional(self, x):
        if len(self.bins) == 0:
            return None
        vals = x[self.bins]
        frac = np.abs(vals - np.round(vals))
        if frac.max() <= INT_TOL:
            return None
        if self.params.branching == "first_fractional":
            return int(self.bins[np.flatnonzero(frac > INT_TOL)[0]])
        # most fractional: closest to 0.5, ties to the smallest index
        return int(self.bins[np.argmax(frac)])

    def offer(self, value, x):
        if value > self.incumbent + 1e-12:
            self.incumbent = value
            self.inc_x = x.copy()

    def heuristic(self, x, lo, hi):
        """Fix every neuron's binaries by a pattern read off ``x`` and re-solve."""
        if not self.model.neurons:
            return
        patterns = []
        if self.model.pattern_hook is not None:
            patterns.append(self.model.pattern_hook(x))
        patterns.append({key: e.ctx.pattern(x[e.bind.x]) for key, e in self.model.neurons.items()})
        for pat in patterns:
            flo, fhi = lo.copy(), hi.copy()
            for key, e in self.model.neurons.items():
                vals = e.bind.binary_values(pat[key])
                flo[e.bind.z] = vals
                fhi[e.bind.z] = vals
            if np.any(flo > hi + 1e-9) or np.any(fhi < lo - 1e-9):
                continue
            try:
                res = self.lp(flo, fhi)
            except LpNumericError:
                continue
            if res.optimal:
                self.offer(res.objective, res.x)

    def elapsed(self):
        return time.perf_counter() - self.start


def solve_mip(model, params: SolveParams | None = None) -> MipResult:
    """Branch-and-cut; exact within tolerance unless a limit is hit."""
    params = params or SolveParams()
    S = _Solver(model, params)
    counter = itertools.count()
    heap = []  # (-bound, seq, depth, lo, hi)
    plunge = []
    nodes = 0
    lp_trouble = -np.inf  # best bound of nodes abandoned after LP failures
    root_initial = root_final = np.nan
    hit = None

    def push(bound, depth, lo, hi, dive=False):
        item = (-bound, next(counter), depth, lo, hi)
        if dive:
            plunge.append(item)
        else:
            heapq.heappush(heap, item)

    push(np.inf, 0, S.lo0.copy(), S.hi0.copy())
    while heap or plunge:
        if nodes >= params.node_limit:
            hit = "node_limit"
            break
        if S.elapsed() > params.time_limit:
            hit = "bounded"
            break
        if plunge and params.search == "best_bound" and np.isfinite(S.incumbent):
            # the plunge found an incumbent: hand the rest back to best-bound search
            while plunge:
                heapq.heappush(heap, plunge.pop())
        if plunge:
            negb, _, depth, lo, hi = plunge.pop()
        else:
            negb, _, depth, lo, hi = heapq.heappop(heap)
        parent = -negb
        if parent <= S.incumbent + GAP_TOL:
            continue
        nodes += 1
        rounds = params.root_rounds if depth == 0 else params.node_rounds
        try:
            first, res = S.cut_loop(lo, hi, rounds, S.incumbent)
        except LpNumericError:
            lp_trouble = max(lp_trouble, parent)
            continue
        if depth == 0:
            root_initial = first.objective if first.optimal else -np.inf
            root_final = res.objective if res.optimal else -np.inf
        if res.status is LpStatus.INFEASIBLE:
            continue
        if res.status is LpStatus.UNBOUNDED:
            raise ValueError("LP relaxation is unbounded; every variable needs finite bounds")
        bound = min(res.objective, parent)
        if bound <= S.incumbent + GAP_TOL:
            continue
        j = S.fractional(res.x)
        if j is None:
            S.offer(res.objective, res.x)
            continue
        if params.heuristic and (depth == 0 or not np.isfinite(S.incumbent)):
            S.heuristic(res.x, lo, hi)
            if bound <= S.incumbent + GAP_TOL:
                continue
        down_hi = hi.copy()
        down_hi[j] = 0.0
        up_lo = lo.copy()
        up_lo[j] = 1.0
        dive = params.search == "depth_first" or not np.isfinite(S.incumbent)
        children = [(lo, down_hi), (up_lo, hi)]
        if res.x[j] >= 0.5:
            # the preferred child is explored first when plunging
            children.reverse()
        for clo, chi in reversed(children) if dive else children:
            push(bound, depth + 1, clo, chi, dive)

    open_bound = max([-h[0] for h in heap] + [-p[0] for p in plunge] + [lp_trouble], default=-np.inf)
    best = max(open_bound, S.incumbent)
    if hit is None:
        if lp_trouble > S.incumbent + GAP_TOL:
            status = "bounded"
        elif np.isfinite(S.incumbent):
            status = "optimal"
            best = S.incumbent
        else:
            status = "infeasible"
    else:
        status = hit
    inc = S.incumbent if np.isfinite(S.incumbent) else None
    gap = best - S.incumbent if inc is not None else np.inf
    if status == "optimal":
        gap = 0.0
    sg = S.sign
    return MipResult(
        status=status,
        incumbent=None if inc is None else sg * inc,
        x=S.inc_x,
        bound=sg * best,
        gap=float(gap),
        nodes=nodes,
        cuts_by_family=dict(S.cuts_by_family),
        time=S.elapsed(),
        root_bound_initial=sg * root_initial,
        root_bound=sg * root_final,
    )


def root_bound(model, params: SolveParams | None = None) -> float:
    """LP bound after the root separation rounds, without branching."""
    params = params or SolveParams()
    S = _Solver(model, params)
    _, res = S.cut_loop(S.lo0.copy(), S.hi0.copy(), params.root_rounds)
    if res.status is LpStatus.INFEASIBLE:
        return -np.inf * S.sign
    if not res.optimal:
        raise ValueError(f"root LP ended {res.status.value}")
    return S.sign * res.objective
