"""Command-line entry point.

Exit codes: 0 robust (dual bound below zero), 1 counterexample found,
2 input error, 3 inconclusive (a limit was hit, or the LP solver broke
down), 4 an exhaustive guard was exceeded.
"""
import argparse
import json
import math
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from pwlv import oracle
from pwlv.bnc import SolveParams, root_bound, solve_mip
from pwlv.export import write_lp, write_mps
from pwlv.formulation import FormulationError, build_network
from pwlv.lp import LpNumericError
from pwlv.model import ModelError, load_instance, load_network, propagate_bounds

EXIT_ROBUST, EXIT_COUNTER, EXIT_INPUT, EXIT_OPEN, EXIT_GUARD = 0, 1, 2, 3, 4
FORMULATIONS = {"bigm": "bigm", "extended": "extended", "ideal-cuts": "bigm_with_cuts"}


class InputError(Exception):
    pass


def _read(path):
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror or exc}") from None


def _load(net_path, inst_path=None):
    try:
        net, dom = load_network(_read(net_path))
        inst = None
        if inst_path is not None:
            inst = load_instance(_read(inst_path))
            inst.check(net, dom)
    except ModelError as exc:
        raise InputError(str(exc)) from None
    return net, dom, inst


def _clean(v):
    """JSON-friendly scalars: non-finite floats become strings."""
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else ("inf" if v > 0 else "-inf" if v < 0 else "nan")
    if isinstance(v, np.integer):
        return int(v)
    return v


def _emit_record(rec, stream):
    # one write per record keeps lines whole when workers share a stream
    stream.write(json.dumps(_clean(rec)) + "\n")
    stream.flush()


def _seed(args):
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("PWLV_SEED", "0"))


# ---------------------------------------------------------------------------
# bounds


def _stability(nrn, nb):
    kind = nrn.kind
    if kind == "max":
        los = np.array([iv.lo for iv in nb.pre])
        his = np.array([iv.hi for iv in nb.pre])
        live = [k for k in range(len(his)) if his[k] > np.max(np.delete(los, k), initial=-np.inf)]
        return f"stable (piece {live[0]})" if len(live) == 1 else "unstable"
    lo, hi = nb.pre[0].lo, nb.pre[0].hi
    if kind == "clipped":
        cap = nrn.activation.cap
        if hi <= 0:
            return "always-off"
        if lo >= cap:
            return "always-capped"
        if lo >= 0 and hi <= cap:
            return "always-on"
        return "unstable"
    if hi <= 0:
        return "always-off"
    if lo >= 0:
        return "always-on"
    return "unstable"


def cmd_bounds(args):
    net, dom, inst = _load(args.network, args.instance)
    if inst is not None:
        dom = inst.effective_domain(dom)
    if args.box is not None:
        dom = dom.restrict(np.full(dom.dim, args.box[0]), np.full(dom.dim, args.box[1]))
    table = propagate_bounds(net, dom, lp_tighten=args.lp_tighten)
    rows = []
    for i, layer in enumerate(net.layers):
        for j, nrn in enumerate(layer.neurons):
            if nrn.kind == "linear":
                continue
            nb = table[i, j]
            lo = min(iv.lo for iv in nb.pre)
            hi = max(iv.hi for iv in nb.pre)
            rows.append({"layer": i + 1, "neuron": j, "kind": nrn.kind, "lo": lo, "hi": hi,
                         "status": _stability(nrn, nb)})
    stable = sum(r["status"] != "unstable" for r in rows)
    if args.json:
        for r in rows:
            _emit_record(r, sys.stdout)
    else:
        print(f"{'layer':>5} {'neuron':>6} {'kind':<8} {'M-':>12} {'M+':>12}  status")
        for r in rows:
            print(f"{r['layer']:>5} {r['neuron']:>6} {r['kind']:<8} {r['lo']:>12.6g} {r['hi']:>12.6g}  {r['status']}")
    # with --json stdout stays pure JSON lines and the summary goes to stderr
    summary = sys.stderr if args.json else sys.stdout
    if not rows:
        print("no nonlinear neurons", file=summary)
    else:
        pct = 100.0 * stable / len(rows)
        note = "100% linearized" if stable == len(rows) else f"{pct:.1f}% linearized"
        print(f"{stable} of {len(rows)} nonlinear neurons are stable ({note})", file=summary)
    return EXIT_ROBUST


# ---------------------------------------------------------------------------
# verify


def _params(args):
    return SolveParams(node_limit=args.node_limit, time_limit=args.time_limit,
                       root_rounds=args.root_rounds, node_rounds=args.node_rounds)


def verify_one(net_path, inst_path, formulation, coeff, params, polytope=False, lp_tighten=False):
    """Solve one verification instance; returns (exit code, report record)."""
    net, dom, inst = _load(net_path, inst_path)
    mode = FORMULATIONS[formulation]
    nm = build_network(net, dom, inst, mode=mode, coeff_mode=coeff, polytope=polytope, lp_tighten=lp_tighten)
    res = solve_mip(nm.model, params)
    rec = {"instance": Path(inst_path).stem, "mode": formulation}
    rec.update(res.to_record())
    if res.bound < 0:
        code = EXIT_ROBUST
    elif res.incumbent is not None and res.incumbent >= 0:
        code = EXIT_COUNTER
        point = res.x[nm.inputs]
        rec["counterexample"] = point.tolist()
        rec["counterexample_margin"] = float(inst.objective(net) @ net(point))
    else:
        code = EXIT_OPEN
    rec["exit"] = code
    return code, rec


def _verify_job(job):
    try:
        return verify_one(*job)
    except (InputError, FormulationError, ValueError) as exc:
        return EXIT_INPUT, {"instance": Path(job[1]).stem, "error": str(exc), "exit": EXIT_INPUT}


def cmd_verify(args):
    params = _params(args)
    np.random.seed(_seed(args))
    jobs = [(args.network, p, args.formulation, args.coeff, params, args.polytope, args.lp_tighten)
            for p in args.instance]
    out = open(args.output, "a") if args.output else sys.stdout
    codes = []
    try:
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_verify_job, jobs))
        else:
            results = [_verify_job(job) for job in jobs]
        for code, rec in results:
            if "error" in rec:
                print(f"pwlv: {rec['instance']}: {rec['error']}", file=sys.stderr)
            _emit_record(rec, out)
            codes.append(code)
    finally:
        if out is not sys.stdout:
            out.close()
    for code in (EXIT_INPUT, EXIT_OPEN, EXIT_COUNTER):
        if code in codes:
            return code
    return EXIT_ROBUST


# ---------------------------------------------------------------------------
# emit


def _parse_cuts(text):
    if text == "seeded":
        return None
    m = re.fullmatch(r"enumerate(?:<=|≤|:)(\d+)", text)
    if not m:
        raise InputError(f"--cuts must be 'seeded' or 'enumerate<=N', got {text!r}")
    return int(m.group(1))


def cmd_emit(args):
    limit = _parse_cuts(args.cuts)
    net, dom, inst = _load(args.network, args.instance)
    nm = build_network(net, dom, inst, mode=FORMULATIONS[args.formulation], coeff_mode=args.coeff,
                       polytope=args.polytope)
    model = nm.model
    extra = []
    if limit is not None:
        fams = [f for f in model.families if f.kind in ("ReluIdeal", "MaxDBox", "OneHotRelu", "Leaky", "Clipped")]
        for fam in fams:
            size = oracle.family_size(fam.ctx, fam.kind)
            if size > limit:
                raise oracle.GuardExceeded(f"family {fam.kind} at {fam.name or fam.ctx.coord} has {size} members "
                                           f"(limit {limit})")
        for fam in fams:
            for t, cut in enumerate(oracle.enumerate_family(fam.ctx, fam.kind, guard=limit)):
                extra.append(cut.to_constraint(fam.bind, f"{fam.name}_all_{t}"))
    text = write_mps(model, extra) if args.format == "mps" else write_lp(model, extra)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_ROBUST


# ---------------------------------------------------------------------------
# oracle and cut strength


def cmd_oracle(args):
    net, dom, inst = _load(args.network, args.instance)
    value, x = oracle.enumerate_activation_optimum(net, inst.effective_domain(dom), inst.objective(net),
                                                   return_point=True)
    if args.json:
        _emit_record({"instance": Path(args.instance).stem, "optimum": value,
                      "point": None if x is None else x.tolist()}, sys.stdout)
    else:
        print(f"{value:.12g}")
    return EXIT_ROBUST


def cmd_strength(args):
    params = _params(args)
    for path in args.instance:
        net, dom, inst = _load(args.network, path)
        rec = {"instance": Path(path).stem}
        for label, mode in (("bigm", "bigm"), ("cuts", "bigm_with_cuts"), ("extended", "extended")):
            nm = build_network(net, dom, inst, mode=mode, coeff_mode=args.coeff)
            rec[label] = root_bound(nm.model, params)
        _emit_record(rec, sys.stdout)
    return EXIT_ROBUST


# ---------------------------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="pwlv", description="Strong MIP formulations for piecewise linear networks.")
    sub = ap.add_subparsers(dest="command", required=True)

    def limits(p):
        p.add_argument("--time-limit", type=float, default=600.0)
        p.add_argument("--node-limit", type=int, default=100_000)
        p.add_argument("--root-rounds", type=int, default=10)
        p.add_argument("--node-rounds", type=int, default=2)

    def formulation(p):
        p.add_argument("--formulation", choices=sorted(FORMULATIONS), default="ideal-cuts")
        p.add_argument("--coeff", choices=("paper", "tjeng"), default="paper",
                       help="big-M coefficients for max neurons")
        p.add_argument("--polytope", action="store_true", help="LP-based coefficients over the input polytope")

    p = sub.add_parser("bounds", help="pre-activation bounds and stability per neuron")
    p.add_argument("network")
    p.add_argument("--instance", help="restrict to the instance's epsilon ball")
    p.add_argument("--box", nargs=2, type=float, metavar=("LO", "HI"), help="intersect every coordinate with [LO, HI]")
    p.add_argument("--lp-tighten", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="certify robustness or find a counterexample")
    p.add_argument("network")
    p.add_argument("instance", nargs="+")
    formulation(p)
    limits(p)
    p.add_argument("--lp-tighten", action="store_true")
    p.add_argument("--seed", type=int, default=None, help="defaults to $PWLV_SEED or 0")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--output", help="append report lines to this file")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("emit", help="write the model as MPS or LP")
    p.add_argument("network")
    p.add_argument("instance")
    formulation(p)
    p.add_argument("--format", choices=("mps", "lp"), default="mps")
    p.add_argument("--cuts", default="seeded", help="'seeded' or 'enumerate<=N'")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_emit)

    p = sub.add_parser("oracle", help="exact optimum by activation enumeration")
    p.add_argument("network")
    p.add_argument("instance")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("strength", help="root bounds of the three formulations")
    p.add_argument("network")
    p.add_argument("instance", nargs="+")
    p.add_argument("--coeff", choices=("paper", "tjeng"), default="paper")
    limits(p)
    p.set_defaults(func=cmd_strength)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except oracle.GuardExceeded as exc:
        print(f"pwlv: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except LpNumericError as exc:
        print(f"pwlv: LP failure: {exc}", file=sys.stderr)
        return EXIT_OPEN
    except (InputError, FormulationError, ValueError) as exc:
        print(f"pwlv: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
