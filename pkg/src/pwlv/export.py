"""Writers for free-format MPS and CPLEX-style LP files.

Output is byte-stable: rows and columns keep model order, numbers are
written with ``repr`` (shortest round-trip form), and unnamed rows get
positional names ``r<index>``.
"""
import numpy as np


def _num(v):
    v = float(v)
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _row_names(rows):
    names, seen = [], set()
    for i, row in enumerate(rows):
        name = row.name or f"r{i}"
        if name in seen or name == "obj":
            name = f"{name}_r{i}"
        seen.add(name)
        names.append(name)
    return names


def _columns(model, rows):
    cols = [[] for _ in range(model.num_vars)]
    for r, row in enumerate(rows):
        for i, c in row.coefs:
            cols[i].append((r, c))
    return cols


def write_mps(model, extra_rows=(), name="pwlv"):
    """Free-format MPS text for ``model`` plus ``extra_rows``."""
    rows = list(model.rows) + list(extra_rows)
    rnames = _row_names(rows)
    sense_code = {"<=": "L", ">=": "G", "=": "E"}
    out = [f"NAME {name}", "OBJSENSE", "    MAX" if model.objective_sense == "max" else "    MIN", "ROWS", " N obj"]
    out += [f" {sense_code[row.sense]} {n}" for row, n in zip(rows, rnames)]
    out.append("COLUMNS")
    cols = _columns(model, rows)
    in_int = False
    marker = 0
    for v in model.vars:
        is_int = v.kind == "B"
        if is_int != in_int:
            tag = "'INTORG'" if is_int else "'INTEND'"
            out.append(f"    MARKER{marker} 'MARKER' {tag}")
            marker += 1
            in_int = is_int
        entries = []
        if v.index in model.objective:
            entries.append(("obj", model.objective[v.index]))
        entries += [(rnames[r], c) for r, c in cols[v.index]]
        if not entries:
            # keep every column visible so bounds have something to refer to
            entries.append(("obj", 0.0))
        out += [f"    {v.name} {rn} {_num(c)}" for rn, c in entries]
    if in_int:
        out.append(f"    MARKER{marker} 'MARKER' 'INTEND'")
    out.append("RHS")
    if model.objective_const:
        out.append(f"    RHS obj {_num(-model.objective_const)}")
    out += [f"    RHS {n} {_num(row.rhs)}" for row, n in zip(rows, rnames) if row.rhs != 0.0]
    out.append("BOUNDS")
    for v in model.vars:
        if v.kind == "B" and v.lo == 0.0 and v.hi == 1.0:
            out.append(f" BV BND {v.name}")
            continue
        if v.lo == v.hi:
            out.append(f" FX BND {v.name} {_num(v.lo)}")
            continue
        out.append(f" MI BND {v.name}" if np.isneginf(v.lo) else f" LO BND {v.name} {_num(v.lo)}")
        if np.isfinite(v.hi):
            out.append(f" UP BND {v.name} {_num(v.hi)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def _lp_expr(terms, names):
    parts = []
    for i, c in terms:
        sign = "-" if c < 0 else "+"
        parts.append(f"{sign} {_num(abs(c))} {names[i]}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def write_lp(model, extra_rows=()):
    """Human-readable LP-format text for ``model`` plus ``extra_rows``."""
    rows = list(model.rows) + list(extra_rows)
    rnames = _row_names(rows)
    names = [v.name for v in model.vars]
    out = ["Maximize" if model.objective_sense == "max" else "Minimize"]
    obj = _lp_expr(sorted(model.objective.items()), names)
    if model.objective_const:
        c = model.objective_const
        obj += f" {'-' if c < 0 else '+'} {_num(abs(c))}"
    out.append(f" obj: {obj}")
    out.append("Subject To")
    for row, n in zip(rows, rnames):
        out.append(f" {n}: {_lp_expr(row.coefs, names)} {row.sense} {_num(row.rhs)}")
    out.append("Bounds")
    for v in model.vars:
        if v.kind == "B":
            continue
        lo = "-inf" if np.isneginf(v.lo) else _num(v.lo)
        hi = "+inf" if np.isposinf(v.hi) else _num(v.hi)
        out.append(f" {lo} <= {v.name} <= {hi}")
    bins = [v.name for v in model.vars if v.kind == "B"]
    if bins:
        out.append("Binaries")
        out += [f" {b}" for b in bins]
    out.append("End")
    return "\n".join(out) + "\n"
