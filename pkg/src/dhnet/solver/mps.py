"""MPS and LP-format file exchange.

The writer lays fields out on the fixed-format column grid; names longer
than eight characters simply push later fields right, which every
free-format reader (HiGHS, CPLEX, Gurobi, CBC) accepts. The parser is
whitespace-based and therefore reads both flavours.
"""

from __future__ import annotations

import io
import math
import os
import re
from typing import IO, Iterable

from .problem import INF, MilpProblem

_SENSE_CODE = {"<=": "L", ">=": "G", "==": "E"}
_CODE_SENSE = {v: k for k, v in _SENSE_CODE.items()}


class MpsError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


def _num(v: float) -> str:
    if v == int(v) and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def _field_line(code: str, name: str, *rest: str) -> str:
    head = f" {code:<2} {name:<8}"
    out = head
    for k, item in enumerate(rest):
        if k % 2 == 0:
            out += f"  {item:<8}"
        else:
            out += f"  {item:>12}"
    return out.rstrip()


def _open_sink(sink):
    if isinstance(sink, (str, os.PathLike)):
        return open(sink, "w", encoding="ascii"), True
    return sink, False


def write_mps(problem: MilpProblem, sink: str | os.PathLike | IO[str]) -> None:
    """Write ``problem`` as MPS. Columns and rows are emitted in name order."""
    fh, close = _open_sink(sink)
    try:
        fh.write("".join(_mps_lines(problem)))
    finally:
        if close:
            fh.close()


def mps_string(problem: MilpProblem) -> str:
    buf = io.StringIO()
    write_mps(problem, buf)
    return buf.getvalue()


def _mps_lines(problem: MilpProblem) -> Iterable[str]:
    obj_name = "OBJ"
    while obj_name in set(problem.row_names):
        obj_name += "_"
    row_order = sorted(range(problem.num_rows), key=lambda i: problem.row_names[i])
    var_order = sorted(range(problem.num_vars), key=lambda j: problem.var_names[j])
    columns: dict[int, list[tuple[str, float]]] = {j: [] for j in range(problem.num_vars)}
    obj = problem.objective
    for j in range(problem.num_vars):
        if obj[j] != 0.0:
            columns[j].append((obj_name, obj[j]))
    for i in row_order:
        c = problem.row(i)
        for j, v in c.coeffs.items():
            columns[j].append((c.name, v))

    yield f"NAME          {problem.name}\n"
    yield "ROWS\n"
    yield f" N  {obj_name}\n"
    for i in row_order:
        yield f" {_SENSE_CODE[problem.row_sense[i]]}  {problem.row_names[i]}\n"
    yield "COLUMNS\n"
    in_int = False
    marker = 0
    for j in var_order:
        is_int = problem.is_integer(j)
        if is_int and not in_int:
            yield f"    MARKER{marker:<4}  'MARKER'                 'INTORG'\n"
            marker += 1
            in_int = True
        elif not is_int and in_int:
            yield f"    MARKER{marker:<4}  'MARKER'                 'INTEND'\n"
            marker += 1
            in_int = False
        name = problem.var_names[j]
        entries = columns[j] or [(obj_name, 0.0)]
        for row, v in entries:
            yield "    " + _field_line("", name, row, _num(v)).lstrip() + "\n"
    if in_int:
        yield f"    MARKER{marker:<4}  'MARKER'                 'INTEND'\n"
    yield "RHS\n"
    if problem.obj_constant:
        yield "    " + _field_line("", "RHS", obj_name, _num(-problem.obj_constant)).lstrip() + "\n"
    for i in row_order:
        if problem.row_rhs[i] != 0.0:
            yield "    " + _field_line("", "RHS", problem.row_names[i], _num(problem.row_rhs[i])).lstrip() + "\n"
    yield "RANGES\n"
    yield "BOUNDS\n"
    lb, ub = problem.lb, problem.ub
    for j in var_order:
        name = problem.var_names[j]
        lo, hi = lb[j], ub[j]
        if lo == hi:
            yield _field_line("FX", "BND", name, _num(lo)) + "\n"
            continue
        if lo == -INF and hi == INF:
            yield _field_line("FR", "BND", name) + "\n"
            continue
        if lo == -INF:
            yield _field_line("MI", "BND", name) + "\n"
        elif lo != 0.0:
            yield _field_line("LO", "BND", name, _num(lo)) + "\n"
        if hi != INF:
            yield _field_line("UP", "BND", name, _num(hi)) + "\n"
        elif problem.is_integer(j):
            yield _field_line("PL", "BND", name) + "\n"
    yield "ENDATA\n"


def parse_mps(source: str | os.PathLike | IO[str]) -> MilpProblem:
    """Read an MPS file (fixed or free layout).

    A ranged row is split into two single-sided rows, the second named
    ``<row>__range``.
    """
    if isinstance(source, (str, os.PathLike)) and os.path.exists(source):
        with open(source, encoding="ascii") as fh:
            text = fh.read()
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
    return _parse(text.splitlines())


_SECTIONS = {"NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA", "OBJSENSE"}


def _parse(lines: list[str]) -> MilpProblem:
    name = None
    section = None
    obj_name = None
    maximize = False
    rows: dict[str, str] = {}
    row_order: list[str] = []
    cols: dict[str, dict[str, float]] = {}
    col_order: list[str] = []
    integer: set[str] = set()
    rhs: dict[str, float] = {}
    ranges: dict[str, float] = {}
    bounds: dict[str, list[float]] = {}
    binaries: set[str] = set()
    explicit_ub: set[str] = set()
    in_int = False
    ended = False
    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        if ended:
            raise MpsError("content after ENDATA", lineno)
        tok = raw.split()
        if not raw[0].isspace():
            head = tok[0].upper()
            if head not in _SECTIONS:
                raise MpsError(f"unknown section {tok[0]!r}", lineno)
            section = head
            if head == "NAME":
                name = tok[1] if len(tok) > 1 else ""
            elif head == "OBJSENSE" and len(tok) > 1:
                maximize = tok[1].upper() in ("MAX", "MAXIMIZE")
            elif head == "ENDATA":
                ended = True
            continue
        if section is None or section == "NAME":
            raise MpsError("data line outside a section", lineno)
        if section == "OBJSENSE":
            maximize = tok[0].upper() in ("MAX", "MAXIMIZE")
        elif section == "ROWS":
            if len(tok) != 2:
                raise MpsError("ROWS entries need a type and a name", lineno)
            code, rname = tok[0].upper(), tok[1]
            if code == "N":
                if obj_name is None:
                    obj_name = rname
                continue
            if code not in _CODE_SENSE:
                raise MpsError(f"unknown row type {code!r}", lineno)
            if rname in rows:
                raise MpsError(f"duplicate row {rname!r}", lineno)
            rows[rname] = code
            row_order.append(rname)
        elif section == "COLUMNS":
            if len(tok) >= 3 and tok[1].strip("'").upper() == "MARKER":
                kind = tok[2].strip("'").upper()
                if kind == "INTORG":
                    in_int = True
                elif kind == "INTEND":
                    in_int = False
                else:
                    raise MpsError(f"unknown marker {tok[2]!r}", lineno)
                continue
            if len(tok) not in (3, 5):
                raise MpsError("COLUMNS entries need 3 or 5 fields", lineno)
            cname = tok[0]
            if cname not in cols:
                cols[cname] = {}
                col_order.append(cname)
            if in_int:
                integer.add(cname)
            for k in range(1, len(tok), 2):
                rname, val = tok[k], _float(tok[k + 1], lineno)
                if rname != obj_name and rname not in rows:
                    raise MpsError(f"unknown row {rname!r}", lineno)
                cols[cname][rname] = cols[cname].get(rname, 0.0) + val
        elif section in ("RHS", "RANGES"):
            body = tok[1:] if len(tok) in (3, 5) else tok
            if len(body) not in (2, 4):
                raise MpsError(f"{section} entries need name/value pairs", lineno)
            target = rhs if section == "RHS" else ranges
            for k in range(0, len(body), 2):
                rname, val = body[k], _float(body[k + 1], lineno)
                if rname != obj_name and rname not in rows:
                    raise MpsError(f"unknown row {rname!r}", lineno)
                target[rname] = val
        elif section == "BOUNDS":
            if len(tok) < 3:
                raise MpsError("BOUNDS entries need a type, set name and column", lineno)
            code = tok[0].upper()
            if code in ("FR", "MI", "PL", "BV") and len(tok) == 3:
                cname, val = tok[2], None
            elif len(tok) == 4:
                cname, val = tok[2], _float(tok[3], lineno)
            elif len(tok) == 3 and code not in ("FR", "MI", "PL", "BV"):
                # bound set name omitted
                cname, val = tok[1], _float(tok[2], lineno)
            else:
                cname, val = tok[2], None
            if cname not in cols:
                raise MpsError(f"bound on unknown column {cname!r}", lineno)
            b = bounds.setdefault(cname, [0.0, INF])
            if code == "LO":
                b[0] = val
            elif code == "UP":
                b[1] = val
                explicit_ub.add(cname)
                if val < 0 and b[0] == 0.0:
                    b[0] = -INF
            elif code == "FX":
                b[0] = b[1] = val
                explicit_ub.add(cname)
            elif code == "FR":
                b[0], b[1] = -INF, INF
            elif code == "MI":
                b[0] = -INF
            elif code == "PL":
                b[1] = INF
                explicit_ub.add(cname)
            elif code == "BV":
                b[0], b[1] = 0.0, 1.0
                binaries.add(cname)
            elif code == "LI":
                b[0] = math.ceil(val)
                integer.add(cname)
            elif code == "UI":
                b[1] = math.floor(val)
                integer.add(cname)
                explicit_ub.add(cname)
            else:
                raise MpsError(f"unknown bound type {code!r}", lineno)
        elif section == "ENDATA":
            raise MpsError("content after ENDATA", lineno)
    if name is None:
        raise MpsError("missing NAME section")
    if not ended:
        raise MpsError("missing ENDATA")

    prob = MilpProblem(name or "problem")
    sign = -1.0 if maximize else 1.0
    for cname in col_order:
        lo, hi = bounds.get(cname, [0.0, INF])
        is_int = cname in integer or cname in binaries
        cost = sign * cols[cname].get(obj_name, 0.0) if obj_name else 0.0
        prob.add_var(cname, lo, hi, cost=cost, integer=is_int)
    if obj_name and obj_name in rhs:
        prob.obj_constant = -sign * rhs[obj_name]
    by_row: dict[str, dict[int, float]] = {r: {} for r in row_order}
    for j, cname in enumerate(col_order):
        for rname, v in cols[cname].items():
            if rname != obj_name:
                by_row[rname][j] = v
    for rname in row_order:
        code = rows[rname]
        b = rhs.get(rname, 0.0)
        if rname not in ranges:
            prob.add_constraint(by_row[rname], _CODE_SENSE[code], b, name=rname, tag="mps")
            continue
        r = ranges[rname]
        if code == "E":
            lo, hi = (b, b + abs(r)) if r >= 0 else (b - abs(r), b)
        elif code == "L":
            lo, hi = b - abs(r), b
        else:
            lo, hi = b, b + abs(r)
        prob.add_constraint(by_row[rname], ">=", lo, name=rname, tag="mps")
        prob.add_constraint(by_row[rname], "<=", hi, name=f"{rname}__range", tag="mps")
    return prob


def _float(s: str, lineno: int) -> float:
    try:
        return float(s)
    except ValueError:
        raise MpsError(f"bad number {s!r}", lineno) from None


def write_lp(problem: MilpProblem, sink: str | os.PathLike | IO[str]) -> None:
    """CPLEX-style LP file, meant for reading by people."""
    fh, close = _open_sink(sink)
    try:
        names = [_lp_name(n) for n in problem.var_names]

        def expr(coeffs) -> str:
            parts = []
            for j, v in coeffs:
                sign = "-" if v < 0 else "+"
                parts.append(f"{sign} {_num(abs(v))} {names[j]}")
            if not parts:
                return "0"
            if parts[0].startswith("+ "):
                parts[0] = parts[0][2:]
            return _wrap(parts)

        obj = problem.objective
        fh.write(f"\\ {problem.name}\nMinimize\n obj: ")
        fh.write(expr([(j, obj[j]) for j in range(problem.num_vars) if obj[j] != 0.0]) + "\n")
        fh.write("Subject To\n")
        for c in problem.rows():
            op = {"<=": "<=", ">=": ">=", "==": "="}[c.sense]
            fh.write(f" {_lp_name(c.name)}: {expr(sorted(c.coeffs.items()))} {op} {_num(c.rhs)}\n")
        fh.write("Bounds\n")
        lb, ub = problem.lb, problem.ub
        for j, n in enumerate(names):
            if lb[j] == -INF and ub[j] == INF:
                fh.write(f" {n} free\n")
            elif lb[j] == ub[j]:
                fh.write(f" {n} = {_num(lb[j])}\n")
            else:
                lo = "-inf" if lb[j] == -INF else _num(lb[j])
                hi = "+inf" if ub[j] == INF else _num(ub[j])
                fh.write(f" {lo} <= {n} <= {hi}\n")
        bins = [n for j, n in enumerate(names) if problem.is_binary(j)]
        gens = [n for j, n in enumerate(names) if problem.is_integer(j) and not problem.is_binary(j)]
        if bins:
            fh.write("Binaries\n " + _wrap(bins) + "\n")
        if gens:
            fh.write("Generals\n " + _wrap(gens) + "\n")
        fh.write("End\n")
    finally:
        if close:
            fh.close()


def _lp_name(name: str) -> str:
    # operators and blanks are not allowed in LP names; names must not look like numbers
    out = re.sub(r"[^A-Za-z0-9_.]", lambda m: f"_{ord(m.group()):02x}_", name)
    return "_" + out if out[:1] in ("", ".", "e", "E") or out[:1].isdigit() else out


def _wrap(parts: list[str], width: int = 200) -> str:
    # LP readers limit line length; continuation lines start with a blank
    lines, cur = [], ""
    for part in parts:
        if cur and len(cur) + len(part) + 1 > width:
            lines.append(cur)
            cur = part
        else:
            cur = f"{cur} {part}" if cur else part
    lines.append(cur)
    return "\n   ".join(lines)
