"""CPLEX LP text format: writer, a small reader, and an external re-solve.

The reader understands the subset the writer emits plus the common bound
forms (``x >= a``, ``x <= b``, ``a <= x <= b``, ``x = a``, ``x free``), which
is enough to check round trips and to feed files from other tools into
:func:`solve_external`.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..errors import ParseError
from .lp import LpModel, Tolerance


@dataclass
class GenericLp:
    """Solver-neutral linear program.

    ``constraints`` holds ``(name, {var: coef}, sense, rhs)`` with sense one
    of ``>=``, ``<=``, ``=``.  Bounds default to ``[0, inf)`` as in the LP
    format.
    """

    sense: str
    objective: dict[str, float]
    constraints: list[tuple[str, dict[str, float], str, float]] = field(default_factory=list)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)

    def variables(self) -> list[str]:
        seen = dict.fromkeys(self.objective)
        for _, coefs, _, _ in self.constraints:
            seen.update(dict.fromkeys(coefs))
        seen.update(dict.fromkeys(self.bounds))
        return list(seen)

    def bound(self, var: str) -> tuple[float, float]:
        return self.bounds.get(var, (0.0, math.inf))


def to_generic(model: LpModel, time_unit: float = 1.0) -> GenericLp:
    """Convert a model; constants and symbol bounds are divided by ``time_unit``."""
    names = model.variables
    if isinstance(model.objective, Tolerance):
        lp = GenericLp("max", {model.objective.symbol: 1.0})
    else:
        lp = GenericLp("min", {"t": 1.0})
    for c in model.constraints:
        coefs = {names[c.lhs]: 1.0}
        if c.rhs.var >= 0:
            coefs[names[c.rhs.var]] = coefs.get(names[c.rhs.var], 0.0) - 1.0
        for s, k in sorted(c.rhs.coefs.items()):
            if k:
                coefs[s] = coefs.get(s, 0.0) - k
        lp.constraints.append((f"c{c.id}", coefs, ">=", c.rhs.const / time_unit))
    if isinstance(model.objective, Tolerance):
        lp.constraints.append(("tcap", {"t": 1.0}, "<=", model.objective.threshold / time_unit))
    for s in model.symbols:
        lp.bounds[s] = (model.lower_bounds[s] / time_unit, math.inf)
    constrained = {names[c.lhs] for c in model.constraints}
    for v in names:
        if v in constrained:
            lp.bounds[v] = (-math.inf, math.inf)
    return lp


def _num(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _expr(coefs: dict[str, float]) -> str:
    parts = []
    for i, (v, k) in enumerate(coefs.items()):
        sign = "-" if k < 0 else "+"
        mag = abs(k)
        term = v if mag == 1 else f"{_num(mag)} {v}"
        if i == 0:
            parts.append(term if sign == "+" else f"- {term}")
        else:
            parts.append(f"{sign} {term}")
    return " ".join(parts) if parts else "0"


def format_lp(lp: GenericLp, comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"\\ {ln}" for ln in comment.splitlines())
    lines.append("Maximize" if lp.sense == "max" else "Minimize")
    lines.append(f" obj: {_expr(lp.objective)}")
    lines.append("Subject To")
    for name, coefs, sense, rhs in lp.constraints:
        lines.append(f" {name}: {_expr(coefs)} {sense} {_num(rhs)}")
    lines.append("Bounds")
    for v, (lo, hi) in lp.bounds.items():
        if lo == -math.inf and hi == math.inf:
            lines.append(f" {v} free")
        elif hi == math.inf:
            lines.append(f" {v} >= {_num(lo)}")
        else:
            lines.append(f" {_num(lo)} <= {v} <= {_num(hi)}")
    lines.append("End")
    return "\n".join(lines) + "\n"


def export_lp(model: LpModel, path: str | Path | None = None, time_unit: float = 1.0,
              comment: str | None = None) -> str:
    """Write ``model`` in CPLEX LP format; returns the text.

    ``time_unit`` rescales every time constant (``1e3`` writes microseconds).
    """
    text = format_lp(to_generic(model, time_unit), comment)
    if path is not None:
        Path(path).write_text(text)
    return text


_TOKEN = re.compile(r"""
    (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf(?:inity)?\b)
  | (?P<op><=|>=|=<|=>|<|>|=)
  | (?P<sign>[-+])
  | (?P<colon>:)
  | (?P<name>[A-Za-z_!"#$%&()/,;?@'{}|~][A-Za-z0-9_!"#$%&()/,.;?@'{}|~\[\]]*)
  | (?P<ws>\s+)
""", re.VERBOSE)

_SECTIONS = [
    (re.compile(r"^\s*(maximize|maximise|maximum|max)\s*$", re.I), "max"),
    (re.compile(r"^\s*(minimize|minimise|minimum|min)\s*$", re.I), "min"),
    (re.compile(r"^\s*(subject\s+to|such\s+that|st|s\.t\.)\s*$", re.I), "st"),
    (re.compile(r"^\s*(bounds?)\s*$", re.I), "bounds"),
    (re.compile(r"^\s*(generals?|gen|integers?|binar(y|ies)|bin)\s*$", re.I), "ignore"),
    (re.compile(r"^\s*end\s*$", re.I), "end"),
]
_FLIP = {"<=": ">=", ">=": "<=", "=": "="}
_NORM = {"=<": "<=", "<": "<=", "=>": ">=", ">": ">=", "<=": "<=", ">=": ">=", "=": "="}


def _tokens(text: str, line: int) -> list[tuple[str, str]]:
    out, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line)
        pos = m.end()
        if m.lastgroup != "ws":
            out.append((m.lastgroup, m.group()))
    return out


def _linear(toks, i, line):
    """Parse ``[+-] [coef] name ...`` starting at ``toks[i]``."""
    coefs: dict[str, float] = {}
    while i < len(toks) and toks[i][0] in ("sign", "num", "name"):
        sign = 1.0
        while i < len(toks) and toks[i][0] == "sign":
            sign *= -1.0 if toks[i][1] == "-" else 1.0
            i += 1
        coef = 1.0
        if i < len(toks) and toks[i][0] == "num":
            if i + 1 >= len(toks) or toks[i + 1][0] != "name":
                break    # a bare number ends the expression
            coef = float(toks[i][1])
            i += 1
        if i >= len(toks) or toks[i][0] != "name":
            raise ParseError("expected a variable name", line)
        name = toks[i][1]
        coefs[name] = coefs.get(name, 0.0) + sign * coef
        i += 1
    return coefs, i


def _number(toks, i, line):
    sign = 1.0
    while i < len(toks) and toks[i][0] == "sign":
        sign *= -1.0 if toks[i][1] == "-" else 1.0
        i += 1
    if i >= len(toks) or toks[i][0] != "num":
        raise ParseError("expected a number", line)
    return sign * float(toks[i][1].lower().replace("infinity", "inf")), i + 1


def parse_lp(text: str) -> GenericLp:
    """Parse CPLEX LP text into a GenericLp."""
    sections: dict[str, list[tuple[int, str]]] = {}
    current = None
    sense = None
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("\\", 1)[0]
        if not line.strip():
            continue
        for pat, name in _SECTIONS:
            if pat.match(line):
                current = name
                if name in ("max", "min"):
                    sense, current = name, "obj"
                break
        else:
            if current is None:
                raise ParseError("text before the objective section", n)
            if current == "end":
                raise ParseError("text after End", n)
            sections.setdefault(current, []).append((n, line))
    if sense is None:
        raise ParseError("missing Minimize/Maximize section", 1)

    def joined(name):
        rows = sections.get(name, [])
        return " ".join(r for _, r in rows), (rows[0][0] if rows else 1)

    obj_text, ln = joined("obj")
    toks = _tokens(obj_text, ln)
    i = 2 if len(toks) >= 2 and toks[1][0] == "colon" else 0
    objective, i = _linear(toks, i, ln)
    if i != len(toks):
        raise ParseError("trailing tokens in objective", ln)
    lp = GenericLp(sense, objective)

    st_text, ln = joined("st")
    toks = _tokens(st_text, ln)
    i = 0
    while i < len(toks):
        name = f"r{len(lp.constraints) + 1}"
        if i + 1 < len(toks) and toks[i][0] == "name" and toks[i + 1][0] == "colon":
            name = toks[i][1]
            i += 2
        coefs, i = _linear(toks, i, ln)
        if i >= len(toks) or toks[i][0] != "op":
            raise ParseError(f"constraint {name}: expected a comparison", ln)
        op = _NORM[toks[i][1]]
        rhs, i = _number(toks, i + 1, ln)
        lp.constraints.append((name, coefs, op, rhs))

    for n, line in sections.get("bounds", []):
        toks = _tokens(line, n)
        kinds = [k for k, _ in toks]
        if kinds == ["name", "name"] and toks[1][1].lower() == "free":
            lp.bounds[toks[0][1]] = (-math.inf, math.inf)
            continue
        lo, hi = (0.0, math.inf)
        if toks and toks[0][0] == "name":
            var = toks[0][1]
            lo, hi = lp.bound(var)
            op = _NORM[toks[1][1]]
            val, j = _number(toks, 2, n)
            if j != len(toks):
                raise ParseError("malformed bound", n)
            if op == ">=":
                lo = val
            elif op == "<=":
                hi = val
            else:
                lo = hi = val
        else:
            val, j = _number(toks, 0, n)
            if j + 1 >= len(toks) or toks[j][0] != "op" or toks[j + 1][0] != "name":
                raise ParseError("malformed bound", n)
            var = toks[j + 1][1]
            lo, hi = lp.bound(var)
            op = _FLIP[_NORM[toks[j][1]]]
            if op == ">=":
                lo = val
            elif op == "<=":
                hi = val
            else:
                lo = hi = val
            if j + 2 < len(toks):
                op2 = _NORM[toks[j + 2][1]]
                val2, k = _number(toks, j + 3, n)
                if k != len(toks):
                    raise ParseError("malformed bound", n)
                if op2 == "<=":
                    hi = val2
                elif op2 == ">=":
                    lo = val2
        lp.bounds[var] = (lo, hi)
    return lp


def read_lp(path: str | Path) -> GenericLp:
    return parse_lp(Path(path).read_text())


def solve_external(lp: GenericLp) -> tuple[str, float]:
    """Solve with SciPy's HiGHS backend; returns ``(status, objective)``."""
    import numpy as np
    from scipy.optimize import linprog

    names = lp.variables()
    idx = {v: i for i, v in enumerate(names)}
    sign = -1.0 if lp.sense == "max" else 1.0
    c = np.zeros(len(names))
    for v, k in lp.objective.items():
        c[idx[v]] = sign * k
    a_ub, b_ub, a_eq, b_eq = [], [], [], []
    for _, coefs, op, rhs in lp.constraints:
        row = np.zeros(len(names))
        for v, k in coefs.items():
            row[idx[v]] = k
        if op == "<=":
            a_ub.append(row)
            b_ub.append(rhs)
        elif op == ">=":
            a_ub.append(-row)
            b_ub.append(-rhs)
        else:
            a_eq.append(row)
            b_eq.append(rhs)
    bounds = [tuple(None if math.isinf(b) else b for b in lp.bound(v)) for v in names]
    res = linprog(c, A_ub=np.array(a_ub) if a_ub else None, b_ub=b_ub or None,
                  A_eq=np.array(a_eq) if a_eq else None, b_eq=b_eq or None,
                  bounds=bounds, method="highs")
    if res.status == 0:
        return "optimal", sign * float(res.fun)
    if res.status == 3:
        return "unbounded", sign * math.inf
    if res.status == 2:
        return "infeasible", math.nan
    return "error", math.nan
