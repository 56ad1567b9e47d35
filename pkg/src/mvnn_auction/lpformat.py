"""CPLEX-style LP text for the winner-determination models.

Grammar (a deliberately narrow subset, documented in the README):

    Maximize
     obj: [<term> [{+|-} <term>]*]
    Subject To
     <name>: <term> [{+|-} <term>]* {<=|>=|=} <number>
    Bounds
     <number> <= <var> <= <number> | <var> <= <number>
     | <var> >= <number> | <var> = <number> | <var> free
    Binary
     <var>
    End

A term is ``[number] varname``; every variable must be declared in the
Bounds or Binary section. Writing is deterministic: re-parsing emitted
text and writing it again reproduces the bytes exactly.
"""

from __future__ import annotations

import re

from .errors import LpParseError
from .milp import Constraint, MilpModel, ModelBuilder, Variable

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.]*$")
_NUMBER = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$")


def _num(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _expr(terms, names) -> str:
    parts = []
    for idx, coef in terms:
        mag = _num(abs(coef))
        if not parts:
            parts.append(f"{mag} {names[idx]}" if coef >= 0 else f"- {mag} {names[idx]}")
        else:
            parts.append(f"{'+' if coef >= 0 else '-'} {mag} {names[idx]}")
    return " ".join(parts)


def write_lp(model: MilpModel) -> str:
    names = [v.name for v in model.variables]
    lines = ["Maximize"]
    lines.append(f" obj: {_expr(model.objective, names)}".rstrip())
    lines.append("Subject To")
    for c in model.constraints:
        lines.append(f" {c.name}: {_expr(c.terms, names)} {c.relation} {_num(c.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        if v.is_binary:
            continue
        if v.lower == float("-inf") and v.upper == float("inf"):
            lines.append(f" {v.name} free")
        elif v.lower == v.upper:
            lines.append(f" {v.name} = {_num(v.lower)}")
        else:
            lines.append(f" {_num(v.lower)} <= {v.name} <= {_num(v.upper)}")
    lines.append("Binary")
    for v in model.variables:
        if v.is_binary:
            lines.append(f" {v.name}")
    lines.append("End")
    return "\n".join(lines) + "\n"


_SECTIONS = {
    "maximize": "objective",
    "subject to": "constraints",
    "st": "constraints",
    "s.t.": "constraints",
    "bounds": "bounds",
    "binary": "binary",
    "binaries": "binary",
    "bin": "binary",
    "end": "end",
}


def _tokenize_expr(text: str, line_no: int) -> list[str]:
    # split relations and signs out as standalone tokens; keep exponent
    # signs (1e-09) attached to their number
    spaced = re.sub(r"(<=|>=|=)", r" \1 ", text)
    spaced = re.sub(r"(?<![eE])([+-])", r" \1 ", spaced)
    return [tok for tok in spaced.split() if tok]


def _parse_terms(tokens: list[str], line_no: int):
    """Parse sign/coefficient/name sequences into (name, coef) pairs."""
    terms: list[tuple[str, float]] = []
    sign = 1.0
    coef: float | None = None
    for tok in tokens:
        if tok == "+":
            if coef is not None:
                raise LpParseError("dangling coefficient", line_no)
            sign = 1.0
        elif tok == "-":
            if coef is not None:
                raise LpParseError("dangling coefficient", line_no)
            sign = -1.0
        elif _NUMBER.match(tok):
            if coef is not None:
                raise LpParseError(f"two numbers in a row near {tok!r}", line_no)
            coef = float(tok)
        elif _NAME.match(tok):
            terms.append((tok, sign * (1.0 if coef is None else coef)))
            sign, coef = 1.0, None
        else:
            raise LpParseError(f"unexpected token {tok!r}", line_no)
    if coef is not None:
        raise LpParseError("expression ends with a dangling number", line_no)
    return terms


def parse_lp(text: str) -> MilpModel:
    """Parse LP text written by :func:`write_lp` into an equivalent model."""
    section = None
    objective_tokens: list[tuple[list[str], int]] = []
    constraint_rows: list[tuple[str, list[str], str, float, int]] = []
    bounds_rows: list[tuple[str, float, float, int]] = []
    binary_names: list[str] = []
    seen_end = False

    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("\\")[0].strip()  # strip LP comments
        if not line:
            continue
        head = line.lower()
        if head in _SECTIONS:
            section = _SECTIONS[head]
            if section == "end":
                seen_end = True
                break
            continue
        if head.startswith("minimize"):
            raise LpParseError("only maximize models are supported", line_no)
        if section == "objective":
            body = line.split(":", 1)[1] if ":" in line else line
            objective_tokens.append((_tokenize_expr(body, line_no), line_no))
        elif section == "constraints":
            if ":" not in line:
                raise LpParseError("constraint row needs a 'name:' prefix", line_no)
            name, body = line.split(":", 1)
            tokens: list[str] = _tokenize_expr(body, line_no)
            rel_positions = [i for i, t in enumerate(tokens) if t in ("<=", ">=", "=")]
            if len(rel_positions) != 1:
                raise LpParseError("constraint needs exactly one relation", line_no)
            pos = rel_positions[0]
            rhs_tokens = tokens[pos + 1:]
            rhs_sign = 1.0
            if rhs_tokens and rhs_tokens[0] in ("+", "-"):
                rhs_sign = -1.0 if rhs_tokens[0] == "-" else 1.0
                rhs_tokens = rhs_tokens[1:]
            if len(rhs_tokens) != 1 or not _NUMBER.match(rhs_tokens[0]):
                raise LpParseError("right-hand side must be a single number", line_no)
            constraint_rows.append(
                (name.strip(), tokens[:pos], tokens[pos],
                 rhs_sign * float(rhs_tokens[0]), line_no)
            )
        elif section == "bounds":
            tokens = _tokenize_expr(line, line_no)
            bounds_rows.append(_parse_bounds_row(tokens, line_no))
        elif section == "binary":
            if not _NAME.match(line):
                raise LpParseError(f"invalid variable name {line!r}", line_no)
            binary_names.append(line)
        else:
            raise LpParseError(f"content before any section header: {line!r}",
                               line_no)
    if not seen_end:
        raise LpParseError("missing End marker", line=None)

    # variable order: Bounds appearances, then Binary appearances
    builder = ModelBuilder()
    index: dict[str, int] = {}
    for name, lo, hi, line_no in bounds_rows:
        if name in index:
            raise LpParseError(f"variable {name} declared twice", line_no)
        index[name] = builder.add_var(name, lo, hi, binary=False)
    for name in binary_names:
        if name in index:
            raise LpParseError(f"variable {name} declared twice", line=None)
        index[name] = builder.add_var(name, 0.0, 1.0, binary=True)

    def resolve(terms, line_no):
        out = []
        for name, coef in terms:
            if name not in index:
                raise LpParseError(f"undeclared variable {name}", line_no)
            out.append((index[name], coef))
        return out

    for tokens, line_no in objective_tokens:
        for idx, coef in resolve(_parse_terms(tokens, line_no), line_no):
            builder.add_objective_term(idx, coef)
    for name, lhs_tokens, rel, rhs, line_no in constraint_rows:
        terms = resolve(_parse_terms(lhs_tokens, line_no), line_no)
        builder.add_constraint(name, terms, rel, rhs)

    model = builder.build()
    return _attach_allocation_grid(model)


def _parse_bounds_row(tokens: list[str], line_no: int):
    if len(tokens) == 2 and tokens[1].lower() == "free":
        return tokens[0], float("-inf"), float("inf"), line_no
    # lo <= name <= hi
    if len(tokens) == 5 and tokens[1] == "<=" and tokens[3] == "<=":
        if not (_NUMBER.match(tokens[0]) and _NAME.match(tokens[2])
                and _NUMBER.match(tokens[4])):
            raise LpParseError("malformed bounds row", line_no)
        return tokens[2], float(tokens[0]), float(tokens[4]), line_no
    if len(tokens) == 3 and _NAME.match(tokens[0]) and _NUMBER.match(tokens[2]):
        if tokens[1] == "<=":
            return tokens[0], 0.0, float(tokens[2]), line_no
        if tokens[1] == ">=":
            return tokens[0], float(tokens[2]), float("inf"), line_no
        if tokens[1] == "=":
            return tokens[0], float(tokens[2]), float(tokens[2]), line_no
    raise LpParseError(f"malformed bounds row: {' '.join(tokens)}", line_no)


def _attach_allocation_grid(model: MilpModel) -> MilpModel:
    """Recover a_i_j allocation structure from variable names, if complete."""
    pattern = re.compile(r"a_(\d+)_(\d+)$")
    found: dict[tuple[int, int], int] = {}
    for idx, v in enumerate(model.variables):
        match = pattern.match(v.name)
        if match and v.is_binary:
            found[(int(match.group(1)), int(match.group(2)))] = idx
    if not found:
        return model
    n = max(i for i, _ in found) + 1
    m = max(j for _, j in found) + 1
    if len(found) != n * m:
        return model
    grid = tuple(tuple(found[(i, j)] for j in range(m)) for i in range(n))
    return MilpModel(
        variables=model.variables,
        constraints=model.constraints,
        objective=model.objective,
        num_bidders=n,
        num_items=m,
        allocation_vars=grid,
    )
