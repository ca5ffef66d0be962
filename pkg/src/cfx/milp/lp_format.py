"""Industry-standard LP text format: writer plus a matching reference parser.

The writer emits Minimize / Subject To / Bounds / Binaries / End sections.
The parser accepts the same dialect (plus Maximize, which it negates), which
is enough for round-trip tests and for re-importing exported models. A
quadratic objective can be written (``[ ... ] / 2`` bracket syntax) for
export to external solvers; the parser deliberately rejects it since the
built-in solver is linear-only.
"""

from __future__ import annotations

import re

from ..errors import LpFormatError
from .model import MilpModel, Sense, VarKind

_NAME_OK = re.compile(r"^[A-Za-z_][A-Za-z0-9_.]*$")


def _sanitize_names(model: MilpModel) -> list[str]:
    names, used = [], set()
    for v in model.variables:
        name = re.sub(r"[^A-Za-z0-9_.]", "_", v.name) or f"v{v.id}"
        if not _NAME_OK.match(name) or name[0] in "eE":
            name = f"v_{name}"
        base, k = name, 1
        while name in used:
            name = f"{base}_{k}"
            k += 1
        used.add(name)
        names.append(name)
    return names


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _terms_to_text(terms, names) -> str:
    parts = []
    for vid, coef in terms:
        sign = "-" if coef < 0 else "+"
        parts.append(f"{sign} {_fmt(abs(coef))} {names[vid]}")
    if not parts:
        return "0"
    text = " ".join(parts)
    return text[2:] if text.startswith("+ ") else text


def export_lp(
    model: MilpModel, quadratic: list[tuple[int, float]] | None = None
) -> str:
    """Serialize the model; ``quadratic`` adds squared objective terms."""
    model.validate()
    names = _sanitize_names(model)
    lines = ["\\ generated by cfx", "Minimize"]
    obj = _terms_to_text(model.objective, names)
    if model.objective_constant:
        obj += f" + {_fmt(model.objective_constant)}"
    if quadratic:
        quad = " + ".join(f"{_fmt(2.0 * coef)} {names[vid]} ^ 2" for vid, coef in quadratic)
        obj += f" + [ {quad} ] / 2"
    lines.append(f" obj: {obj}")
    lines.append("Subject To")
    for i, row in enumerate(model.constraints):
        label = f"c{i}"
        lines.append(f" {label}: {_terms_to_text(row.terms, names)} {row.sense.value} {_fmt(row.rhs)}")
    lines.append("Bounds")
    for v in model.variables:
        if v.kind is VarKind.BINARY:
            continue  # the Binaries section implies [0, 1]; ours are within it
        lines.append(f" {_fmt(v.lb)} <= {names[v.id]} <= {_fmt(v.ub)}")
    binaries = model.binary_ids()
    if binaries:
        lines.append("Binaries")
        lines.append(" " + " ".join(names[vid] for vid in binaries))
    lines.append("End")
    return "\n".join(lines) + "\n"


_SECTION_ALIASES = {
    "minimize": "objective",
    "minimum": "objective",
    "min": "objective",
    "maximize": "objective-max",
    "maximum": "objective-max",
    "max": "objective-max",
    "subject": "constraints",
    "st": "constraints",
    "s.t.": "constraints",
    "bounds": "bounds",
    "bound": "bounds",
    "binaries": "binaries",
    "binary": "binaries",
    "bin": "binaries",
    "general": "general",
    "generals": "general",
    "end": "end",
}

_NUM = r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?"
_TOKEN = re.compile(rf"(?:{_NUM})|(?:[A-Za-z_][A-Za-z0-9_.]*)|<=|>=|=<|=>|[<>=:+\-\[\]^/]")


def _tokenize(text: str) -> list[str]:
    tokens = []
    for line in text.splitlines():
        stripped = line.split("\\", 1)[0]
        tokens.extend(_TOKEN.findall(stripped))
    return tokens


class _Parser:
    def __init__(self, tokens: list[str]):
        self.tokens = tokens
        self.pos = 0

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def advance(self):
        tok = self.peek()
        self.pos += 1
        return tok

    def section_of(self, tok):
        if tok is None:
            return "end"
        section = _SECTION_ALIASES.get(tok.lower())
        if section == "constraints":
            # consume the optional "To" of "Subject To"
            nxt = self.peek()
            if nxt is not None and nxt.lower() == "to":
                self.advance()
        return section

    def parse_expression(self):
        """Linear expression as (terms, constant); stops at sense/section tokens."""
        terms, constant = [], 0.0
        sign = 1.0
        pending_coef = None
        while True:
            tok = self.peek()
            if tok is None or tok in ("<=", ">=", "=", "<", ">", "=<", "=>"):
                break
            if self.section_of(tok) is not None and pending_coef is None and sign == 1.0:
                break
            self.advance()
            if tok == "+":
                continue
            if tok == "-":
                sign = -sign
                continue
            if tok == "[":
                raise LpFormatError(
                    "quadratic objective sections are export-only; the built-in parser is linear"
                )
            if re.fullmatch(_NUM, tok):
                value = sign * float(tok)
                if pending_coef is not None:
                    constant += pending_coef
                pending_coef = value
                sign = 1.0
                continue
            # an identifier: attach the pending coefficient (default 1)
            coef = pending_coef if pending_coef is not None else sign
            if pending_coef is None:
                sign = 1.0
            terms.append((tok, coef))
            pending_coef = None
        if pending_coef is not None:
            constant += pending_coef
        return terms, constant

    def parse_sense(self):
        tok = self.advance()
        if tok in ("<=", "<", "=<"):
            return Sense.LE
        if tok in (">=", ">", "=>"):
            return Sense.GE
        if tok == "=":
            return Sense.EQ
        raise LpFormatError(f"expected a comparison, got {tok!r}")

    def parse_number(self):
        tok = self.advance()
        sign = 1.0
        while tok in ("+", "-"):
            if tok == "-":
                sign = -sign
            tok = self.advance()
        if tok is None or not re.fullmatch(_NUM, tok):
            raise LpFormatError(f"expected a number, got {tok!r}")
        return sign * float(tok)


def parse_lp(text: str) -> MilpModel:
    """Re-import an LP document written by export_lp (or a compatible one)."""
    parser = _Parser(_tokenize(text))
    tok = parser.advance()
    section = parser.section_of(tok)
    if section not in ("objective", "objective-max"):
        raise LpFormatError("document must start with Minimize or Maximize")
    negate = section == "objective-max"

    # optional objective label
    if parser.peek() is not None and parser.tokens[parser.pos + 1 : parser.pos + 2] == [":"]:
        parser.advance()
        parser.advance()
    obj_terms, obj_const = parser.parse_expression()

    constraints = []  # (label, terms, sense, rhs)
    bounds: dict[str, tuple[float, float]] = {}
    binaries: set[str] = set()

    section = parser.section_of(parser.advance())
    if section != "constraints":
        raise LpFormatError("expected a Subject To section")
    while True:
        tok = parser.peek()
        nxt_section = parser.section_of(tok) if tok is not None else "end"
        if nxt_section is not None and nxt_section != "constraints":
            parser.advance()
            section = nxt_section
            break
        if tok is None:
            section = "end"
            break
        # optional "label:" prefix
        if parser.tokens[parser.pos + 1 : parser.pos + 2] == [":"]:
            parser.advance()
            parser.advance()
        terms, const = parser.parse_expression()
        sense = parser.parse_sense()
        rhs = parser.parse_number() - const
        constraints.append((terms, sense, rhs))

    while section not in ("end", None):
        if section == "bounds":
            section = _parse_bounds(parser, bounds)
        elif section == "binaries":
            section = _parse_name_list(parser, binaries)
        elif section == "general":
            raise LpFormatError("general integer variables are not supported")
        else:
            raise LpFormatError(f"unsupported section {section!r}")

    model = MilpModel()
    ids: dict[str, int] = {}

    def var_id(name: str) -> int:
        if name not in ids:
            if name in binaries:
                lb, ub = bounds.get(name, (0.0, 1.0))
                ids[name] = model.add_variable(name, VarKind.BINARY, lb, ub)
            else:
                if name not in bounds:
                    raise LpFormatError(f"variable {name!r} has no finite bounds")
                lb, ub = bounds[name]
                ids[name] = model.add_variable(name, VarKind.CONTINUOUS, lb, ub)
        return ids[name]

    # declare bounded variables first so ids follow the Bounds section order
    for name in bounds:
        var_id(name)
    for name in sorted(binaries):
        var_id(name)

    sign = -1.0 if negate else 1.0
    model.set_objective(
        [(var_id(n), sign * c) for n, c in obj_terms], sign * obj_const
    )
    for terms, sense, rhs in constraints:
        model.add_constraint([(var_id(n), c) for n, c in terms], sense, rhs, tag="imported")
    return model


def _parse_bounds(parser: _Parser, bounds: dict) -> str | None:
    while True:
        tok = parser.peek()
        if tok is None:
            return "end"
        section = parser.section_of(tok)
        if section is not None:
            parser.advance()
            return section
        # forms: "lb <= name <= ub" | "name <= ub" | "name >= lb" | "name = v"
        if re.fullmatch(_NUM, tok) or tok in ("+", "-"):
            lb = parser.parse_number()
            parser.parse_sense()
            name = parser.advance()
            parser.parse_sense()
            ub = parser.parse_number()
            bounds[name] = (lb, ub)
        else:
            name = parser.advance()
            sense = parser.parse_sense()
            value = parser.parse_number()
            old = bounds.get(name, (0.0, float("inf")))
            if sense is Sense.LE:
                bounds[name] = (old[0], value)
            elif sense is Sense.GE:
                bounds[name] = (value, old[1])
            else:
                bounds[name] = (value, value)


def _parse_name_list(parser: _Parser, out: set) -> str | None:
    while True:
        tok = parser.peek()
        if tok is None:
            return "end"
        section = parser.section_of(tok)
        if section is not None:
            parser.advance()
            return section
        out.add(parser.advance())
