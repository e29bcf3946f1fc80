"""Plain-text model files.

One statement per line; ``#`` starts a comment::

    species A B
    init A = 200000
    reaction 2 A -> B @ 1e-6
    B -> 2 A @ 1
    scaling N = 1e6
    alpha A = 1

The ``reaction`` keyword is optional.  A side that is empty or ``0`` means
no species.  Without a ``species`` line, species are declared in order of
first appearance.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .errors import DuplicateSpecies, NonPositiveRate, ParseError, UnknownSpecies
from .model import Model, Reaction, ReactionNetwork, SystemState

_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_TERM = re.compile(r"(?:(\d+)\s*\*?\s*)?([A-Za-z_][A-Za-z0-9_]*)")


@dataclass
class ParsedModel:
    network: ReactionNetwork
    initial: SystemState
    N: float | None
    alpha: tuple[float, ...] | None

    def to_model(self) -> Model:
        return Model(self.network, self.initial, self.N if self.N is not None else 2.0, self.alpha)


def _col(raw: str, fragment: str, start: int = 0) -> int:
    i = raw.find(fragment, start)
    return (i if i >= 0 else start) + 1


def _number(text: str, line: int, col: int, what: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"expected a number for {what}, got {text.strip()!r}", line, col) from None
    if not math.isfinite(v):
        raise ParseError(f"{what} must be finite", line, col)
    return v


def _assignment(body: str, raw: str, line: int, keyword: str) -> tuple[str, str, int]:
    if "=" not in body:
        raise ParseError(f"expected '{keyword} <name> = <value>'", line, _col(raw, keyword))
    lhs, rhs = body.split("=", 1)
    return lhs.strip(), rhs.strip(), _col(raw, "=") + 1


class _Builder:
    def __init__(self):
        self.species: list[str] = []
        self.declared = False
        self.reactions: list[tuple[dict, dict, float, int]] = []
        self.init: dict[str, int] = {}
        self.alpha: dict[str, float] = {}
        self.N: float | None = None
        self.pending: list[tuple[str, int, int]] = []

    def use(self, name: str, line: int, col: int):
        if name in self.species:
            return
        if self.declared:
            raise UnknownSpecies(f"unknown species {name!r}", line, col)
        self.species.append(name)

    def side(self, text: str, raw: str, line: int, offset: int) -> dict[str, int]:
        out: dict[str, int] = {}
        text = text.strip()
        if text in ("", "0", "∅"):
            return out
        for term in text.split("+"):
            col = _col(raw, term.strip(), offset)
            m = _TERM.fullmatch(term.strip())
            if not m:
                raise ParseError(f"bad stoichiometric term {term.strip()!r}", line, col)
            coef = int(m.group(1)) if m.group(1) else 1
            name = m.group(2)
            self.use(name, line, col)
            out[name] = out.get(name, 0) + coef
        return out


def parse_model(text: str) -> ParsedModel:
    """Parse a model file; errors carry the line and column of the first problem."""
    b = _Builder()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        head, _, rest = body.partition(" ")
        rest = rest.strip()
        if head == "species":
            if b.declared:
                raise ParseError("species declared twice", line_no, _col(raw, "species"))
            if b.species:
                raise ParseError("species must be declared before first use", line_no, 1)
            b.declared = True
            pos = raw.find("species") + len("species")
            for name in rest.split():
                col = _col(raw, name, pos)
                pos = col - 1 + len(name)
                if not _NAME.fullmatch(name):
                    raise ParseError(f"bad species name {name!r}", line_no, col)
                if name in b.species:
                    raise DuplicateSpecies(f"species {name!r} declared twice", line_no, col)
                b.species.append(name)
            if not b.species:
                raise ParseError("empty species list", line_no, len(raw) + 1)
        elif head == "init":
            name, value, vcol = _assignment(rest, raw, line_no, "init")
            ncol = _col(raw, name, raw.find("init") + 4)
            b.use(name, line_no, ncol)
            if name in b.init:
                raise DuplicateSpecies(f"initial count for {name!r} given twice", line_no, ncol)
            if re.fullmatch(r"\d+", value):
                b.init[name] = int(value)
            else:
                # accept 2e5 style integers
                v = _number(value, line_no, vcol, "an initial count")
                if v < 0 or v != int(v):
                    raise ParseError(f"initial count must be a nonnegative integer, got {value!r}",
                                     line_no, vcol)
                b.init[name] = int(v)
        elif head == "scaling":
            lhs, value, vcol = _assignment(rest, raw, line_no, "scaling")
            if lhs != "N":
                raise ParseError(f"expected 'scaling N = <real>', got {lhs!r}", line_no,
                                 _col(raw, lhs, raw.find("scaling") + 7))
            if b.N is not None:
                raise ParseError("scaling N given twice", line_no, 1)
            b.N = _number(value, line_no, vcol, "N")
            if b.N <= 1:
                raise ParseError("N must exceed 1", line_no, vcol)
        elif head == "alpha":
            name, value, vcol = _assignment(rest, raw, line_no, "alpha")
            ncol = _col(raw, name, raw.find("alpha") + 5)
            b.pending.append((name, line_no, ncol))
            if name in b.alpha:
                raise DuplicateSpecies(f"alpha for {name!r} given twice", line_no, ncol)
            b.alpha[name] = _number(value, line_no, vcol, "alpha")
        else:
            if head == "reaction":
                rxn, offset = rest, raw.find("reaction") + len("reaction")
            else:
                rxn, offset = body, raw.find(body)
            if "->" not in rxn:
                raise ParseError(f"unknown statement {head!r}", line_no, _col(raw, head))
            if "@" not in rxn:
                raise ParseError("reaction needs '@ <rate>'", line_no, len(raw.rstrip()) + 1)
            eq, rate_text = rxn.rsplit("@", 1)
            lhs, rhs = eq.split("->", 1)
            arrow = raw.find("->", offset)
            rate_col = raw.rfind("@") + 2
            reac = b.side(lhs, raw, line_no, offset)
            prod = b.side(rhs, raw, line_no, arrow + 2)
            rate = _number(rate_text, line_no, rate_col, "a rate constant")
            if rate <= 0:
                raise NonPositiveRate(f"rate constant must be positive, got {rate_text.strip()}",
                                      line_no, rate_col)
            b.reactions.append((reac, prod, rate, line_no))
    if not b.reactions:
        raise ParseError("no reactions", None, None)
    for name, line_no, col in b.pending:
        if name not in b.species:
            raise UnknownSpecies(f"unknown species {name!r}", line_no, col)
    idx = {s: i for i, s in enumerate(b.species)}
    d = len(b.species)
    reactions = []
    for reac, prod, rate, _ in b.reactions:
        a = [0] * d
        p = [0] * d
        for s, c in reac.items():
            a[idx[s]] = c
        for s, c in prod.items():
            p[idx[s]] = c
        reactions.append(Reaction(tuple(a), tuple(p), rate))
    network = ReactionNetwork(tuple(b.species), tuple(reactions))
    initial = SystemState([b.init.get(s, 0) for s in b.species])
    alpha = tuple(b.alpha.get(s, 0.0) for s in b.species) if b.alpha else None
    return ParsedModel(network, initial, b.N, alpha)


def _side_text(species, coeffs) -> str:
    terms = [(f"{c} {s}" if c != 1 else s) for s, c in zip(species, coeffs) if c]
    return " + ".join(terms) if terms else "0"


def format_model(model: ParsedModel) -> str:
    """Serialise back to the text format; parse_model(format_model(m)) reproduces m."""
    net = model.network
    lines = ["species " + " ".join(net.species)]
    for s, x in zip(net.species, model.initial.counts):
        lines.append(f"init {s} = {int(x)}")
    for r in net.reactions:
        lines.append(f"reaction {_side_text(net.species, r.reactants)} -> "
                     f"{_side_text(net.species, r.products)} @ {r.rate!r}")
    if model.N is not None:
        lines.append(f"scaling N = {model.N!r}")
    if model.alpha is not None:
        for s, a in zip(net.species, model.alpha):
            lines.append(f"alpha {s} = {a!r}")
    return "\n".join(lines) + "\n"


def load_model(path) -> ParsedModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())
