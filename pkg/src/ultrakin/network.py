"""Reaction networks: a small text format, ladder monomials and conserved charges.

A network file holds one reversible reaction per line (or separated by ``;``)::

    A + A <k=1.0> A2
    0 <k2=0.01> A        # bath <-> A

``0`` stands for the bath (an empty side).  Repeated species on one side are
merged into a stoichiometric coefficient, so ``A + A`` and ``2 A`` are the
same thing.  A species may not appear on both sides of one reaction.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

__all__ = [
    "ParseError",
    "Species",
    "Reaction",
    "ReactionNetwork",
    "LadderMonomial",
    "ChargeVector",
    "parse_network",
    "format_network",
    "interaction_terms",
    "conserved_charges",
]


class ParseError(ValueError):
    """Malformed network text.  ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Species:
    name: str
    ground_energy: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.ground_energy):
            raise ValueError(f"ground energy of {self.name!r} must be finite")


@dataclass(frozen=True)
class Reaction:
    """``sum mu_i A_i <k> sum nu_j B_j`` with species given by index."""

    reactants: tuple[tuple[int, int], ...]
    products: tuple[tuple[int, int], ...]
    rate: float
    label: str | None = None

    def __post_init__(self):
        if not self.reactants and not self.products:
            raise ValueError("reaction must involve at least one species")
        if not (self.rate >= 0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be finite and non-negative, got {self.rate}")
        for side in (self.reactants, self.products):
            idx = [s for s, _ in side]
            if len(set(idx)) != len(idx):
                raise ValueError("species repeated within one side")
            if any(c < 1 for _, c in side):
                raise ValueError("stoichiometric coefficients must be >= 1")
        if {s for s, _ in self.reactants} & {s for s, _ in self.products}:
            raise ValueError("species on both sides of one reaction")

    @property
    def order(self) -> int:
        return max(sum(c for _, c in self.reactants), sum(c for _, c in self.products))


@dataclass(frozen=True)
class ReactionNetwork:
    species: tuple[Species, ...]
    reactions: tuple[Reaction, ...]

    def __post_init__(self):
        names = [s.name for s in self.species]
        if len(set(names)) != len(names):
            raise ValueError("species names must be unique")
        if not self.reactions:
            raise ValueError("a network needs at least one reaction")
        n = len(self.species)
        for r in self.reactions:
            for s, _ in r.reactants + r.products:
                if not 0 <= s < n:
                    raise ValueError(f"species index {s} out of range")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(s.name for s in self.species)

    @property
    def energies(self) -> tuple[float, ...]:
        return tuple(s.ground_energy for s in self.species)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown species {name!r}") from None

    def with_energies(self, energies: Mapping[str, float] | Sequence[float]) -> "ReactionNetwork":
        """Copy of the network with new single-mode ground energies."""
        if isinstance(energies, Mapping):
            unknown = set(energies) - set(self.names)
            if unknown:
                raise KeyError(f"unknown species {sorted(unknown)}")
            species = tuple(replace(s, ground_energy=float(energies.get(s.name, s.ground_energy)))
                            for s in self.species)
        else:
            if len(energies) != len(self.species):
                raise ValueError("one energy per species expected")
            species = tuple(replace(s, ground_energy=float(e)) for s, e in zip(self.species, energies))
        return ReactionNetwork(species, self.reactions)

    def with_rates(self, rates: Sequence[float]) -> "ReactionNetwork":
        if len(rates) != len(self.reactions):
            raise ValueError("one rate per reaction expected")
        return ReactionNetwork(self.species,
                               tuple(replace(r, rate=float(k)) for r, k in zip(self.reactions, rates)))

    def stoichiometry(self) -> list[list[int]]:
        """Net change matrix (species x reactions): products minus reactants."""
        S = [[0] * len(self.reactions) for _ in self.species]
        for j, r in enumerate(self.reactions):
            for s, mu in r.reactants:
                S[s][j] -= mu
            for s, nu in r.products:
                S[s][j] += nu
        return S

    def __str__(self) -> str:
        return format_network(self)


# --------------------------------------------------------------------------
# text format

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<comment>\#[^\n]*)
  | (?P<newline>\n)
  | (?P<semi>;)
  | (?P<plus>\+)
  | (?P<arrow><[^<>\n]*>)
  | (?P<int>\d+)(?![\w.])
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<bad>\S)
    """,
    re.VERBOSE,
)
_ARROW_RE = re.compile(
    r"^<\s*(?P<label>k(?:_?\d+)?)\s*=\s*(?P<value>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*>$"
)


def _tokenize(text: str):
    line, line_start = 1, 0
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        col = m.start() - line_start + 1
        if kind == "newline":
            yield "end", "\n", line, col
            line += 1
            line_start = m.end()
        elif kind == "semi":
            yield "end", ";", line, col
        elif kind in ("ws", "comment"):
            continue
        elif kind == "bad":
            raise ParseError(f"unknown token {m.group()!r}", line, col)
        else:
            yield kind, m.group(), line, col
    yield "end", "", line, len(text) - line_start + 1


def _parse_side(tokens, registry, order):
    """Parse ``0`` or ``term (+ term)*`` from a token list; returns merged dict."""
    if not tokens:
        return None
    kind, value, line, col = tokens[0]
    if kind == "int" and value == "0" and len(tokens) == 1:
        return {}
    counts: dict[int, int] = {}
    expect_term = True
    i = 0
    while i < len(tokens):
        kind, value, line, col = tokens[i]
        if expect_term:
            coeff = 1
            if kind == "int":
                coeff = int(value)
                if coeff < 1:
                    raise ParseError("stoichiometric coefficient must be positive", line, col)
                i += 1
                if i >= len(tokens):
                    raise ParseError("expected species name after coefficient", line, col + len(value))
                kind, value, line, col = tokens[i]
            if kind != "ident":
                raise ParseError(f"expected species name, got {value!r}", line, col)
            if value not in registry:
                registry[value] = len(order)
                order.append(value)
            s = registry[value]
            counts[s] = counts.get(s, 0) + coeff
            expect_term = False
        else:
            if kind != "plus":
                raise ParseError(f"expected '+' or rate, got {value!r}", line, col)
            expect_term = True
        i += 1
    if expect_term:
        _, value, line, col = tokens[-1]
        raise ParseError("dangling '+'", line, col)
    return counts


def parse_network(text: str) -> ReactionNetwork:
    """Parse network text into a :class:`ReactionNetwork`.

    Species are numbered in order of first appearance.  Raises
    :class:`ParseError` with the offending line and column.
    """
    registry: dict[str, int] = {}
    order: list[str] = []
    reactions: list[Reaction] = []
    labels: set[str] = set()
    current: list = []
    last = (1, 1)

    def finish(stmt):
        arrows = [i for i, t in enumerate(stmt) if t[0] == "arrow"]
        if not arrows:
            _, value, line, col = stmt[0]
            raise ParseError("reaction without rate arrow '<k=...>'", line, col)
        if len(arrows) > 1:
            _, value, line, col = stmt[arrows[1]]
            raise ParseError("duplicate rate specification", line, col)
        a = arrows[0]
        _, arrow, line, col = stmt[a]
        m = _ARROW_RE.match(arrow)
        if not m:
            raise ParseError(f"malformed rate arrow {arrow!r}", line, col)
        rate = float(m.group("value"))
        if rate < 0:
            raise ParseError("rate must be non-negative", line, col)
        label = m.group("label").replace("_", "")
        if label != "k":
            if label in labels:
                raise ParseError(f"duplicate rate specification {label!r}", line, col)
            labels.add(label)
        left, right = stmt[:a], stmt[a + 1:]
        if not left:
            raise ParseError("missing reactant side (use 0 for the bath)", line, col)
        if not right:
            raise ParseError("missing product side (use 0 for the bath)", line, col + len(arrow))
        lhs = _parse_side(left, registry, order)
        rhs = _parse_side(right, registry, order)
        both = set(lhs) & set(rhs)
        if both:
            name = order[min(both)]
            raise ParseError(f"species {name!r} on both sides of one reaction", line, col)
        reactions.append(Reaction(tuple(sorted(lhs.items())), tuple(sorted(rhs.items())),
                                  rate, None if label == "k" else label))

    for tok in _tokenize(text):
        last = tok[2:]
        if tok[0] == "end":
            if current:
                finish(current)
                current = []
        else:
            current.append(tok)
    if not reactions:
        raise ParseError("no reactions found", *last)
    return ReactionNetwork(tuple(Species(n) for n in order), tuple(reactions))


def _format_side(side, names):
    if not side:
        return "0"
    return " + ".join(names[s] if c == 1 else f"{c} {names[s]}" for s, c in side)


def format_network(network: ReactionNetwork) -> str:
    """Render a network back to text that reparses to an equal network."""
    names = network.names
    lines = []
    for r in network.reactions:
        label = r.label or "k"
        lines.append(f"{_format_side(r.reactants, names)} <{label}={r.rate!r}> "
                     f"{_format_side(r.products, names)}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# algebra

@dataclass(frozen=True)
class LadderMonomial:
    """``rate * prod_s (a_s^dag)^c_s (a_s)^d_s`` plus its Hermitian conjugate.

    ``factors[s] = (c_s, d_s)``.  Each species carries creation or
    annihilation powers, never both, so operator ordering is unambiguous.
    """

    rate: float
    factors: tuple[tuple[int, int], ...]

    def conjugate(self) -> "LadderMonomial":
        return LadderMonomial(self.rate, tuple((d, c) for c, d in self.factors))

    def equivalent(self, other: "LadderMonomial") -> bool:
        """Same operator once the implied ``+ h.c.`` is included."""
        return self.rate == other.rate and other.factors in (self.factors, self.conjugate().factors)

    @property
    def is_diagonal(self) -> bool:
        return all(c == d for c, d in self.factors)


def interaction_terms(network: ReactionNetwork) -> list[LadderMonomial]:
    """One monomial per reaction: creation on reactants, annihilation on products."""
    out = []
    for r in network.reactions:
        factors = [[0, 0] for _ in network.species]
        for s, mu in r.reactants:
            factors[s][0] = mu
        for s, nu in r.products:
            factors[s][1] = nu
        out.append(LadderMonomial(r.rate, tuple(tuple(f) for f in factors)))
    return out


@dataclass(frozen=True)
class ChargeVector:
    """Integer weights ``w`` such that ``sum_s w_s n_s`` commutes with H."""

    weights: tuple[int, ...]

    def __post_init__(self):
        if not any(self.weights):
            raise ValueError("charge vector must be nonzero")

    def value(self, occupations: Iterable[int]) -> int:
        return sum(w * n for w, n in zip(self.weights, occupations))

    def balances(self, reaction: Reaction) -> bool:
        lhs = sum(self.weights[s] * mu for s, mu in reaction.reactants)
        rhs = sum(self.weights[s] * nu for s, nu in reaction.products)
        return lhs == rhs

    def __iter__(self):
        return iter(self.weights)

    def __len__(self):
        return len(self.weights)


def _canonical(vec: Sequence[Fraction]) -> tuple[int, ...]:
    denom = math.lcm(*(f.denominator for f in vec))
    ints = [int(f * denom) for f in vec]
    g = math.gcd(*ints)
    ints = [i // g for i in ints]
    first = next(i for i in ints if i)
    return tuple(-i for i in ints) if first < 0 else tuple(ints)


def _rref(rows: list[list[Fraction]], ncols: int):
    rows = [r[:] for r in rows]
    pivots = []
    r = 0
    for c in range(ncols):
        p = next((i for i in range(r, len(rows)) if rows[i][c] != 0), None)
        if p is None:
            continue
        rows[r], rows[p] = rows[p], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(len(rows)):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [a - f * b for a, b in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == len(rows):
            break
    return rows[:r], pivots


def _rank(vectors: list[Sequence[Fraction]], ncols: int) -> int:
    if not vectors:
        return 0
    return len(_rref([list(map(Fraction, v)) for v in vectors], ncols)[1])


def conserved_charges(network: ReactionNetwork) -> list[ChargeVector]:
    """Integer basis of the charges conserved by every reaction.

    Solves ``sum_reactants w mu = sum_products w nu`` exactly over the
    rationals.  When the plain particle count ``(1, ..., 1)`` is conserved it
    is returned first.
    """
    n = len(network.species)
    rows = [[Fraction(0)] * n for _ in network.reactions]
    for j, r in enumerate(network.reactions):
        for s, mu in r.reactants:
            rows[j][s] += mu
        for s, nu in r.products:
            rows[j][s] -= nu
    reduced, pivots = _rref(rows, n)
    free = [c for c in range(n) if c not in pivots]
    basis = []
    for f in free:
        vec = [Fraction(0)] * n
        vec[f] = Fraction(1)
        for row, p in zip(reduced, pivots):
            vec[p] = -row[f]
        basis.append(vec)

    ones = [Fraction(1)] * n
    if basis and all(sum(r[s] for s in range(n)) == 0 for r in rows):
        chosen = [ones]
        for vec in basis:
            if _rank(chosen + [vec], n) > len(chosen):
                chosen.append(vec)
            if len(chosen) == len(basis):
                break
        basis = chosen
    return [ChargeVector(_canonical(v)) for v in basis]
