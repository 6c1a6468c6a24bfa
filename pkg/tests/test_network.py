import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ultrakin.network import (
    LadderMonomial,
    ParseError,
    conserved_charges,
    format_network,
    interaction_terms,
    parse_network,
)


def test_parse_diatomic():
    net = parse_network("A + A <k=1.0> A2")
    assert net.names == ("A", "A2")
    (r,) = net.reactions
    assert r.reactants == ((0, 2),)
    assert r.products == ((1, 1),)
    assert r.rate == 1.0


def test_parse_bath_source():
    net = parse_network("0 <k=0.5> A")
    assert net.names == ("A",)
    (r,) = net.reactions
    assert r.reactants == ()
    assert r.products == ((0, 1),)
    assert r.rate == 0.5


def test_parse_dangling_plus():
    with pytest.raises(ParseError) as info:
        parse_network("A + <k=1> B")
    assert "+" in str(info.value)
    assert info.value.line == 1


@pytest.mark.parametrize("text", [
    "",
    "A <k=-1> B",
    "A <k=1> A",
    "A <k=nan> B",
    "A B <k=1> C",
    "A <k=1>",
    "0 <k=1> 0",
])
def test_parse_rejects(text):
    with pytest.raises((ParseError, ValueError)):
        parse_network(text)


def test_parse_multiline_and_comments():
    text = """
    # concurrent reaction
    A + A <k_1=0.3> A2   # association
    0 <k_2=2.0> A
    """
    net = parse_network(text)
    assert net.names == ("A", "A2")
    assert [r.rate for r in net.reactions] == [0.3, 2.0]
    assert net.stoichiometry() == [[-2, 1], [1, 0]]
    assert parse_network("A + A <k=0.3> A2; 0 <k=2.0> A").stoichiometry() == net.stoichiometry()


def test_interaction_terms_table_rows():
    (m,) = interaction_terms(parse_network("A + A <k=0.7> A2"))
    assert m.equivalent(LadderMonomial(0.7, ((2, 0), (0, 1))))
    (m,) = interaction_terms(parse_network("0 <k=1.5> A"))
    # k a_A + h.c. is the same operator as k a_A^dag + h.c.
    assert m.equivalent(LadderMonomial(1.5, ((1, 0),)))
    (m,) = interaction_terms(parse_network("0 <k=1> A + B"))
    assert m.equivalent(LadderMonomial(1.0, ((0, 1), (0, 1))))
    (m,) = interaction_terms(parse_network("A + B <k=2> C"))
    assert m.equivalent(LadderMonomial(2.0, ((1, 0), (1, 0), (0, 1))))


@pytest.mark.parametrize("text, expected", [
    ("A + A <k=1> A2", [(1, 2)]),
    ("A + A <k=1> A2\n0 <k=1> A", []),
    ("A <k=1> B", [(1, 1)]),
    ("A + B <k=1> C", [(1, 0, 1), (0, 1, 1)]),
])
def test_conserved_charges(text, expected):
    net = parse_network(text)
    charges = conserved_charges(net)
    assert len(charges) == len(expected)
    for c in charges:
        assert all(c.balances(r) for r in net.reactions)
    if text.startswith("A <k=1> B"):
        assert tuple(charges[0]) == (1, 1)
    if expected and len(expected) == 1:
        assert tuple(charges[0]) == expected[0]


_species = st.sampled_from(["A", "B", "C", "A2", "X_1"])


@st.composite
def _side(draw):
    names = draw(st.lists(_species, min_size=0, max_size=3, unique=True))
    return [(n, draw(st.integers(1, 3))) for n in names]


@st.composite
def _network_text(draw):
    lines = []
    for _ in range(draw(st.integers(1, 3))):
        lhs = draw(_side())
        rhs = [(n, c) for n, c in draw(_side()) if n not in {m for m, _ in lhs}]
        if not lhs and not rhs:
            lhs = [("A", 1)]
        k = draw(st.floats(0, 10, allow_nan=False))

        def fmt(side):
            if not side:
                return "0"
            return " + ".join(" + ".join([n] * c) for n, c in side)

        lines.append(f"{fmt(lhs)} <k={k!r}> {fmt(rhs)}")
    return "\n".join(lines)


@settings(max_examples=200, deadline=None)
@given(_network_text())
def test_format_roundtrip(text):
    net = parse_network(text)
    again = parse_network(format_network(net))
    assert again == net


@settings(max_examples=200, deadline=None)
@given(_network_text())
def test_charges_balance_every_reaction(text):
    net = parse_network(text)
    charges = conserved_charges(net)
    for c in charges:
        assert all(isinstance(w, int) for w in c)
        assert all(c.balances(r) for r in net.reactions)
        assert math.gcd(*c.weights) == 1
    if all(sum(m for _, m in r.reactants) == sum(n for _, n in r.products) for r in net.reactions):
        assert (1,) * len(net.species) in [tuple(c) for c in charges]
