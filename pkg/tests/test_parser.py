import pytest

from tauleap_mlmc.errors import DuplicateSpecies, NonPositiveRate, ParseError, UnknownSpecies
from tauleap_mlmc.model import dimerization
from tauleap_mlmc.parser import format_model, parse_model

DIMER = """\
# dimerization at N = 1e6
2 A -> B @ 1e-6
B -> 2 A @ 1
init A = 200000
init B = 200000
scaling N = 1e6
alpha A = 1
alpha B = 1
"""


def test_dimerization_file_matches_builtin():
    parsed = parse_model(DIMER)
    ref = dimerization(1e6)
    assert parsed.network == ref.network
    assert parsed.initial == ref.initial
    assert parsed.N == 1e6 and parsed.alpha == (1.0, 1.0)
    assert parsed.to_model().scaling == ref.scaling


@pytest.mark.parametrize("text", [
    DIMER,
    "species X Y Z\nreaction X + Y -> 2 Z @ 0.5\nZ -> 0 @ 3  # comment\n -> X @ 7\ninit Z = 4\n",
    "A->B@2\n",
])
def test_roundtrip(text):
    m = parse_model(text)
    again = parse_model(format_model(m))
    assert again == m
    assert format_model(again) == format_model(m)


def test_empty_sides_and_inferred_species():
    m = parse_model("0 -> A @ 1\nA + B -> @ 2\n")
    assert m.network.species == ("A", "B")
    r0, r1 = m.network.reactions
    assert r0.reactants == (0, 0) and r0.products == (1, 0)
    assert r1.reactants == (1, 1) and r1.products == (0, 0)
    assert m.N is None and m.alpha is None


def test_coefficient_forms():
    m = parse_model("species A B\n2A + 3 B -> A @ 1\n")
    assert m.network.reactions[0].reactants == (2, 3)


def test_whitespace_insensitive():
    a = parse_model("species A B\nreaction 2 A->B@1\ninit A=5\n")
    b = parse_model("  species   A  B \n reaction   2   A  ->  B  @  1 \n init  A  =  5\n")
    assert a == b


def test_no_reactions():
    with pytest.raises(ParseError, match="no reactions"):
        parse_model("species A\ninit A = 3\n")


def test_nonpositive_rate_position():
    with pytest.raises(NonPositiveRate) as e:
        parse_model("species A B\nreaction A -> B @ -1\n")
    assert e.value.line == 2 and e.value.column is not None


def test_unknown_species():
    with pytest.raises(UnknownSpecies) as e:
        parse_model("species A\nreaction A -> C @ 1\n")
    assert e.value.line == 2
    with pytest.raises(UnknownSpecies):
        parse_model("species A\nA -> 0 @ 1\nalpha Q = 1\n")


def test_duplicate_species():
    with pytest.raises(DuplicateSpecies) as e:
        parse_model("species A B A\nA -> B @ 1\n")
    assert (e.value.line, e.value.column) == (1, 13)
    with pytest.raises(DuplicateSpecies):
        parse_model("A -> B @ 1\ninit A = 1\ninit A = 2\n")


@pytest.mark.parametrize("text,line", [
    ("A -> B 1\n", 1),
    ("A -> B @ 1\nfoo bar\n", 2),
    ("A -> B @ x\n", 1),
    ("A -> B @ 1\ninit A = -3\n", 2),
    ("A -> B @ 1\ninit A = 2.5\n", 2),
    ("A -> B @ 1\nscaling M = 3\n", 2),
    ("A -> B @ 1\nscaling N = 0.5\n", 2),
    ("A -> 2x+ @ 1\n", 1),
])
def test_errors_carry_line(text, line):
    with pytest.raises(ParseError) as e:
        parse_model(text)
    assert e.value.line == line
    assert f"line {line}" in str(e.value)


def test_scientific_initial_count():
    assert parse_model("A -> 0 @ 1\ninit A = 2e5\n").initial.counts[0] == 200000
