import itertools

from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import load
from fwdsample import satcore as sat
from fwdsample.factorgraph import build_factor_graph, restrict_for_prior
from fwdsample.frontend import parse
from fwdsample.transform import encode, recognizable_edges

A = sat.Atom


def _holds(f, true):
    """Independent evaluator for the truth-table oracle."""
    if isinstance(f, sat.Atom):
        return f.name in true
    if isinstance(f, sat.Not):
        return not _holds(f.arg, true)
    if isinstance(f, sat.And):
        return all(_holds(a, true) for a in f.args)
    if isinstance(f, sat.Or):
        return any(_holds(a, true) for a in f.args)
    return (not _holds(f.lhs, true)) or _holds(f.rhs, true)


def _truth_table(f, universe, projection):
    out = set()
    for bits in itertools.product((False, True), repeat=len(universe)):
        true = {n for n, b in zip(universe, bits) if b}
        if _holds(f, true):
            out.add(frozenset(true & set(projection)))
    return sorted(out, key=sorted)


def test_atom_is_unit_clause():
    c = sat.to_cnf(A("a"))
    assert c.clauses == [(1,)]


def test_implication_is_one_clause():
    c = sat.to_cnf(sat.Implies(A("a"), A("b")))
    assert c.clauses == [(-1, 2)]


def test_contradiction_has_no_solutions():
    c = sat.to_cnf(sat.conj(A("a"), sat.Not(A("a"))))
    assert sat.enumerate_projected(c) == []


def test_disjunction_solutions():
    c = sat.to_cnf(sat.disj(A("a"), A("b")))
    assert sat.enumerate_projected(c) == [frozenset({"a"}), frozenset({"a", "b"}), frozenset({"b"})]


def _rule_solutions(g):
    enc = encode(g, recognizable_edges(g))
    return enc, sat.enumerate_projected(enc.cnf())


def test_eight_schools_rules_have_one_solution():
    g = restrict_for_prior(build_factor_graph(load("eight_schools")))
    enc, sols = _rule_solutions(g)
    assert len(sols) == 1
    # truth table over all atoms is small enough here
    assert sols == _truth_table(enc.formula, enc.universe, enc.projection)


def test_challenge_two_rules_have_two_solutions():
    g = build_factor_graph(load("challenge_two"))
    enc, sols = _rule_solutions(g)
    assert len(sols) == 2
    assert sols == _truth_table(enc.formula, enc.universe, enc.projection)


def test_triangle_rules_unsatisfiable():
    g = build_factor_graph(load("challenge_triangle"))
    _, sols = _rule_solutions(g)
    assert sols == []


def test_tseitin_aux_atoms_stay_out_of_projection():
    # a disjunction of five 3-term conjunctions distributes into 243 clauses: too many
    big = sat.disj(*(sat.conj(*(A(f"x{i}{j}") for j in range(3))) for i in range(5)))
    keep = ["x00", "x01", "x10"]
    c = sat.to_cnf(big, projection=keep)
    assert c.aux
    assert not set(c.projection) & c.aux
    assert sat.enumerate_projected(c) == _truth_table(big, sorted(sat.atoms_of(big)), keep)


def test_dimacs_export():
    c = sat.to_cnf(sat.conj(sat.disj(A("a"), A("b")), sat.Not(A("c"))))
    text = c.to_dimacs()
    lines = text.splitlines()
    assert f"p cnf {c.num_vars} {len(c.clauses)}" in lines
    body = [ln for ln in lines if ln and not ln.startswith(("c", "p"))]
    assert len(body) == len(c.clauses) and all(ln.endswith(" 0") for ln in body)
    assert any(ln.startswith("c projection") for ln in lines)


# ------------------------------------------------------------ properties

NAMES = ["a", "b", "c", "d", "e"]
FORMULAS = st.recursive(
    st.sampled_from(NAMES).map(A),
    lambda inner: st.one_of(
        inner.map(sat.Not),
        st.lists(inner, min_size=0, max_size=3).map(lambda xs: sat.And(tuple(xs))),
        st.lists(inner, min_size=0, max_size=3).map(lambda xs: sat.Or(tuple(xs))),
        st.tuples(inner, inner).map(lambda t: sat.Implies(*t)),
    ),
    max_leaves=14,
)


@settings(max_examples=300, deadline=None)
@given(FORMULAS, st.sets(st.sampled_from(NAMES)))
def test_enumeration_matches_truth_table(f, proj):
    universe = sorted(set(NAMES))
    projection = sorted(proj)
    c = sat.to_cnf(f, universe, projection)
    stats = sat.enumerate_with_stats(c)
    assert stats.solutions == _truth_table(f, universe, projection)
    assert stats.calls == len(stats.solutions) + 1


@settings(max_examples=100, deadline=None)
@given(FORMULAS)
def test_enumeration_is_deterministic(f):
    c1 = sat.to_cnf(f, NAMES)
    c2 = sat.to_cnf(f, NAMES)
    assert sat.enumerate_projected(c1) == sat.enumerate_projected(c2)


@settings(max_examples=200, deadline=None)
@given(FORMULAS)
def test_cnf_is_equisatisfiable(f):
    c = sat.to_cnf(f, NAMES)
    model = sat.DpllSolver().solve(c.clauses, c.num_vars)
    expected = bool(_truth_table(f, NAMES, NAMES))
    assert (model is not None) == expected
    if model is not None:
        assert _holds(f, {c.atoms[i - 1] for i in range(1, len(NAMES) + 1) if model[i]})


def test_program_rules_cross_check_small_graph():
    g = build_factor_graph(parse("parameters { real x; real y; } model { x ~ normal(0,1); y ~ normal(x,1); }"))
    enc, sols = _rule_solutions(g)
    assert sols == _truth_table(enc.formula, enc.universe, enc.projection)
