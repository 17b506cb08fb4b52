import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURE_NAMES, load, random_env, source
from fwdsample.factorgraph import extract_factors
from fwdsample.dataflow import analyze
from fwdsample.frontend import FrontendError, parse, parse_statement, pretty
from fwdsample.frontend.analysis import free_vars
from fwdsample.frontend.ast import (
    Assign,
    BinOp,
    Call,
    Declaration,
    For,
    If,
    Num,
    Tilde,
    Unary,
    Var,
    children,
)
from fwdsample.runtime import Interpreter


def test_eight_schools_blocks_and_model_statements():
    prog = load("eight_schools")
    assert [b.kind for b in prog.blocks] == ["data", "parameters", "model", "generated_quantities"]
    assert len(prog.block_stmts("model")) == 4


def test_empty_model_has_no_factors():
    prog = parse("parameters { real x; } model { }")
    assert extract_factors(prog, analyze(prog)) == []


def test_undeclared_identifier():
    with pytest.raises(FrontendError) as e:
        parse("model { x ~ normal(0,1); }")
    assert e.value.kind == "undeclared"
    assert e.value.loc.line == 1


@pytest.mark.parametrize("src,kind", [
    ("parameters { real x; } model { x ~ normal(0, 1) }", "syntax"),
    ("parameters { real x; } model { x ~ normal(0, 1); $ }", "lexical"),
    ("parameters { real x; } generated quantities { target += x; }", "placement"),
    ("parameters { real x; } parameters { real y; }", "duplicate-block"),
    ("parameters { real x; real x; }", "duplicate-declaration"),
    ("parameters { real x; } model { x ~ normal(0); }", "arity"),
    ("parameters { real x; } model { x ~ student_t(3, 0, 1); }", "unsupported"),
])
def test_diagnostics(src, kind):
    with pytest.raises(FrontendError) as e:
        parse(src)
    assert e.value.kind == kind


def test_use_before_declaration_is_rejected():
    with pytest.raises(FrontendError):
        parse("model { real a; a = b; } parameters { real b; }")


def test_statement_ids_follow_source_order():
    prog = load("eight_schools")
    ids = [s.id for s in prog.statements()]
    assert ids == sorted(ids) and len(set(ids)) == len(ids)
    assert ids[0] == 1


def _first_model_stmt(body: str, decls: str = "real x; real mu; real sigma; real a; int J; real t[J];"):
    prog = parse(f"data {{ {decls} }} model {{ {body} }}")
    return prog.block_stmts("model")[0]


def test_free_vars_density():
    s = _first_model_stmt("target += normal_lpdf(x | mu, sigma);")
    assert free_vars(s) == {"x", "mu", "sigma"}


def test_free_vars_assignment():
    s = parse_statement("y = 3;")
    assert free_vars(s) == {"y"}


def test_free_vars_loop_binder_excluded():
    prog = parse("data { int J; real a; } transformed data { real t[J]; for (i in 1:J) { t[i] = a * i; } }")
    loop = prog.block_stmts("transformed_data")[1]
    assert free_vars(loop) == {"t", "a", "J"}


def _walk_syntax(s):
    """Independent free-variable walk with explicit binder tracking."""
    out = set()

    def ex(e, bound):
        if isinstance(e, Var):
            if e.name not in bound:
                out.add(e.name)
        elif e is None or isinstance(e, Num):
            pass
        else:
            for v in vars(e).values():
                if isinstance(v, tuple):
                    for x in v:
                        if hasattr(x, "__dataclass_fields__"):
                            ex(x, bound)
                elif hasattr(v, "__dataclass_fields__") and not type(v).__name__ == "Loc":
                    ex(v, bound)

    def st_(s, bound):
        if isinstance(s, For):
            ex(s.lo, bound)
            ex(s.hi, bound)
            for c in s.body:
                st_(c, bound | {s.var})
        elif isinstance(s, If):
            ex(s.cond, bound)
            for c in s.then + (s.orelse or ()):
                st_(c, bound)
        elif isinstance(s, Declaration):
            out.add(s.name)
            ex(s.init, bound)
        elif isinstance(s, Assign):
            if s.name not in bound:
                out.add(s.name)
            ex(s.index, bound)
            ex(s.value, bound)
        elif isinstance(s, Tilde):
            ex(s.lhs, bound)
            for a in s.args:
                ex(a, bound)
        elif hasattr(s, "value"):
            ex(s.value, bound)

    st_(s, frozenset())
    out.discard("target")
    return out


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_free_vars_matches_syntactic_walk(name):
    for s in load(name).statements():
        assert free_vars(s) == _walk_syntax(s)


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_free_vars_monotone_under_nesting(name):
    for s in load(name).statements():
        kids = set().union(*(free_vars(c) for c in children(s))) if children(s) else set()
        if isinstance(s, For):
            kids.discard(s.var)
        assert free_vars(s) >= kids


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_round_trip(name):
    prog = load(name)
    again = parse(pretty(prog))
    assert again.blocks == prog.blocks
    assert pretty(again) == pretty(prog)


@pytest.mark.parametrize("name", FIXTURE_NAMES)
def test_tilde_desugaring_equivalence(name, rng):
    prog = load(name)
    tildes = [s for s in prog.statements() if isinstance(s, Tilde)]
    for s in tildes:
        env = random_env(prog, rng, 100)
        a = Interpreter(100).run([s], dict(env))
        b = Interpreter(100).run([s.desugar()], dict(env))
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


# ------------------------------------------------------- printer round trip

NAMES = st.sampled_from(["a", "b", "mu", "x1"])
LEAVES = st.one_of(
    NAMES.map(Var),
    st.integers(0, 1000).map(lambda n: Num(n, True)),
    st.floats(0, 1e6, allow_nan=False, allow_infinity=False).map(lambda x: Num(x, False)),
)


def _extend(inner):
    return st.one_of(
        st.tuples(st.sampled_from(["+", "-", "*", "/", "^", "<", "==", "&&"]), inner, inner)
        .map(lambda t: BinOp(t[0], t[1], t[2])),
        inner.map(lambda e: Unary("-", e)),
        st.tuples(st.sampled_from(["log", "exp", "sqrt", "square"]), inner).map(lambda t: Call(t[0], (t[1],))),
        st.tuples(inner, inner, inner).map(lambda t: Call("normal_lpdf", t)),
    )


EXPRS = st.recursive(LEAVES, _extend, max_leaves=12)


@settings(max_examples=300, deadline=None)
@given(EXPRS)
def test_expression_print_parse_round_trip(e):
    from fwdsample.frontend.printer import expr

    s = parse_statement(f"z = {expr(e)};")
    assert s.value == e
