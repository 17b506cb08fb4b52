import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIXTURE_NAMES, load, random_env
from fwdsample.dataflow import (
    ENTRY,
    EXIT,
    analyze,
    backward_slice,
    build_cfg,
    dependent_vars,
    reaching_definitions,
    slice_ids,
    transitive_closure,
)
from fwdsample.frontend import parse
from fwdsample.frontend.analysis import free_vars
from fwdsample.frontend.ast import Assign, Declaration, For, If
from fwdsample.runtime import Interpreter, RngPool, RuntimeFailure

# loops, conditionals, indexed writes and intermediates in every block
MIXED = """
data { int N; real y[N]; real c; }
transformed data {
  real s;
  s = 0;
  for (i in 1:N) { s = s + y[i]; }
}
parameters { real mu; real<lower=0> sd; real z; }
transformed parameters {
  real m2;
  real arr[2];
  m2 = mu * 2;
  arr[1] = mu;
  arr[2] = sd;
}
model {
  real t;
  t = 0;
  if (z > 0) { t = z; } else { t = -c; }
  target += -t;
  mu ~ normal(s, 1);
  sd ~ exponential(1);
  z ~ normal(0, 1);
  y ~ normal(m2, arr[2]);
}
generated quantities {
  real w;
  w = normal_rng(mu, sd);
}
"""


def _reachable(cfg, start, forward=True):
    adj = cfg.succs() if forward else cfg.preds()
    seen, stack = {start}, [start]
    while stack:
        for m in adj[stack.pop()]:
            if m not in seen:
                seen.add(m)
                stack.append(m)
    return seen


def test_straight_line_model_is_a_chain():
    prog = parse("parameters { real a; } model { a ~ normal(0, 1); target += a; target += -a; }")
    cfg = build_cfg(prog)
    assert cfg.edges == {(ENTRY, 1), (1, 2), (2, 3), (3, 4), (4, EXIT)}
    assert not cfg.back_edges


def test_for_loop_has_one_back_edge():
    prog = parse("data { int N; } parameters { real a; } model { for (i in 1:N) { target += -a; } }")
    cfg = build_cfg(prog)
    assert len(cfg.back_edges) == 1
    (src, dst), = cfg.back_edges
    assert isinstance(prog.statement(dst), For)


def test_conditional_has_join_node():
    prog = parse("parameters { real a; } model { if (a > 0) { target += -a; } else { target += a; } }")
    cfg = build_cfg(prog)
    joins = [n for n in cfg.nodes if n < EXIT]
    assert len(joins) == 1
    assert len(cfg.preds()[joins[0]]) == 2


def test_eight_schools_has_no_back_edges():
    prog = load("eight_schools")
    loops = [s for s in prog.statements() if isinstance(s, For)]
    assert len(build_cfg(prog).back_edges) == len(loops) == 0


@pytest.mark.parametrize("name", FIXTURE_NAMES + ["<mixed>"])
def test_cfg_reachability(name):
    prog = parse(MIXED) if name == "<mixed>" else load(name)
    cfg = build_cfg(prog)
    assert _reachable(cfg, ENTRY) == set(cfg.nodes)
    assert _reachable(cfg, EXIT, forward=False) == set(cfg.nodes)


def _reaching_at(src, pred):
    prog = parse(src)
    cfg = build_cfg(prog)
    rd = reaching_definitions(cfg)
    use = next(s for s in prog.statements() if pred(s))
    return prog, rd.entry[use.id]


def test_strong_update_kills():
    prog, reach = _reaching_at(
        "model { real a; real b; a = 1; a = 2; b = a; }",
        lambda s: isinstance(s, Assign) and s.name == "b")
    defs = {d for v, d in reach if v == "a"}
    assert defs == {4}


def test_weak_update_keeps_both():
    prog, reach = _reaching_at(
        "model { real x[2]; real b; x[1] = 1; x[2] = 2; b = x[1]; }",
        lambda s: isinstance(s, Assign) and s.name == "b")
    # hand-run gen/kill: the declaration and both indexed writes reach
    assert {d for v, d in reach if v == "x"} == {1, 3, 4}


def test_loop_carried_definition_reaches_loop_entry():
    prog = parse("data { int N; } model { real s; s = 0; for (i in 1:N) { s = s + 1; } }")
    cfg = build_cfg(prog)
    rd = reaching_definitions(cfg)
    body = next(s for s in prog.statements() if isinstance(s, Assign) and s.name == "s" and s.id > 3)
    loop = next(s for s in prog.statements() if isinstance(s, For))
    assert ("s", body.id) in rd.entry[loop.id]
    assert ("s", body.id) in rd.entry[body.id]


def test_control_dependence_edge():
    prog = parse("parameters { real c; } model { if (c > 0) { target += -c; } }")
    dep = analyze(prog)
    cond = next(s for s in prog.statements() if isinstance(s, If))
    assert (cond.id, cond.then[0].id) in dep.edges


def test_independent_assignments_have_no_edge():
    prog = parse("model { real a; real b; a = 1; b = 2; }")
    dep = analyze(prog)
    assert (3, 4) not in dep.edges and (4, 3) not in dep.edges


def _naive_dependences(prog):
    """Flow-insensitive over-approximation: any earlier (or loop-mate) definition of a used name."""
    stmts = prog.statements()
    defs = {}
    for s in stmts:
        names = set()
        if isinstance(s, (Declaration, Assign)):
            names.add(s.name)
        if isinstance(s, For):
            names.add(s.var)
        defs[s.id] = names
    loops = {s.id: {c.id for c in _descendants(s)} for s in stmts if isinstance(s, For)}
    edges = set()
    for a in stmts:
        for b in stmts:
            uses = free_vars(b) if not isinstance(b, (For, If)) else set()
            if isinstance(b, (For, If)):
                from fwdsample.frontend.analysis import header_vars
                uses = header_vars(b)
            same_loop = any(a.id in ids and b.id in ids for ids in loops.values())
            if defs[a.id] & uses and (a.id < b.id or same_loop):
                edges.add((a.id, b.id))
        for c in prog.enclosing_control(a.id):
            edges.add((c, a.id))
    return transitive_closure(edges)


def _descendants(s):
    out = []
    for c in (s.body if isinstance(s, For) else ()) + (s.then + (s.orelse or ()) if isinstance(s, If) else ()):
        out.append(c)
        out.extend(_descendants(c))
    return out


@pytest.mark.parametrize("name", FIXTURE_NAMES + ["<mixed>"])
def test_dependencies_within_naive_bound(name):
    prog = parse(MIXED) if name == "<mixed>" else load(name)
    dep = analyze(prog)
    naive = _naive_dependences(prog)
    assert {e for e in dep.edges if e[0] != e[1]} <= naive


def test_eight_schools_theta_factor_depends_on_mu_tau():
    prog = load("eight_schools")
    dep = analyze(prog)
    theta = next(s for s in prog.block_stmts("model") if "theta" in free_vars(s) and "y" not in free_vars(s))
    assert dependent_vars(theta, dep, prog) == {"theta", "mu", "tau"}


# ------------------------------------------------------------ taint oracle

class _Perturbing(Interpreter):
    """Adds a fixed offset to the value written by one statement."""

    def __init__(self, *a, target_id=None, **k):
        super().__init__(*a, **k)
        self.target_id = target_id

    def exec(self, s, env, mask):
        super().exec(s, env, mask)
        if s.id == self.target_id and isinstance(s, (Assign, Declaration)):
            if not np.issubdtype(env[s.name].dtype, np.integer):
                env[s.name] = env[s.name] + 0.37


def _trace_run(prog, env, target_id=None, bump=None):
    decls = {n: s.decl for n, s in prog.symbols.items()}
    seen: dict[int, list] = {}
    env = {k: v.copy() for k, v in env.items()}
    if bump is not None:
        env[bump] = env[bump] + 0.37
    interp = _Perturbing(env_batch(env), decls, RngPool(7), lambda s, v: seen.setdefault(s.id, []).append(v),
                         target_id=target_id)
    stmts = [s for b in prog.blocks if b.kind not in ("data", "parameters") for s in b.stmts]
    interp.run(stmts, env)
    return seen


def env_batch(env):
    return max(v.shape[0] for v in env.values())


def _same(a, b):
    if len(a) != len(b):
        return False
    for x, y in zip(a, b):
        if isinstance(x, tuple) or x is None or y is None:
            if x != y if isinstance(x, tuple) else (x is None) != (y is None):
                return False
            continue
        if x.shape != y.shape or not np.array_equal(x, y, equal_nan=True):
            return False
    return True


def _changed(base, other):
    return {sid for sid in set(base) | set(other) if not _same(base.get(sid, []), other.get(sid, []))}


@pytest.mark.parametrize("name", FIXTURE_NAMES + ["<mixed>"])
def test_taint_oracle_finds_no_missing_dependence(name, rng):
    prog = parse(MIXED) if name == "<mixed>" else load(name)
    dep = analyze(prog)
    # one row per run: masked branches would otherwise trace rows they never wrote
    for trial in range(8):
        env = random_env(prog, rng, 1)
        base = _trace_run(prog, env)
        # perturb inputs: data and parameters
        for v in prog.data_vars + prog.param_vars:
            if np.issubdtype(env[v].dtype, np.integer):
                continue
            decl_id = prog.symbols[v].decl.id
            try:
                moved = _trace_run(prog, env, bump=v)
            except RuntimeFailure:
                continue
            for sid in _changed(base, moved):
                assert (decl_id, sid) in dep.edges, (v, sid)
        # perturb every intermediate definition
        for s in prog.statements():
            if not isinstance(s, (Assign, Declaration)) or prog.block_of(s.id) in ("data", "parameters"):
                continue
            moved = _trace_run(prog, env, target_id=s.id)
            for sid in _changed(base, moved) - {s.id}:
                assert (s.id, sid) in dep.edges, (s.id, sid)


# ------------------------------------------------------------ properties

EDGE_SETS = st.sets(st.tuples(st.integers(1, 8), st.integers(1, 8)), max_size=20)


@settings(max_examples=200, deadline=None)
@given(EDGE_SETS)
def test_closure_is_idempotent(edges):
    once = transitive_closure(edges)
    assert transitive_closure(once) == once
    assert edges <= once


@settings(max_examples=200, deadline=None)
@given(EDGE_SETS)
def test_closure_is_transitive(edges):
    c = transitive_closure(edges)
    for a, b in c:
        for b2, d in c:
            if b == b2:
                assert (a, d) in c


@pytest.mark.parametrize("name", FIXTURE_NAMES + ["<mixed>"])
def test_dependent_vars_cover_free_vars(name):
    prog = parse(MIXED) if name == "<mixed>" else load(name)
    dep = analyze(prog)
    roots = set(prog.data_vars + prog.param_vars)
    for s in prog.statements():
        assert dependent_vars(s, dep, prog) >= free_vars(s) & roots


def test_intermediate_traced_to_roots():
    prog = load("intermediate")
    dep = analyze(prog)
    target = prog.block_stmts("model")[-1]
    assert dependent_vars(target, dep, prog) == {"x", "mu"}


def test_no_incoming_edges_gives_free_vars():
    prog = parse("parameters { real a; } model { target += -a; }")
    dep = analyze(prog)
    s = prog.block_stmts("model")[0]
    assert dependent_vars(s, dep, prog) == {"a"}


def test_control_dependent_density_sees_guard():
    prog = parse(MIXED)
    dep = analyze(prog)
    inner = next(s for s in prog.statements() if isinstance(s, If)).then[0]
    assert "z" in dependent_vars(inner, dep, prog)
    target = next(s for s in prog.block_stmts("model") if type(s).__name__ == "TargetIncrement")
    assert "z" in dependent_vars(target, dep, prog) and "c" in dependent_vars(target, dep, prog)


def test_slice_of_intermediate():
    prog = load("intermediate")
    dep = analyze(prog)
    target = prog.block_stmts("model")[-1]
    sl = backward_slice({target.id}, dep, prog)
    assert [type(s).__name__ for s in sl] == ["Assign"]
    assert sl[0].name == "m"


def test_slice_without_dependencies_is_empty():
    prog = parse("parameters { real a; } model { target += -a; }")
    dep = analyze(prog)
    assert backward_slice({prog.block_stmts("model")[0].id}, dep, prog) == []


def test_shared_dependency_appears_once():
    prog = parse("parameters { real a; } model { real m; m = a * 2; target += -m; target += -m^2; }")
    dep = analyze(prog)
    ids = {s.id for s in prog.block_stmts("model")[2:]}
    sl = backward_slice(ids, dep, prog)
    assert len(sl) == 1 and sl[0].name == "m"


def _flat_ids(stmts):
    out = []
    for s in stmts:
        out.append(s.id)
        out.extend(_flat_ids(s.body if isinstance(s, For) else
                             (s.then + (s.orelse or ()) if isinstance(s, If) else ())))
    return out


@pytest.mark.parametrize("name", FIXTURE_NAMES + ["<mixed>"])
def test_slices_prefix_closed_and_ordered(name):
    prog = parse(MIXED) if name == "<mixed>" else load(name)
    dep = analyze(prog)
    for s in prog.statements():
        ids = slice_ids({s.id}, dep, prog)
        assert slice_ids(ids, dep, prog) <= ids
        flat = _flat_ids(backward_slice({s.id}, dep, prog))
        assert flat == sorted(flat)
        # bare loops/conditionals are emitted only around statements they enclose
        plain = {i for i in ids if not isinstance(prog.statement(i), (For, If))}
        assert plain <= set(flat)
