"""Turn a factor graph into a DAG whose conditional densities are constant-normalized.

Steps: find recognizable edges r, encode the edge-selection constraints as a
propositional formula, enumerate every selection set satisfying it, ask the
user (or a policy) which candidate conditional densities are normalized, and
pick one surviving selection set deterministically.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable

from . import satcore as sat
from .builtins import DISTRIBUTIONS, split_distribution_call
from .factorgraph import FactorGraph, natural_key
from .frontend.analysis import header_vars
from .frontend.ast import Call, Declaration, Expr, TargetIncrement, Tilde, Var, expr_vars

Edge = tuple[str, str]  # (variable, factor id)
Selection = frozenset[Edge]

NO_SELECTION = "no forward-sampling form exists: the factor graph admits no sound edge selection set"
NO_DAG = "no DAG can be derived from the factor graph with the given constant-normalized densities"


class TransformError(Exception):
    pass


class NoDagError(TransformError):
    """No sound (or no affirmed) edge selection set exists."""

    def __init__(self, message: str, result: "TransformResult | None" = None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class RecEdge:
    var: str
    factor: str
    dist: str
    args: tuple[Expr, ...]


def _density_form(stmt) -> tuple[Expr, str, tuple[Expr, ...]] | None:
    """(variate, distribution, args) when ``stmt`` is a bare builtin density statement."""
    if isinstance(stmt, Tilde) and stmt.dist in DISTRIBUTIONS:
        return stmt.lhs, stmt.dist, stmt.args
    if isinstance(stmt, TargetIncrement) and isinstance(stmt.value, Call):
        split = split_distribution_call(stmt.value.name)
        if split is not None and split[1] in ("_lpdf", "_lpmf") and stmt.value.args:
            return stmt.value.args[0], split[0].name, stmt.value.args[1:]
    return None


def _arg_roots(g: FactorGraph, f, var: str, args) -> set[str]:
    """Variables the arguments depend on, intermediates traced through the factor's dependencies."""
    out: set[str] = set()
    for a in args:
        out |= expr_vars(a)
    prog = g.program
    if prog is None:
        return out
    for sid in f.deps:
        s = prog.statement(sid)
        if isinstance(s, Declaration) and s.name == var and s.init is None:
            continue
        out |= header_vars(s)
    return out


def recognizable_edges(g: FactorGraph) -> dict[str, RecEdge]:
    """Edges whose factor is a plain builtin density of a bare variable, at most one per variable.

    A variable next to a ``reject`` factor gets none: its conditional density
    includes the rejection region, so no single builtin describes it.
    """
    found: dict[str, list[RecEdge]] = defaultdict(list)
    rejecting = {v for f in g.factors if f.form == "reject" for v in g.nei(f.id)}
    for f in g.factors:
        if f.form == "reject" or f.stmt is None:
            continue
        if g.program is not None and g.program.enclosing_control(f.sid):
            continue
        form = _density_form(f.stmt)
        if form is None:
            continue
        variate, dist, args = form
        if not isinstance(variate, Var) or variate.name not in g.variables:
            continue
        v = variate.name
        if v in rejecting or (v, f.id) not in g.edges or v in _arg_roots(g, f, v, args):
            continue
        found[v].append(RecEdge(v, f.id, dist, tuple(args)))
    return {v: es[0] for v, es in sorted(found.items()) if len(es) == 1}


# ------------------------------------------------------------------ encoding


def sel(v: str, f: str) -> str:
    return f"Sel[{v},{f}]"


def path(a: str, b: str) -> str:
    return f"P[{a}>{b}]"


def components(g: FactorGraph) -> list[list[str]]:
    """Connected components of the variables (linked through shared factors)."""
    parent = {v: v for v in g.variables}

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for f in g.factor_ids:
        nei = sorted(g.nei(f))
        for v in nei[1:]:
            parent[find(v)] = find(nei[0])
    groups: dict[str, list[str]] = defaultdict(list)
    for v in g.var_names():
        groups[find(v)].append(v)
    return sorted(groups.values())


@dataclass
class Encoding:
    formula: sat.Formula
    universe: list[str]
    projection: list[str]
    sel_atoms: dict[str, Edge]

    def cnf(self) -> sat.CnfInstance:
        return sat.to_cnf(self.formula, self.universe, self.projection)


def encode(g: FactorGraph, r: dict[str, RecEdge] | Iterable[Edge]) -> Encoding:
    r_edges = _edges_of(r)
    A = sat.Atom
    sel_atoms = {sel(v, f): (v, f) for v, f in sorted(g.edges, key=lambda e: (e[0], natural_key(e[1])))}
    comps = components(g)
    path_atoms = [path(a, b) for comp in comps for a in comp for b in comp]
    rules: list[sat.Formula] = []
    for comp in comps:  # 1: acyclic
        rules += [sat.Not(A(path(v, v))) for v in comp]
    for f in g.factor_ids:  # 2: every factor covered
        rules.append(sat.disj(*(A(sel(v, f)) for v in sorted(g.nei(f)))))
    for f in g.factor_ids:  # 3: at most once
        nei = sorted(g.nei(f))
        rules += [sat.Implies(A(sel(a, f)), sat.Not(A(sel(b, f)))) for a in nei for b in nei if a < b]
    for v in g.var_names():  # 4: every variable covered
        rules.append(sat.disj(*(A(sel(v, f)) for f in sorted(g.factors_of(v), key=natural_key))))
    for v, f in sorted(r_edges):  # 5 and 6: r is included, and exclusive for its variables
        rules.append(A(sel(v, f)))
        rules += [sat.Not(A(sel(v, f2))) for f2 in sorted(g.factors_of(v), key=natural_key) if f2 != f]
    for f in g.factor_ids:  # 7: selecting an edge orients the factor's other edges
        nei = sorted(g.nei(f))
        rules += [sat.Implies(sat.conj(sat.Not(A(sel(a, f))), A(sel(b, f))), A(path(a, b)))
                  for a in nei for b in nei if a != b]
    for comp in comps:  # 8: transitivity
        rules += [sat.Implies(sat.conj(A(path(a, b)), A(path(b, c))), A(path(a, c)))
                  for a in comp for b in comp for c in comp]
    projection = list(sel_atoms)
    return Encoding(sat.And(tuple(rules)), projection + path_atoms, projection, sel_atoms)


def _edges_of(r) -> set[Edge]:
    if isinstance(r, dict):
        return {(e.var, e.factor) for e in r.values()}
    return set(r)


def selection_key(s: Iterable[Edge]):
    return [(v, natural_key(f)) for v, f in sorted(s, key=lambda e: (e[0], natural_key(e[1])))]


def solve_selection_sets(g: FactorGraph, r) -> list[Selection]:
    """Every sound selection set containing r, in canonical order."""
    enc = encode(g, r)
    out = [frozenset(enc.sel_atoms[a] for a in sol) for sol in sat.enumerate_projected(enc.cnf())]
    return sorted(out, key=selection_key)


# --------------------------------------------------------------- contraction


@dataclass
class Dag:
    variables: list[str]
    edges: set[tuple[str, str]]
    assignment: dict[str, tuple[str, ...]]
    selection: Selection = frozenset()

    def parents(self, v: str) -> set[str]:
        return {a for a, b in self.edges if b == v}

    def roots(self) -> set[str]:
        return {v for v in self.variables if not self.parents(v)}

    def topological_order(self, tie_key=None) -> list[str]:
        """Kahn's algorithm; ready variables are taken in ``tie_key`` order."""
        tie_key = tie_key or (lambda v: v)
        indeg = {v: len(self.parents(v)) for v in self.variables}
        children: dict[str, list[str]] = defaultdict(list)
        for a, b in self.edges:
            children[a].append(b)
        ready = sorted((v for v, d in indeg.items() if d == 0), key=tie_key)
        order: list[str] = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort(key=tie_key)
        if len(order) != len(self.variables):
            raise TransformError("graph has a cycle")
        return order

    def assignment_table(self) -> str:
        return "".join(f"assign {v} = {','.join(self.assignment[v])}\n" for v in sorted(self.variables))

    def to_dot(self) -> str:
        lines = ["digraph dag {"]
        for v in sorted(self.variables):
            lines.append(f'  "{v}" [label="{v}\\n{",".join(self.assignment[v])}"];')
        for a, b in sorted(self.edges):
            lines.append(f'  "{a}" -> "{b}";')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _contract_edges(g: FactorGraph, s: Iterable[Edge]) -> set[tuple[str, str]]:
    out = set()
    for vb, f in s:
        for va in g.nei(f):
            if va != vb:
                out.add((va, vb))
    return out


def _has_cycle(nodes: Iterable[str], edges: set[tuple[str, str]]) -> bool:
    succ: dict[str, list[str]] = defaultdict(list)
    for a, b in edges:
        succ[a].append(b)
    state: dict[str, int] = {}  # 1 on stack, 2 done
    for start in nodes:
        if start in state:
            continue
        stack = [(start, iter(succ[start]))]
        state[start] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                state[node] = 2
                stack.pop()
            elif state.get(nxt) == 1:
                return True
            elif nxt not in state:
                state[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
    return False


def contract(g: FactorGraph, s: Iterable[Edge]) -> Dag:
    s = frozenset(s)
    assignment: dict[str, list[str]] = {v: [] for v in g.var_names()}
    for v, f in s:
        assignment[v].append(f)
    edges = _contract_edges(g, s)
    if _has_cycle(g.var_names(), edges):
        raise TransformError(f"internal error: contraction of {sorted(s)} is cyclic")
    return Dag(g.var_names(), edges, {v: tuple(sorted(fs, key=natural_key)) for v, fs in assignment.items()}, s)


def soundness_oracle(g: FactorGraph, s: Iterable[Edge]) -> bool:
    """Does ``s`` cover each factor once and each variable at least once, with an acyclic contraction?"""
    s = set(s)
    if not s <= g.edges:
        return False
    covered = defaultdict(int)
    for _, f in s:
        covered[f] += 1
    if any(covered[f] != 1 for f in g.factor_ids):
        return False
    if {v for v, _ in s} != set(g.variables):
        return False
    return not _has_cycle(g.var_names(), _contract_edges(g, s))


# ------------------------------------------------------------------- queries


@dataclass(frozen=True)
class Query:
    var: str
    factors: tuple[str, ...]

    def render(self, g: FactorGraph) -> str:
        return "{ " + ", ".join(g.factor(f).pretty for f in self.factors) + " }"


def factors_for(v: str, s: Selection) -> tuple[str, ...]:
    return tuple(sorted((f for u, f in s if u == v), key=natural_key))


def query_vars(S: list[Selection], r, g: FactorGraph) -> list[str]:
    """Variables not covered by r and not a root in every DAG of S."""
    covered = {v for v, _ in _edges_of(r)}
    dags = [contract(g, s) for s in S]
    always_root = set(g.variables)
    for d in dags:
        always_root &= d.roots()
    return [v for v in g.var_names() if v not in covered and v not in always_root]


def build_queries(S: list[Selection], r, g: FactorGraph) -> list[Query]:
    if not S:
        return []
    out = {Query(v, factors_for(v, s)) for v in query_vars(S, r, g) for s in S}
    return sorted(out, key=lambda q: (q.var, len(q.factors), [natural_key(f) for f in q.factors]))


def filter_by_answers(S: list[Selection], queries: list[Query], answers: dict[Query, bool]) -> list[Selection]:
    """Selection sets whose every queried conditional density was affirmed."""
    qvars = {q.var for q in queries}
    affirmed = {q for q in queries if answers.get(q, False)}
    return [s for s in S if all(Query(v, factors_for(v, s)) in affirmed for v in qvars)]


def choose_canonical(S_star: list[Selection]) -> Selection:
    if not S_star:
        raise NoDagError(NO_DAG)
    return min(S_star, key=selection_key)


# An asker receives (variable, candidate queries) and returns the 1-based
# index of the affirmed candidate, or 0 for none of them.
Asker = Callable[[str, list[Query]], int]


def run_queries(S: list[Selection], r, g: FactorGraph, ask: Asker) -> tuple[list[Selection], list[tuple[Query, ...]]]:
    """Adaptive protocol: one numbered question per ambiguous variable, in name order.

    After each answer S is filtered and the remaining questions recomputed,
    so variables that became roots in every surviving DAG are not asked.
    Returns the surviving sets and the questions asked.
    """
    asked: list[tuple[Query, ...]] = []
    done: set[str] = set()
    while S:
        pending = [q for q in build_queries(S, r, g) if q.var not in done]
        if not pending:
            break
        v = pending[0].var
        options = [q for q in pending if q.var == v]
        asked.append(tuple(options))
        choice = ask(v, options)
        done.add(v)
        if choice == 0:
            return [], asked
        chosen = options[choice - 1]
        S = [s for s in S if factors_for(v, s) == chosen.factors]
    return S, asked


@dataclass
class TransformResult:
    graph: FactorGraph
    recognizable: dict[str, RecEdge]
    selections: list[Selection]
    questions: list[tuple[Query, ...]] = field(default_factory=list)
    surviving: list[Selection] = field(default_factory=list)
    chosen: Selection | None = None
    dag: Dag | None = None


def derive_dag(g: FactorGraph, ask: Asker | None = None) -> TransformResult:
    """Full pipeline. Without an asker every candidate is affirmed (the filter is vacuous)."""
    r = recognizable_edges(g)
    S = solve_selection_sets(g, r)
    res = TransformResult(g, r, S)
    if not S:
        raise NoDagError(NO_SELECTION, res)
    if ask is None:
        res.surviving = list(S)
    else:
        res.surviving, res.questions = run_queries(S, r, g, ask)
    if not res.surviving:
        raise NoDagError(NO_DAG, res)
    res.chosen = choose_canonical(res.surviving)
    res.dag = contract(g, res.chosen)
    return res
