"""Control-flow graph, reaching definitions, statement dependencies and slices.

Containers are monolithic: an indexed write ``x[i] = ...`` is a weak update
that adds a definition of ``x`` without killing earlier ones. Control
dependence is structural: a statement depends on every enclosing loop or
conditional, which coincides with the postdominance-based definition for the
structured control flow this language has.
"""
from __future__ import annotations

import dataclasses
from collections import defaultdict
from dataclasses import dataclass, field

from .frontend.analysis import free_vars, header_vars
from .frontend.ast import (
    DENSITY_KINDS,
    Assign,
    Declaration,
    For,
    If,
    Program,
    Stmt,
    TargetIncrement,
    Tilde,
    children,
    expr_vars,
)
from .frontend import printer

ENTRY = 0
EXIT = -1


def join_node(if_id: int) -> int:
    return -(if_id + 1)


@dataclass
class ControlFlowGraph:
    nodes: list[int]
    edges: set[tuple[int, int]]
    defs: dict[int, set[str]]
    weak_defs: dict[int, set[str]]
    uses: dict[int, set[str]]
    back_edges: set[tuple[int, int]] = field(default_factory=set)

    def succs(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {n: [] for n in self.nodes}
        for a, b in sorted(self.edges):
            out[a].append(b)
        return out

    def preds(self) -> dict[int, list[int]]:
        out: dict[int, list[int]] = {n: [] for n in self.nodes}
        for a, b in sorted(self.edges):
            out[b].append(a)
        return out

    def reverse_postorder(self) -> list[int]:
        succs = self.succs()
        seen: set[int] = set()
        order: list[int] = []
        stack = [(ENTRY, iter(succs[ENTRY]))]
        seen.add(ENTRY)
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                order.append(node)
            elif nxt not in seen:
                seen.add(nxt)
                stack.append((nxt, iter(succs[nxt])))
        return order[::-1]


def _def_use(s: Stmt) -> tuple[set[str], set[str], set[str]]:
    """(strong defs, weak defs, uses) of the statement's own evaluation."""
    if isinstance(s, Declaration):
        return {s.name}, set(), expr_vars(s.init)
    if isinstance(s, Assign):
        uses = expr_vars(s.value) | expr_vars(s.index)
        if s.index is None:
            return {s.name}, set(), uses
        return set(), {s.name}, uses | {s.name}
    if isinstance(s, For):
        return {s.var}, set(), expr_vars(s.lo) | expr_vars(s.hi)
    if isinstance(s, If):
        return set(), set(), expr_vars(s.cond)
    if isinstance(s, (TargetIncrement, Tilde)):
        return set(), set(), free_vars(s)
    return set(), set(), set()


def build_cfg(prog: Program) -> ControlFlowGraph:
    """CFG over every statement, blocks chained in execution order."""
    nodes = [ENTRY]
    edges: set[tuple[int, int]] = set()
    back: set[tuple[int, int]] = set()
    defs: dict[int, set[str]] = defaultdict(set)
    weak: dict[int, set[str]] = defaultdict(set)
    uses: dict[int, set[str]] = defaultdict(set)

    def link(stmts, preds: list[int]) -> list[int]:
        for s in stmts:
            nodes.append(s.id)
            d, w, u = _def_use(s)
            defs[s.id], weak[s.id], uses[s.id] = d, w, u
            for p in preds:
                edges.add((p, s.id))
            if isinstance(s, For):
                body_exits = link(s.body, [s.id])
                for p in body_exits:
                    edges.add((p, s.id))
                    back.add((p, s.id))
                preds = [s.id]
            elif isinstance(s, If):
                exits = link(s.then, [s.id])
                exits += link(s.orelse, [s.id]) if s.orelse is not None else [s.id]
                j = join_node(s.id)
                nodes.append(j)
                for p in exits:
                    edges.add((p, j))
                preds = [j]
            else:
                preds = [s.id]
        return preds

    preds = [ENTRY]
    for block in prog.blocks:
        preds = link(block.stmts, preds)
    nodes.append(EXIT)
    for p in preds:
        edges.add((p, EXIT))
    all_nodes = sorted(set(nodes), key=lambda n: (n <= 0, n))
    for n in all_nodes:
        defs.setdefault(n, set())
        weak.setdefault(n, set())
        uses.setdefault(n, set())
    return ControlFlowGraph(all_nodes, edges, dict(defs), dict(weak), dict(uses), back)


Definition = tuple[str, int]  # (variable, defining node)


@dataclass
class ReachingDefinitions:
    entry: dict[int, frozenset[Definition]]
    exit: dict[int, frozenset[Definition]]


def reaching_definitions(cfg: ControlFlowGraph) -> ReachingDefinitions:
    """Least fixed point of the gen/kill equations, worklist in reverse postorder."""
    all_defs: dict[str, set[Definition]] = defaultdict(set)
    for n in cfg.nodes:
        for v in cfg.defs[n] | cfg.weak_defs[n]:
            all_defs[v].add((v, n))
    gen = {n: frozenset((v, n) for v in cfg.defs[n] | cfg.weak_defs[n]) for n in cfg.nodes}
    kill = {n: frozenset(d for v in cfg.defs[n] for d in all_defs[v]) for n in cfg.nodes}
    preds = cfg.preds()
    succs = cfg.succs()
    order = cfg.reverse_postorder()
    rank = {n: i for i, n in enumerate(order)}
    entry = {n: frozenset() for n in cfg.nodes}
    exit_ = {n: frozenset() for n in cfg.nodes}
    work = list(order)
    queued = set(work)
    while work:
        work.sort(key=lambda n: rank.get(n, len(rank)))
        n = work.pop(0)
        queued.discard(n)
        inn = frozenset().union(*(exit_[p] for p in preds[n])) if preds[n] else frozenset()
        out = gen[n] | (inn - kill[n])
        entry[n] = inn
        if out != exit_[n]:
            exit_[n] = out
            for s in succs[n]:
                if s not in queued:
                    work.append(s)
                    queued.add(s)
    return ReachingDefinitions(entry, exit_)


@dataclass
class DependencyGraph:
    nodes: list[int]
    edges: set[tuple[int, int]]

    def __post_init__(self):
        self._preds: dict[int, set[int]] = defaultdict(set)
        for a, b in self.edges:
            self._preds[b].add(a)

    def preds(self, sid: int) -> set[int]:
        """Statements influencing ``sid`` (excluding itself)."""
        return self._preds.get(sid, set()) - {sid}

    def to_dot(self, prog: Program) -> str:
        lines = ["digraph dependencies {"]
        for n in self.nodes:
            label = f"{n}: {printer.stmt_head(prog.statement(n))}".replace("\\", "\\\\").replace('"', '\\"')
            lines.append(f'  s{n} [label="{label}"];')
        for a, b in sorted(self.edges):
            if a != b:
                lines.append(f"  s{a} -> s{b};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def transitive_closure(edges: set[tuple[int, int]]) -> set[tuple[int, int]]:
    succ: dict[int, set[int]] = defaultdict(set)
    for a, b in edges:
        succ[a].add(b)
    out: set[tuple[int, int]] = set()
    for start in list(succ):
        seen: set[int] = set()
        stack = list(succ[start])
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen.add(n)
            stack.extend(succ.get(n, ()))
        out.update((start, n) for n in seen)
    return out


def dependency_graph(prog: Program, cfg: ControlFlowGraph | None = None,
                     rd: ReachingDefinitions | None = None) -> DependencyGraph:
    """Transitively closed statement dependency graph (data + control)."""
    cfg = cfg or build_cfg(prog)
    rd = rd or reaching_definitions(cfg)
    edges: set[tuple[int, int]] = set()
    stmt_ids = [n for n in cfg.nodes if n > 0]
    for n in stmt_ids:
        for v, d in rd.entry[n]:
            if v in cfg.uses[n] and d > 0:
                edges.add((d, n))
        for c in prog.enclosing_control(n):
            edges.add((c, n))
    return DependencyGraph(stmt_ids, transitive_closure(edges))


def analyze(prog: Program) -> DependencyGraph:
    return dependency_graph(prog, build_cfg(prog))


def root_vars(prog: Program) -> set[str]:
    """Variables the factor graph ranges over: data and parameters."""
    return set(prog.vars_in("data", "parameters"))


def dependent_vars(stmt: Stmt, dep: DependencyGraph, prog: Program) -> set[str]:
    """Data/parameter variables ``stmt`` depends on, intermediates traced through."""
    out = set(free_vars(stmt))
    for s2 in dep.preds(stmt.id):
        out |= header_vars(prog.statement(s2))
    return out & root_vars(prog)


def slice_ids(stmt_ids, dep: DependencyGraph, prog: Program) -> set[int]:
    """Ids of the executable statements the given statements depend on.

    Density statements and plain declarations are left out: declarations
    without an initializer compute nothing, and the variables they declare
    are bound by the caller (drawn, or supplied as data).
    """
    out: set[int] = set()
    for sid in stmt_ids:
        for s2 in dep.preds(sid):
            s = prog.statement(s2)
            if s.kind in DENSITY_KINDS:
                continue
            if isinstance(s, Declaration) and s.init is None:
                continue
            out.add(s2)
    return out


def prune(stmts, keep: set[int]) -> list[Stmt]:
    """Copy of ``stmts`` restricted to ``keep`` plus the control structure enclosing it."""
    out: list[Stmt] = []
    for s in stmts:
        if isinstance(s, For):
            body = prune(s.body, keep)
            if body:
                out.append(dataclasses.replace(s, body=tuple(body)))
        elif isinstance(s, If):
            then = prune(s.then, keep)
            orelse = prune(s.orelse, keep) if s.orelse is not None else []
            if then or orelse:
                out.append(dataclasses.replace(s, then=tuple(then), orelse=tuple(orelse) if orelse else None))
        elif s.id in keep:
            out.append(s)
    return out


def program_prune(prog: Program, keep: set[int], blocks=None) -> list[Stmt]:
    stmts: list[Stmt] = []
    for b in prog.blocks:
        if blocks is None or b.kind in blocks:
            stmts.extend(prune(b.stmts, keep))
    return stmts


def backward_slice(stmt_ids, dep: DependencyGraph, prog: Program) -> list[Stmt]:
    """Statements the given statements depend on, in source order, with their control structure."""
    return program_prune(prog, slice_ids(stmt_ids, dep, prog))


def contains_any(s: Stmt, ids: set[int]) -> bool:
    return s.id in ids or any(contains_any(c, ids) for c in children(s))
