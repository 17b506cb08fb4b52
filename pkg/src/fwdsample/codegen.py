"""Sampling plans from DAGs, and mini-language programs from sampling plans.

A plan is a list of segments in topological order. An RNG segment draws its
variable with a builtin generator; a PDF segment keeps the density
statements of the variable's assigned factors and leaves drawing to MCMC.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from . import dataflow
from .factorgraph import FactorGraph, build_factor_graph, restrict
from .frontend import printer
from .frontend.analysis import free_vars
from .frontend.ast import (
    Assign,
    BinOp,
    Call,
    Declaration,
    Expr,
    For,
    If,
    Index,
    Num,
    Program,
    Stmt,
    TargetIncrement,
    Tilde,
    Unary,
    Var,
    walk,
)
from .frontend.parser import parse
from .transform import Asker, Dag, TransformResult, _arg_roots, _density_form, derive_dag

SIM = "_sim"


@dataclass
class CodeSegment:
    label: str  # "RNG" or "PDF"
    var: str
    stmts: tuple[Stmt, ...]
    factors: tuple[str, ...] = ()
    locals: tuple[Declaration, ...] = ()  # intermediates assigned but not declared in stmts
    required_inputs: frozenset[str] = frozenset()

    @property
    def target_vars(self) -> tuple[str, ...]:
        return (self.var,)

    def lines(self) -> list[str]:
        return [printer.declaration(d) for d in self.locals] + printer.stmts(self.stmts)

    def describe(self) -> str:
        return f"({self.label}, {self.var}) " + " ".join(line.strip() for line in self.lines())


@dataclass
class SamplingPlan:
    segments: list[CodeSegment]
    provenance: str  # prior | predictive | full | prior_predictive
    order: list[str]
    decls: dict[str, Declaration]  # declarations of the drawn variables, keyed by plan name
    data_decls: dict[str, Declaration] = field(default_factory=dict)  # inputs the plan reads

    @property
    def drawn(self) -> list[str]:
        return [s.var for s in self.segments]

    @property
    def inputs(self) -> list[str]:
        """Names that must be bound before the plan runs, in declaration order."""
        return list(self.data_decls)

    def check(self) -> None:
        """Every segment's inputs are data or drawn by an earlier segment."""
        bound = set(self.data_decls)
        for seg in self.segments:
            missing = seg.required_inputs - bound
            if missing:
                raise ValueError(f"segment for {seg.var} reads unbound {sorted(missing)}")
            bound.add(seg.var)


def _assigned(stmts) -> set[str]:
    return {s.name for s in walk(stmts) if isinstance(s, (Assign, Declaration))}


def _loop_vars(stmts) -> set[str]:
    return {s.var for s in walk(stmts) if isinstance(s, For)}


def _decl_vars(d: Declaration) -> set[str]:
    out: set[str] = set()
    for e in (*d.shape, d.lower, d.upper):
        out |= dataflow.expr_vars(e)
    return out


def local_decls(stmts, prog: Program, exclude: set[str]) -> tuple[Declaration, ...]:
    declared = {s.name for s in walk(stmts) if isinstance(s, Declaration)}
    out = []
    for name in sorted(_assigned(stmts) - declared - exclude, key=lambda n: prog.symbols[n].order):
        out.append(dataclasses.replace(prog.symbols[name].decl, init=None))
    return tuple(out)


def _required(stmts, locs, var: str, prog: Program) -> frozenset[str]:
    used: set[str] = set()
    for s in stmts:
        used |= free_vars(s)
    for d in locs:
        used |= _decl_vars(d)
    if var in prog.symbols:
        used |= _decl_vars(prog.symbols[var].decl)
    defined = (_assigned(stmts) | _loop_vars(stmts)) - {var}
    return frozenset(used - defined - {var})


def is_rng_form(f, var: str, prog: Program) -> bool:
    """A lone ``var ~ dist(..)`` / ``target += dist_lpdf(var | ..)`` at top level."""
    if f.stmt is None or f.form == "reject" or prog.enclosing_control(f.sid):
        return False
    form = _density_form(f.stmt)
    if form is None:
        return False
    variate, _, args = form
    if not isinstance(variate, Var) or variate.name != var:
        return False
    probe = FactorGraph({}, [], set(), prog)
    return var not in _arg_roots(probe, f, var, args)


def sample_segment(v: str, factor_ids, g: FactorGraph, prog: Program,
                   dep: dataflow.DependencyGraph) -> CodeSegment:
    factors = [g.factor(fid) for fid in factor_ids]
    sids = {f.sid for f in factors}
    if len(factors) == 1 and is_rng_form(factors[0], v, prog):
        _, dist, args = _density_form(factors[0].stmt)
        body = dataflow.backward_slice(sids, dep, prog)
        draw = Assign(0, v, None, Call(dist + "_rng", tuple(args)))
        stmts = tuple(body) + (draw,)
        label = "RNG"
    else:
        keep = dataflow.slice_ids(sids, dep, prog) | sids
        stmts = tuple(dataflow.program_prune(prog, keep))
        label = "PDF"
    graph_vars = set(prog.data_vars) | set(prog.param_vars)
    locs = local_decls(stmts, prog, graph_vars | {v})
    return CodeSegment(label, v, stmts, tuple(factor_ids), locs,
                       _required(stmts, locs, v, prog))


def sample_graph(dag: Dag, g: FactorGraph, prog: Program, provenance: str = "prior",
                 dep: dataflow.DependencyGraph | None = None) -> SamplingPlan:
    dep = dep or dataflow.analyze(prog)
    order = dag.topological_order(lambda v: prog.symbols[v].order)
    segments = [sample_segment(v, dag.assignment[v], g, prog, dep) for v in order]
    decls = {v: dataclasses.replace(prog.symbols[v].decl, init=None) for v in order}
    drawn = set(order)
    needed = set().union(*(s.required_inputs for s in segments)) - drawn if segments else set()
    data_decls = {n: dataclasses.replace(prog.symbols[n].decl, init=None)
                  for n in sorted(needed, key=lambda n: prog.symbols[n].order)}
    plan = SamplingPlan(segments, provenance, order, decls, data_decls)
    plan.check()
    return plan


@dataclass
class Derivation:
    graph: FactorGraph
    result: TransformResult
    plan: SamplingPlan


def derive_plan(prog: Program, mode: str, ask: Asker | None = None) -> Derivation:
    """Factor graph -> restriction -> DAG -> plan for one mode (prior, predictive or full)."""
    dep = dataflow.analyze(prog)
    g = restrict(build_factor_graph(prog, dep), mode)
    result = derive_dag(g, ask)
    return Derivation(g, result, sample_graph(result.dag, g, prog, mode, dep))


# ------------------------------------------------------------------ renaming


def rename_expr(e: Expr | None, m: dict[str, str]) -> Expr | None:
    if e is None or not m:
        return e
    if isinstance(e, Var):
        return dataclasses.replace(e, name=m.get(e.name, e.name))
    if isinstance(e, Num):
        return e
    if isinstance(e, Index):
        return dataclasses.replace(e, base=rename_expr(e.base, m), index=rename_expr(e.index, m))
    if isinstance(e, Unary):
        return dataclasses.replace(e, operand=rename_expr(e.operand, m))
    if isinstance(e, BinOp):
        return dataclasses.replace(e, left=rename_expr(e.left, m), right=rename_expr(e.right, m))
    if isinstance(e, Call):
        return dataclasses.replace(e, args=tuple(rename_expr(a, m) for a in e.args))
    raise TypeError(e)


def rename_stmt(s: Stmt, m: dict[str, str]) -> Stmt:
    r = lambda e: rename_expr(e, m)  # noqa: E731
    if isinstance(s, Declaration):
        return dataclasses.replace(s, name=m.get(s.name, s.name), shape=tuple(map(r, s.shape)),
                                   lower=r(s.lower), upper=r(s.upper), init=r(s.init))
    if isinstance(s, Assign):
        return dataclasses.replace(s, name=m.get(s.name, s.name), index=r(s.index), value=r(s.value))
    if isinstance(s, TargetIncrement):
        return dataclasses.replace(s, value=r(s.value))
    if isinstance(s, Tilde):
        return dataclasses.replace(s, lhs=r(s.lhs), args=tuple(map(r, s.args)))
    if isinstance(s, For):
        return dataclasses.replace(s, lo=r(s.lo), hi=r(s.hi), body=tuple(rename_stmt(c, m) for c in s.body))
    if isinstance(s, If):
        return dataclasses.replace(s, cond=r(s.cond), then=tuple(rename_stmt(c, m) for c in s.then),
                                   orelse=None if s.orelse is None else tuple(rename_stmt(c, m) for c in s.orelse))
    return s


def rename_segment(seg: CodeSegment, m: dict[str, str]) -> CodeSegment:
    return CodeSegment(seg.label, m.get(seg.var, seg.var), tuple(rename_stmt(s, m) for s in seg.stmts),
                       seg.factors, tuple(rename_stmt(d, m) for d in seg.locals),
                       frozenset(m.get(n, n) for n in seg.required_inputs))


def rename_plan(plan: SamplingPlan, m: dict[str, str]) -> SamplingPlan:
    return SamplingPlan(
        [rename_segment(s, m) for s in plan.segments],
        plan.provenance,
        [m.get(v, v) for v in plan.order],
        {m.get(k, k): rename_stmt(d, m) for k, d in plan.decls.items()},
        {m.get(k, k): rename_stmt(d, m) for k, d in plan.data_decls.items()},
    )


def concat_plans(first: SamplingPlan, second: SamplingPlan, provenance: str) -> SamplingPlan:
    drawn = set(first.drawn)
    data = dict(first.data_decls)
    data.update({k: d for k, d in second.data_decls.items() if k not in drawn and k not in data})
    plan = SamplingPlan(first.segments + second.segments, provenance, first.order + second.order,
                        {**first.decls, **second.decls}, data)
    plan.check()
    return plan


def prior_predictive_plan(prog: Program, ask: Asker | None = None,
                          rename_params: bool = False) -> tuple[SamplingPlan, list[Derivation]]:
    """Prior plan followed by the predictive plan, simulated data renamed with ``_sim``.

    With ``rename_params`` the parameters are suffixed too (used for SBC, where
    the posterior program needs the true values beside its own parameters).
    """
    prior = derive_plan(prog, "prior", ask)
    pred = derive_plan(prog, "predictive", ask)
    m = {v: v + SIM for v in pred.plan.drawn}
    if rename_params:
        for seg in prior.plan.segments + pred.plan.segments:
            m.update({v: v + SIM for v in _assigned(seg.stmts) | {d.name for d in seg.locals} | {seg.var}})
    plan = concat_plans(rename_plan(prior.plan, m), rename_plan(pred.plan, m), "prior_predictive")
    return plan, [prior, pred]


# ----------------------------------------------------------------- synthesis


@dataclass
class ProgramChain:
    programs: list[Program]
    texts: list[str]
    handoffs: list[tuple[str, int, int]]  # (variable, producer, consumer), 1-based

    def manifest_lines(self, names: list[str]) -> list[str]:
        out = [f"program {i} {n}" for i, n in enumerate(names, start=1)]
        out += [f"handoff {v} from {a} to {b}" for v, a, b in self.handoffs]
        return out


def _block(title: str, lines: list[str]) -> list[str]:
    return [f"{title} {{", *("  " + ln for ln in lines), "}"]


class _ProgramWriter:
    """Collects declarations and statements per block, declaring each name once."""

    def __init__(self):
        self.blocks: dict[str, list[str]] = {k: [] for k in
                                             ("data", "transformed data", "parameters", "model", "generated quantities")}
        self.decl_lines: dict[str, list[str]] = {k: [] for k in self.blocks}
        self.declared: set[str] = set()

    def declare(self, block: str, d: Declaration, name: str | None = None) -> None:
        name = name or d.name
        if name in self.declared:
            return
        self.declared.add(name)
        self.decl_lines[block].append(printer.declaration(dataclasses.replace(d, init=None), name))

    def segment(self, block: str, seg: CodeSegment) -> None:
        for d in seg.locals:
            self.declare(block, d)
        self.blocks[block].extend(printer.stmts(seg.stmts))

    def text(self) -> str:
        lines: list[str] = []
        for title in self.blocks:
            body = self.decl_lines[title] + self.blocks[title]
            if body:
                lines += _block(title, body)
        return "\n".join(lines) + "\n"


def synthesize_programs(plan: SamplingPlan, prog: Program | None = None) -> ProgramChain:
    """One program per PDF segment (or a single program when there is none)."""
    segs = plan.segments
    pdf_at = [i for i, s in enumerate(segs) if s.label == "PDF"]
    if not pdf_at:
        groups = [(segs, None, [])]
    else:
        groups = []
        for k, i in enumerate(pdf_at):
            end = pdf_at[k + 1] if k + 1 < len(pdf_at) else len(segs)
            before = segs[:i] if k == 0 else []
            groups.append((before, segs[i], segs[i + 1:end]))
    texts: list[str] = []
    handoffs: list[tuple[str, int, int]] = []
    produced: dict[str, int] = {}
    for n, (before, pdf, after) in enumerate(groups, start=1):
        w = _ProgramWriter()
        members = list(before) + ([pdf] if pdf is not None else []) + list(after)
        here = {s.var for s in members}
        needed: set[str] = set()
        for s in members:
            needed |= s.required_inputs
        for name, d in plan.data_decls.items():
            if name in needed or any(name in _decl_vars(plan.decls[v]) for v in here):
                w.declare("data", d, name)
        for name, producer in produced.items():
            w.declare("data", plan.decls[name], name)
            handoffs.append((name, producer, n))
        if pdf is None:
            for s in members:
                w.declare("generated quantities", plan.decls[s.var], s.var)
            for s in members:
                w.segment("generated quantities", s)
        else:
            for s in before:
                w.declare("transformed data", plan.decls[s.var], s.var)
            for s in before:
                w.segment("transformed data", s)
            w.declare("parameters", plan.decls[pdf.var], pdf.var)
            w.segment("model", pdf)
            for s in after:
                w.declare("generated quantities", plan.decls[s.var], s.var)
            for s in after:
                w.segment("generated quantities", s)
        for s in members:
            produced[s.var] = n
        texts.append(w.text())
    return ProgramChain([parse(t) for t in texts], texts, handoffs)


def synthesize_ppc(prog: Program, ask: Asker | None = None) -> tuple[ProgramChain, SamplingPlan]:
    plan, _ = prior_predictive_plan(prog, ask)
    return synthesize_programs(plan, prog), plan


# ---------------------------------------------------------------------- SBC


@dataclass
class SbcBundle:
    prior: ProgramChain
    posterior: Program
    posterior_text: str
    plan: SamplingPlan
    params: list[str]
    draws: int
    single_program: bool

    @property
    def programs(self) -> list[str]:
        return self.prior.texts + [self.posterior_text] if not self.single_program else [self.posterior_text]

    def manifest(self, names: list[str]) -> str:
        if self.single_program:
            lines = [f"program 1 {names[0]}"]
        else:
            post = len(names)
            lines = [f"program {i} {n}" for i, n in enumerate(names, start=1)]
            lines += [f"handoff {v} from {a} to {b}" for v, a, b in self.prior.handoffs]
            producers: dict[str, int] = {}
            for n, t in enumerate(self.prior.programs, start=1):
                for v in _drawn_by(t):
                    producers[v] = n
            for v in self.plan.drawn:
                if v in producers:
                    lines.append(f"handoff {v} from {producers[v]} to {post}")
        lines += [f"ranks var={p} draws={self.draws}" for p in self.params]
        return "\n".join(lines) + "\n"


def _drawn_by(p: Program) -> list[str]:
    return p.vars_in("transformed_data", "parameters", "generated_quantities")


def _indicator_lines(p: str, d: Declaration) -> list[str]:
    if not d.shape:
        return [f"int {p}_lt = {p} < {p}{SIM};"]
    size = printer.expr(d.shape[0])
    return [f"int {p}_lt[{size}];",
            f"for (k_sbc in 1:{size}) {{",
            f"  {p}_lt[k_sbc] = {p}[k_sbc] < {p}{SIM}[k_sbc];",
            "}"]


def synthesize_sbc(prog: Program, draws: int, ask: Asker | None = None) -> SbcBundle:
    """Prior-predictive programs plus one posterior program computing rank indicators."""
    plan, derivs = prior_predictive_plan(prog, ask, rename_params=True)
    prior_chain = synthesize_programs(plan, prog)
    params = derivs[0].plan.drawn
    params = sorted(params, key=lambda v: prog.symbols[v].order)
    sim_data = list(derivs[1].plan.drawn)
    m = {v: v + SIM for v in sim_data}
    single = not any(s.label == "PDF" for s in plan.segments)

    lines: list[str] = []
    data_lines = [printer.declaration(rename_stmt(s, m)) for s in prog.block_stmts("data")
                  if not (single and s.name in m)]
    if not single:
        data_lines += [printer.declaration(plan.decls[p + SIM], p + SIM) for p in params]
    if data_lines:
        lines += _block("data", data_lines)
    td = [printer.stmts((rename_stmt(s, m),)) for s in prog.block_stmts("transformed_data")]
    td_lines = [ln for chunk in td for ln in chunk]
    if single:
        # the prior simulation runs in transformed data, one draw per replication
        decls = [printer.declaration(plan.decls[v], v) for v in plan.drawn]
        body: list[str] = []
        declared = set(plan.drawn)
        for s in plan.segments:
            for d in s.locals:
                if d.name not in declared:
                    declared.add(d.name)
                    decls.append(printer.declaration(d))
            body += printer.stmts(s.stmts)
        td_lines = decls + td_lines + body
    if td_lines:
        lines += _block("transformed data", td_lines)
    for kind in ("parameters", "transformed_parameters", "model"):
        stmts = prog.block_stmts(kind)
        if stmts or kind in ("parameters", "model"):
            lines += _block(printer.BLOCK_TITLES[kind], printer.stmts(tuple(rename_stmt(s, m) for s in stmts)))
    gq: list[str] = []
    for p in params:
        gq += _indicator_lines(p, prog.symbols[p].decl)
    lines += _block("generated quantities", gq)
    text = "\n".join(lines) + "\n"
    return SbcBundle(prior_chain, parse(text), text, plan, params, draws, single)


__all__ = [
    "CodeSegment", "SamplingPlan", "Derivation", "ProgramChain", "SbcBundle",
    "sample_segment", "sample_graph", "derive_plan", "prior_predictive_plan",
    "synthesize_programs", "synthesize_ppc", "synthesize_sbc", "rename_plan", "concat_plans",
]
