"""Running sampling plans, synthesized programs and the reference joint sampler.

Rows are processed in blocks of ``BLOCK``. Every (seed, block, variable)
triple owns its own generator, so a variable's draws do not depend on which
other variables are drawn, and a plan and the programs synthesized from it
consume identical random streams.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from .. import dataflow
from ..codegen import CodeSegment, ProgramChain, SamplingPlan, local_decls
from ..factorgraph import FactorGraph
from ..frontend.ast import Assign, Call, Declaration, Program, Var
from .distributions import IMPLS, DomainError
from .interpreter import Interpreter, RngPool, RuntimeFailure, stream
from .mcmc import Coord, MhConfig, run_chain
from .tables import DrawTable

BLOCK = 4096
# step-size multipliers mixed by the reference sampler to cross scales (funnels)
REFERENCE_SCALES = (2.0, 1.0, 0.3, 0.1, 0.03)
REFERENCE_THIN = 25  # sweeps between kept reference draws


def _rows(env: dict[str, np.ndarray], n: int, lo: int, hi: int) -> dict[str, np.ndarray]:
    out = {}
    for k, v in env.items():
        v = np.asarray(v)
        if v.ndim == 0:
            v = v.reshape(1)
        if v.shape[0] == n and n != 1:
            out[k] = v[lo:hi]
        elif v.shape[0] == 1:
            out[k] = v
        else:
            raise RuntimeFailure(f"{k} has {v.shape[0]} rows, expected 1 or {n}")
    return out


def _full(x: np.ndarray, b: int) -> np.ndarray:
    return np.broadcast_to(x, (b,) + x.shape[1:]) if x.shape[0] != b else x


def _coord(d: Declaration, name: str, env, interp: Interpreter) -> Coord:
    if d.type_name == "int":
        raise RuntimeFailure(f"{name} is discrete; Metropolis sampling needs a real variable")
    lo = interp.eval(d.lower, env) if d.lower is not None else None
    hi = interp.eval(d.upper, env) if d.upper is not None else None
    return Coord(name, interp.decl_shape(d, env), lo, hi)


def _mh(stmts, coords: list[Coord], env, batch: int, decls, gen, cfg: MhConfig, n_keep: int,
        thin: int, label: str, step=None, componentwise: bool = False) -> list[dict[str, np.ndarray]]:
    def logp(xs):
        e = dict(env)
        e.update(xs)
        return Interpreter(batch, decls).run(stmts, e)

    step = cfg.step_size if step is None else step
    return run_chain(logp, coords, batch, gen, cfg.warmup, n_keep, thin, step, label, componentwise).draws


# --------------------------------------------------------------------- plans


def exec_rng(seg: CodeSegment, env: dict[str, np.ndarray], interp: Interpreter) -> dict[str, np.ndarray]:
    try:
        interp.run(seg.locals + seg.stmts, env)
    except (RuntimeFailure, DomainError) as e:
        raise RuntimeFailure(f"RNG segment for {seg.var}: {e}") from e
    return env


def exec_pdf(seg: CodeSegment, env: dict[str, np.ndarray], interp: Interpreter,
             cfg: MhConfig) -> dict[str, np.ndarray]:
    """One Metropolis draw of ``seg.var`` per row from the segment's unnormalized density."""
    try:
        coords = [_coord(interp.decls[seg.var], seg.var, env, interp)]
        gen = interp.rngs.get(seg.var)
        draws = _mh(seg.locals + seg.stmts, coords, env, interp.batch, interp.decls, gen, cfg,
                    1, cfg.inner_iters, seg.var)
    except (RuntimeFailure, DomainError) as e:
        raise RuntimeFailure(f"PDF segment for {seg.var}: {e}") from e
    env[seg.var] = draws[0][seg.var]
    return env


def plan_decls(plan: SamplingPlan) -> dict[str, Declaration]:
    decls = {**plan.data_decls, **plan.decls}
    for seg in plan.segments:
        for d in seg.locals:
            decls.setdefault(d.name, d)
    return decls


def run_plan(plan: SamplingPlan, data_env: dict[str, np.ndarray], n_draws: int, seed: int,
             cfg: MhConfig | None = None) -> DrawTable:
    """``n_draws`` independent passes over the plan; one column per drawn variable."""
    cfg = cfg or MhConfig()
    missing = [k for k in plan.inputs if k not in data_env]
    if missing:
        raise RuntimeFailure(f"missing data for {', '.join(missing)}")
    if not plan.segments:
        return DrawTable()
    decls = plan_decls(plan)
    parts: dict[str, list[np.ndarray]] = {v: [] for v in plan.drawn}
    for block, lo in enumerate(range(0, n_draws, BLOCK)):
        b = min(BLOCK, n_draws - lo)
        env = _rows(data_env, n_draws, lo, lo + b)
        pool = RngPool(seed, block)
        for seg in plan.segments:
            interp = Interpreter(b, decls, pool)
            try:
                if seg.label == "RNG":
                    exec_rng(seg, env, interp)
                else:
                    exec_pdf(seg, env, interp, cfg)
            except RuntimeFailure as e:
                raise RuntimeFailure(f"rows {lo + 1}..{lo + b}: {e}") from e
        for v in plan.drawn:
            parts[v].append(_full(env[v], b))
    return DrawTable({v: np.concatenate(p) for v, p in parts.items()})


# ------------------------------------------------------------------ programs


@dataclass
class ProgramRun:
    rows: dict[str, np.ndarray] = field(default_factory=dict)  # transformed data, (n, ...)
    draws: dict[str, np.ndarray] = field(default_factory=dict)  # everything else, (n, keep, ...)

    def single(self) -> dict[str, np.ndarray]:
        """Columns for ``keep == 1``: transformed data then per-draw values."""
        out = dict(self.rows)
        out.update({k: v[:, 0] for k, v in self.draws.items()})
        return out


def program_decls(prog: Program) -> dict[str, Declaration]:
    return {name: sym.decl for name, sym in prog.symbols.items()}


def run_program(prog: Program, data_env: dict[str, np.ndarray], n_rows: int, seed: int,
                cfg: MhConfig | None = None, keep: int = 1, thin: int | None = None) -> ProgramRun:
    """Execute a program once per row: transformed data, Metropolis over the
    parameters (``keep`` states, ``thin`` steps apart), then transformed
    parameters and generated quantities for each kept state."""
    cfg = cfg or MhConfig()
    thin = cfg.inner_iters if thin is None else thin
    decls = program_decls(prog)
    data_names = prog.vars_in("data")
    missing = [k for k in data_names if k not in data_env]
    if missing:
        raise RuntimeFailure(f"missing data for {', '.join(missing)}")
    td = prog.block_stmts("transformed_data")
    params = [s for s in prog.block_stmts("parameters") if isinstance(s, Declaration)]
    tp = prog.block_stmts("transformed_parameters")
    model = prog.block_stmts("model")
    gq = prog.block_stmts("generated_quantities")
    td_vars = prog.vars_in("transformed_data")
    draw_vars = prog.vars_in("parameters", "transformed_parameters", "generated_quantities")
    rows: dict[str, list] = {v: [] for v in td_vars}
    draws: dict[str, list] = {v: [] for v in draw_vars}
    key = ",".join(sorted(p.name for p in params))
    for block, lo in enumerate(range(0, n_rows, BLOCK)):
        b = min(BLOCK, n_rows - lo)
        env = _rows(data_env, n_rows, lo, lo + b)
        env = {k: v for k, v in env.items() if k in data_names or k in decls}
        pool = RngPool(seed, block)
        interp = Interpreter(b, decls, pool)
        try:
            interp.run(td, env)
            if params:
                coords = [_coord(p, p.name, env, interp) for p in params]
                snaps = _mh(tp + model, coords, env, b, decls, pool.get(key), cfg, keep, thin, key)
            else:
                snaps = [{} for _ in range(keep)]
            per_draw: dict[str, list] = {v: [] for v in draw_vars}
            for snap in snaps:
                e = dict(env)
                e.update(snap)
                interp.run(tp + gq, e)
                for v in draw_vars:
                    per_draw[v].append(_full(e[v], b))
        except (RuntimeFailure, DomainError) as exc:
            raise RuntimeFailure(f"rows {lo + 1}..{lo + b}: {exc}") from exc
        for v in td_vars:
            rows[v].append(_full(env[v], b))
        for v in draw_vars:
            draws[v].append(np.stack(per_draw[v], axis=1))
    return ProgramRun({v: np.concatenate(p) for v, p in rows.items()},
                      {v: np.concatenate(p) for v, p in draws.items()})


def run_chain_programs(chain: ProgramChain, data_env: dict[str, np.ndarray], n_rows: int, seed: int,
                       cfg: MhConfig | None = None) -> DrawTable:
    """Run the programs in order, handing each one's outputs to later programs as data."""
    env = dict(data_env)
    produced: dict[str, np.ndarray] = {}
    for prog in chain.programs:
        out = run_program(prog, env, n_rows, seed, cfg).single()
        produced.update(out)
        env.update(out)
    return DrawTable(produced)


# ---------------------------------------------------------------- reference


def model_statements(g: FactorGraph, prog: Program, dep: dataflow.DependencyGraph | None = None):
    """Statements computing every factor of ``g``, with their local declarations."""
    dep = dep or dataflow.analyze(prog)
    sids = {f.sid for f in g.factors}
    keep = dataflow.slice_ids(sids, dep, prog) | sids
    stmts = tuple(dataflow.program_prune(prog, keep))
    locs = local_decls(stmts, prog, set(prog.data_vars) | set(prog.param_vars))
    return locs + stmts


def reference_joint_sampler(g: FactorGraph, data_env: dict[str, np.ndarray], n_draws: int, seed: int,
                            cfg: MhConfig | None = None, chains: int | None = None) -> DrawTable:
    """Random-walk Metropolis over all graph variables jointly.

    ``chains`` chains run side by side; each keeps ``ceil(n / chains)`` states
    ``cfg.thin`` sweeps apart. Rows are ordered chain by chain. Each sweep
    proposes a change to one scalar element at a time, and proposals mix
    several multiples of ``cfg.step_size``, so narrow and wide regions (such
    as hierarchical funnels) both see reasonable acceptance rates.
    """
    cfg = cfg or MhConfig(thin=REFERENCE_THIN)
    prog = g.program
    names = sorted(g.variables, key=lambda v: prog.symbols[v].order)
    if not names:
        return DrawTable()
    c = min(n_draws, chains or 1000)
    m = math.ceil(n_draws / c)
    decls = program_decls(prog)
    env = _rows(data_env, 1, 0, 1)
    for k, v in env.items():
        if v.shape[0] != 1:
            raise RuntimeFailure(f"reference sampler needs a single data row ({k})")
    interp = Interpreter(c, decls)
    coords = [_coord(decls[v], v, env, interp) for v in names]
    stmts = model_statements(g, prog)
    gen = stream(seed, 0, "reference:" + ",".join(names))
    scales = [cfg.step_size * k for k in REFERENCE_SCALES]
    snaps = _mh(stmts, coords, env, c, decls, gen, cfg, m, cfg.thin, "reference", scales, componentwise=True)
    cols = {v: np.stack([s[v] for s in snaps], axis=1) for v in names}  # (c, m, ...)
    cols = {v: x.reshape((c * m,) + x.shape[2:])[:n_draws] for v, x in cols.items()}
    return DrawTable(cols, np.repeat(np.arange(c), m)[:n_draws])


# ------------------------------------------------------------ log densities


def factor_log_density(g: FactorGraph, fid: str, env: dict[str, np.ndarray], batch: int,
                       dep: dataflow.DependencyGraph | None = None) -> np.ndarray:
    """log f for one factor: its statement run after its backward slice."""
    prog = g.program
    dep = dep or dataflow.analyze(prog)
    f = g.factor(fid)
    keep = dataflow.slice_ids({f.sid}, dep, prog) | {f.sid}
    stmts = tuple(dataflow.program_prune(prog, keep))
    locs = local_decls(stmts, prog, set(prog.data_vars) | set(prog.param_vars))
    return Interpreter(batch, program_decls(prog)).run(locs + stmts, dict(env))


def segment_log_density(seg: CodeSegment, env: dict[str, np.ndarray], batch: int,
                        decls: dict[str, Declaration]) -> np.ndarray:
    """log D_v for a segment: the PDF statements, or the RNG draw's own density at v."""
    e = dict(env)
    interp = Interpreter(batch, decls)
    if seg.label == "PDF":
        return interp.run(seg.locals + seg.stmts, e)
    *body, draw = seg.stmts
    assert isinstance(draw, Assign) and isinstance(draw.value, Call)
    dist = draw.value.name[: -len("_rng")]
    suffix = "_lpmf" if IMPLS[dist].discrete else "_lpdf"
    interp.run(seg.locals + tuple(body), e)
    e[seg.var] = env[seg.var]
    density = Call(dist + suffix, (Var(seg.var),) + tuple(draw.value.args))
    return interp.eval(density, e) + np.zeros(batch)


__all__ = [
    "BLOCK", "exec_rng", "exec_pdf", "run_plan", "ProgramRun", "run_program", "run_chain_programs",
    "reference_joint_sampler", "model_statements", "factor_log_density", "segment_log_density",
    "plan_decls", "program_decls",
]
