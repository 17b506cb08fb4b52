"""Command-line entry point: ``fwdsample <command> <program.stan> [options]``.

Exit codes: 0 ok, 1 usage, 2 parse or analysis error, 3 no DAG, 4 runtime
error, 5 equivalence or calibration check failed.
"""
from __future__ import annotations

import argparse
import dataclasses
import sys
import time
import warnings
from pathlib import Path
from typing import TextIO

from . import dataflow
from .codegen import (
    SamplingPlan,
    derive_plan,
    prior_predictive_plan,
    sample_graph,
    synthesize_programs,
    synthesize_sbc,
)
from .factorgraph import FactorGraphError, build_factor_graph, restrict, serialize, to_dot
from .frontend import FrontendError, Program, parse
from .runtime import (
    DomainError,
    MhConfig,
    RuntimeFailure,
    equivalence_check,
    load_env,
    reference_joint_sampler,
    run_plan,
    run_sbc,
)
from .runtime.sampling import REFERENCE_THIN
from .transform import Asker, NoDagError, Query, TransformError, build_queries, encode

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NO_DAG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3, 4, 5

EMITS = ("fg", "dag", "cnf", "selections", "dep-graph")


class UsageError(Exception):
    pass


class AmbiguousError(Exception):
    pass


# ------------------------------------------------------------ query protocol


def prompt_text(var: str, options: list[Query], g) -> str:
    lines = [f"Variable {var} has ambiguous conditional density. Which factor set is",
             "its constant-normalized density?",
             "  0: none of the below"]
    lines += [f"  {i}: {q.render(g)}" for i, q in enumerate(options, start=1)]
    return "\n".join(lines) + "\n> "


def interactive_asker(g_of, stdin: TextIO, stdout: TextIO) -> Asker:
    """Prompt on ``stdout`` and read numbered answers from ``stdin``; re-asks on bad input."""

    def ask(var: str, options: list[Query]) -> int:
        while True:
            stdout.write(prompt_text(var, options, g_of()))
            stdout.flush()
            line = stdin.readline()
            if not line:
                raise UsageError(f"no answer for {var} (end of input)")
            line = line.strip()
            if line.isdigit() and int(line) <= len(options):
                return int(line)
            stdout.write(f"please answer with a number from 0 to {len(options)}\n")

    return ask


def read_answers(path: str) -> dict[str, int]:
    out: dict[str, int] = {}
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read answers file: {e}") from None
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        var, sep, val = line.partition("=")
        if not sep or not val.strip().isdigit():
            raise UsageError(f"{path}:{n}: expected var=<number>")
        out[var.strip()] = int(val.strip())
    return out


def file_asker(answers: dict[str, int]) -> Asker:
    def ask(var: str, options: list[Query]) -> int:
        if var not in answers:
            raise UsageError(f"answers file has no answer for {var}")
        choice = answers[var]
        if choice > len(options):
            raise UsageError(f"answer {var}={choice} is out of range 0..{len(options)}")
        return choice

    return ask


def failing_asker(var: str, options: list[Query]) -> int:
    raise AmbiguousError(f"{var} has an ambiguous conditional density and --fail-on-ambiguous is set")


class QueryContext:
    """Builds the asker for the selected query mode; tracks the graph being asked about."""

    def __init__(self, args, stdin: TextIO, stdout: TextIO):
        self.graph = None
        self.assume_yes = args.assume_all_yes
        if args.answers:
            self.ask: Asker | None = file_asker(read_answers(args.answers))
        elif args.fail_on_ambiguous:
            self.ask = failing_asker
        elif args.assume_all_yes:
            self.ask = None
        else:
            self.ask = interactive_asker(lambda: self.graph, stdin, stdout)


def _warn_assumed(ctx: QueryContext, d) -> None:
    if ctx.assume_yes and build_queries(d.result.selections, d.result.recognizable, d.graph):
        print(f"warning: {d.plan.provenance}: assuming every candidate conditional density "
              "is constant-normalized", file=sys.stderr)


def _derive(ctx: QueryContext, prog: Program, mode: str):
    ctx.graph = restrict(build_factor_graph(prog), mode)
    d = derive_plan(prog, mode, ctx.ask)
    _warn_assumed(ctx, d)
    return d


def _prior_predictive(ctx: QueryContext, prog: Program, rename_params: bool = False):
    ask = None if ctx.ask is None else _ModeAsker(ctx, prog)
    plan, derivs = prior_predictive_plan(prog, ask, rename_params)
    for d in derivs:
        _warn_assumed(ctx, d)
    return plan, derivs


class _ModeAsker:
    """Asker for prior_predictive_plan: renders prompts against the graph whose
    variables include the one being asked about (prior first, then predictive)."""

    def __init__(self, ctx: QueryContext, prog: Program):
        full = build_factor_graph(prog)
        self.graphs = [restrict(full, "prior"), restrict(full, "predictive")]
        self.ctx = ctx

    def __call__(self, var: str, options: list[Query]) -> int:
        for g in self.graphs:
            if var in g.variables and all(f in g.factor_ids for q in options for f in q.factors):
                self.ctx.graph = g
                break
        return self.ctx.ask(var, options)


# ------------------------------------------------------------------ commands


def _load(path: str) -> Program:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from None
    return parse(text)


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emits(args) -> set[str]:
    out: set[str] = set()
    for item in args.emit or []:
        for e in item.split(","):
            e = e.strip()
            if e not in EMITS:
                raise UsageError(f"unknown --emit target {e!r} (choose from {', '.join(EMITS)})")
            out.add(e)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def cmd_graph(args, ctx) -> int:
    prog = _load(args.program)
    dep = dataflow.analyze(prog)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        g = build_factor_graph(prog, dep)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if args.mode:
        g = restrict(g, args.mode)
    if not g.factors:
        print("warning: the program has no factors", file=sys.stderr)
    out = _out(args)
    emits = _emits(args)
    _write(out / "factorgraph.txt", serialize(g))
    if "fg" in emits:
        _write(out / "factorgraph.dot", to_dot(g))
    if "dep-graph" in emits:
        _write(out / "dep-graph.dot", dep.to_dot(prog))
    print(f"{len(g.variables)} variables, {len(g.factors)} factors, {len(g.edges)} edges")
    return EXIT_OK


def cmd_transform(args, ctx) -> int:
    prog = _load(args.program)
    mode = args.mode or "prior"
    out = _out(args)
    emits = _emits(args)
    dep = dataflow.analyze(prog)
    g = restrict(build_factor_graph(prog, dep), mode)
    if "fg" in emits:
        _write(out / "factorgraph.txt", serialize(g))
        _write(out / "factorgraph.dot", to_dot(g))
    if "dep-graph" in emits:
        _write(out / "dep-graph.dot", dep.to_dot(prog))
    if "cnf" in emits:
        from .transform import recognizable_edges
        _write(out / "formula.cnf", encode(g, recognizable_edges(g)).cnf().to_dimacs())
    try:
        d = _derive(ctx, prog, mode)
        res = d.result
    except NoDagError as e:
        if "selections" in emits and e.result is not None:
            _write(out / "selections.txt", _selections_text(e.result.selections))
        raise
    if "selections" in emits:
        _write(out / "selections.txt", _selections_text(res.selections))
    _write(out / "dag.txt", res.dag.assignment_table())
    _write(out / "dag.dot", res.dag.to_dot())
    rec = " ".join(f"({v}, {e.factor})" for v, e in sorted(res.recognizable.items()))
    print(f"recognizable edges: {rec or 'none'}")
    print(f"selection sets: {len(res.selections)}; questions asked: {len(res.questions)}")
    for seg in d.plan.segments:
        print(seg.describe())
    return EXIT_OK


def _selections_text(S) -> str:
    lines = []
    for i, s in enumerate(S, start=1):
        lines.append(f"selection {i}: " + " ".join(f"({v},{f})" for v, f in sorted(s)))
    return "\n".join(lines) + ("\n" if lines else "")


def cmd_ppc(args, ctx) -> int:
    prog = _load(args.program)
    plan, _ = _prior_predictive(ctx, prog)
    chain = synthesize_programs(plan, prog)
    out = _out(args)
    names = [f"ppc_{i}.stan" for i in range(1, len(chain.texts) + 1)]
    for n, t in zip(names, chain.texts):
        _write(out / n, t)
    _write(out / "ppc.manifest", "\n".join(chain.manifest_lines(names)) + "\n")
    print(f"wrote {len(names)} program(s)")
    return EXIT_OK


def _cfg(args) -> MhConfig:
    return MhConfig(step_size=args.step_size, warmup=args.warmup, inner_iters=args.inner_iters)


def _data(args, prog: Program):
    decls = {n: s.decl for n, s in prog.symbols.items()}
    try:
        return load_env(args.data, decls)
    except (OSError, ValueError) as e:
        raise UsageError(f"cannot load data: {e}") from None


def _require_seed(args) -> int:
    if args.seed is None:
        raise UsageError(f"{args.command} requires --seed")
    return args.seed


def cmd_sbc(args, ctx) -> int:
    prog = _load(args.program)
    draws = args.draws if args.draws is not None else 31
    bundle = synthesize_sbc(prog, draws, _ModeAsker(ctx, prog) if ctx.ask is not None else None)
    out = _out(args)
    names = [f"sbc_{i}.stan" for i in range(1, len(bundle.programs) + 1)]
    for n, t in zip(names, bundle.programs):
        _write(out / n, t)
    _write(out / "sbc.manifest", bundle.manifest(names))
    print(f"wrote {len(names)} program(s)")
    if args.reps:
        seed = _require_seed(args)
        t0 = time.perf_counter()
        report = run_sbc(bundle, _data(args, prog), args.reps, seed, _cfg(args))
        report.ranks_table().write(out / "sbc_ranks.csv")
        _write(out / "sbc.txt", "\n".join(report.lines()) + "\n")
        print("\n".join(report.lines()))
        print(f"time sbc: {time.perf_counter() - t0:.3f}s")
        return EXIT_OK if report.passed else EXIT_CHECK
    return EXIT_OK


def _plan_for(args, ctx, prog: Program) -> tuple[SamplingPlan, object]:
    mode = args.mode or "prior"
    if mode == "ppc":
        plan, derivs = _prior_predictive(ctx, prog)
        return plan, None
    d = _derive(ctx, prog, mode)
    plan = d.plan
    if args.drop_factor:
        a = {v: tuple(f for f in fs if f not in args.drop_factor) for v, fs in d.result.dag.assignment.items()}
        plan = sample_graph(dataclasses.replace(d.result.dag, assignment=a), d.graph, prog, mode)
    return plan, d


def cmd_sample(args, ctx) -> int:
    seed = _require_seed(args)
    prog = _load(args.program)
    plan, _ = _plan_for(args, ctx, prog)
    n = args.draws if args.draws is not None else 1000
    t0 = time.perf_counter()
    table = run_plan(plan, _data(args, prog), n, seed, _cfg(args))
    elapsed = time.perf_counter() - t0
    table.write(_out(args) / "draws.csv")
    print(f"{n} draws of {', '.join(table.names) or 'nothing'}")
    print(f"time forward: {elapsed:.3f}s")
    return EXIT_OK


def cmd_check(args, ctx) -> int:
    seed = _require_seed(args)
    prog = _load(args.program)
    if (args.mode or "prior") == "ppc":
        raise UsageError("check compares one restricted graph; use --mode prior, predictive or full")
    plan, d = _plan_for(args, ctx, prog)
    n = args.draws if args.draws is not None else 50000
    data = _data(args, prog)
    cfg = _cfg(args)
    t0 = time.perf_counter()
    fwd = run_plan(plan, data, n, seed, cfg)
    t1 = time.perf_counter()
    ref = reference_joint_sampler(d.graph, data, n, seed, dataclasses.replace(cfg, thin=REFERENCE_THIN))
    t2 = time.perf_counter()
    report = equivalence_check(fwd, ref)
    _write(_out(args) / "check.txt", "\n".join(report.lines()) + "\n")
    print("\n".join(report.lines()))
    print(f"time forward: {t1 - t0:.3f}s")
    print(f"time reference: {t2 - t1:.3f}s")
    return EXIT_OK if report.passed else EXIT_CHECK


COMMANDS = {"graph": cmd_graph, "transform": cmd_transform, "ppc": cmd_ppc, "sbc": cmd_sbc,
            "sample": cmd_sample, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fwdsample",
                                description="Turn density-form programs into forward-sampling programs.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("program", help="mini-language source file")
    p.add_argument("--mode", choices=("prior", "predictive", "full", "ppc"),
                   help="graph restriction (ppc: prior then predictive, for sample)")
    p.add_argument("--emit", action="append", metavar="TARGETS",
                   help="extra artifacts, comma separated: " + ", ".join(EMITS))
    q = p.add_mutually_exclusive_group()
    q.add_argument("--answers", metavar="FILE", help="scripted answers, one var=<n> per line")
    q.add_argument("--assume-all-yes", action="store_true", help="affirm every candidate density")
    q.add_argument("--fail-on-ambiguous", action="store_true", help="exit 3 instead of asking")
    p.add_argument("--seed", type=int)
    p.add_argument("--draws", type=int, help="draws to produce (sbc: posterior draws per replication)")
    p.add_argument("--reps", type=int, default=0, help="sbc: run this many replications")
    p.add_argument("--data", metavar="CSV", help="data values, one row shared or one row per draw")
    p.add_argument("--step-size", type=float, default=0.5)
    p.add_argument("--warmup", type=int, default=500)
    p.add_argument("--inner-iters", type=int, default=200)
    p.add_argument("--drop-factor", action="append", metavar="ID",
                   help="remove a factor from the chosen assignment (mutation testing)")
    p.add_argument("--out", default=".", metavar="DIR")
    return p


def main(argv: list[str] | None = None, stdin: TextIO | None = None, stdout: TextIO | None = None) -> int:
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    if args.draws is not None and args.draws < 1:
        print("error: --draws must be positive", file=sys.stderr)
        return EXIT_USAGE
    old_stdout = sys.stdout
    sys.stdout = stdout
    try:
        ctx = QueryContext(args, stdin, stdout)
        return COMMANDS[args.command](args, ctx)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        if isinstance(e, DomainError):
            print(f"runtime error: {e}", file=sys.stderr)
            return EXIT_RUNTIME
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FrontendError as e:
        print(f"{args.program}:{e}", file=sys.stderr)
        return EXIT_PARSE
    except FactorGraphError as e:
        print(f"{args.program}: analysis error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except AmbiguousError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NO_DAG
    except NoDagError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NO_DAG
    except TransformError as e:
        print(f"analysis error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except RuntimeFailure as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    finally:
        sys.stdout = old_stdout


if __name__ == "__main__":
    sys.exit(main())
