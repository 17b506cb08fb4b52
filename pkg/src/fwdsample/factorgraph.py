"""Factor extraction, the bipartite factor graph, restrictions and serialization."""
from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass, field

from . import dataflow
from .builtins import DISTRIBUTIONS, is_density_call
from .frontend import printer
from .frontend.ast import Call, Program, Stmt, TargetIncrement, Tilde, root_name, walk
from .frontend.errors import FrontendError
from .frontend.parser import parse_statement

FORMS = {"target_increment": "target", "tilde": "tilde", "reject": "reject"}


class FactorGraphError(Exception):
    pass


def natural_key(name: str):
    """Sort key treating digit runs numerically, so ``F9`` sorts before ``F12``."""
    return tuple((0, int(t), "") if t.isdigit() else (1, 0, t) for t in re.findall(r"\d+|\D+", name))


@dataclass(frozen=True)
class Factor:
    id: str
    form: str  # target | tilde | reject
    pretty: str
    deps: frozenset[int] = frozenset()
    held: frozenset[str] = frozenset()  # neighbors that are fixed inputs, not graph variables
    stmt: Stmt | None = field(default=None, compare=False, repr=False)

    @property
    def sid(self) -> int:
        return self.stmt.id if self.stmt is not None else 0

    @property
    def variates(self) -> frozenset[str]:
        return variates(self.stmt) if self.stmt is not None else frozenset()


def variates(s: Stmt) -> frozenset[str]:
    """Variables appearing in the variate slot of a density statement."""
    if isinstance(s, Tilde):
        name = root_name(s.lhs)
        return frozenset({name} if name else ())
    if isinstance(s, TargetIncrement) and isinstance(s.value, Call) and is_density_call(s.value.name):
        name = root_name(s.value.args[0]) if s.value.args else None
        return frozenset({name} if name else ())
    return frozenset()


def factor_pretty(s: Stmt) -> str:
    return printer.stmt_head(s).rstrip(";")


def extract_factors(prog: Program, dep: dataflow.DependencyGraph) -> list[Factor]:
    """One factor per density statement of the model block, ids ``F<line>``."""
    out: list[Factor] = []
    used: dict[str, int] = {}
    for s in walk(prog.block_stmts("model")):
        if s.kind not in FORMS:
            continue
        base = f"F{s.loc.line}" if s.loc.line else f"F{s.id}"
        used[base] = used.get(base, 0) + 1
        fid = base if used[base] == 1 else f"{base}_{used[base]}"
        out.append(Factor(fid, FORMS[s.kind], factor_pretty(s), frozenset(dep.preds(s.id)), frozenset(), s))
    return out


@dataclass
class FactorGraph:
    variables: dict[str, str]  # name -> "data" | "param"
    factors: list[Factor]
    edges: set[tuple[str, str]]  # (variable, factor id)
    program: Program | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.factors = sorted(self.factors, key=lambda f: natural_key(f.id))
        self._by_id = {f.id: f for f in self.factors}

    def factor(self, fid: str) -> Factor:
        return self._by_id[fid]

    @property
    def factor_ids(self) -> list[str]:
        return [f.id for f in self.factors]

    def var_names(self) -> list[str]:
        return sorted(self.variables)

    def nei(self, fid: str) -> set[str]:
        return {v for v, f in self.edges if f == fid}

    def factors_of(self, v: str) -> set[str]:
        return {f for u, f in self.edges if u == v}

    def check(self) -> None:
        for v, f in self.edges:
            if v not in self.variables or f not in self._by_id:
                raise FactorGraphError(f"edge ({v}, {f}) has a missing endpoint")

    def __eq__(self, other):
        return (isinstance(other, FactorGraph) and self.variables == other.variables
                and self.factors == other.factors and self.edges == other.edges)


def build_factor_graph(prog: Program, dep: dataflow.DependencyGraph | None = None) -> FactorGraph:
    dep = dep or dataflow.analyze(prog)
    variables = {v: "data" for v in prog.data_vars}
    variables.update({v: "param" for v in prog.param_vars})
    factors: list[Factor] = []
    edges: set[tuple[str, str]] = set()
    for f in extract_factors(prog, dep):
        nei = dataflow.dependent_vars(f.stmt, dep, prog) & set(variables)
        if not nei:
            warnings.warn(f"factor {f.id} ({f.pretty}) depends on no variable; dropped as a constant")
            continue
        factors.append(f)
        edges.update((v, f.id) for v in nei)
    return FactorGraph(variables, factors, edges, prog)


def modeled_data(g: FactorGraph) -> set[str]:
    """Data variables that some factor treats as its variate."""
    out: set[str] = set()
    for f in g.factors:
        out |= {v for v in f.variates if g.variables.get(v) == "data" and (v, f.id) in g.edges}
    return out


def _restrict(g: FactorGraph, keep_vars: set[str], keep_factor) -> FactorGraph:
    factors = []
    for f in g.factors:
        if not keep_factor(f):
            continue
        nei = g.nei(f.id)
        held = frozenset((nei - keep_vars) | f.held)
        factors.append(Factor(f.id, f.form, f.pretty, f.deps, held, f.stmt))
    fids = {f.id for f in factors}
    edges = {(v, f) for v, f in g.edges if v in keep_vars and f in fids}
    variables = {v: k for v, k in g.variables.items() if v in keep_vars}
    return FactorGraph(variables, factors, edges, g.program)


def _require_covered(g: FactorGraph, what: str) -> None:
    for v in g.var_names():
        if not g.factors_of(v):
            raise FactorGraphError(f"{what} {v} has no factor")
    for f in g.factors:
        if not g.nei(f.id):
            raise FactorGraphError(f"factor {f.id} has no variable left after restriction")


def restrict_for_prior(g: FactorGraph, data_vars=None) -> FactorGraph:
    """Drop modeled data and the factors touching it; other data becomes held input."""
    data = set(data_vars) if data_vars is not None else {v for v, k in g.variables.items() if k == "data"}
    modeled = modeled_data(g) & data
    removed = {f for v, f in g.edges if v in modeled}
    out = _restrict(g, set(g.variables) - data, lambda f: f.id not in removed)
    for v in out.var_names():
        if not out.factors_of(v):
            raise FactorGraphError(f"parameter {v} has no prior")
    _require_covered(out, "parameter")
    return out


def restrict_for_predictive(g: FactorGraph, param_vars=None) -> FactorGraph:
    """Keep modeled data and the factors touching it; everything else is held input."""
    params = set(param_vars) if param_vars is not None else {v for v, k in g.variables.items() if k == "param"}
    modeled = modeled_data(g) - params
    keep = {f for v, f in g.edges if v in modeled}
    out = _restrict(g, modeled, lambda f: f.id in keep)
    _require_covered(out, "data variable")
    return out


def restrict_for_joint(g: FactorGraph) -> FactorGraph:
    """Parameters plus modeled data; unmodeled data (sizes, covariates) is held input."""
    keep = {v for v, k in g.variables.items() if k == "param"} | modeled_data(g)
    out = _restrict(g, keep, lambda f: True)
    _require_covered(out, "variable")
    return out


def restrict(g: FactorGraph, mode: str) -> FactorGraph:
    if mode == "prior":
        return restrict_for_prior(g)
    if mode == "predictive":
        return restrict_for_predictive(g)
    if mode == "full":
        return restrict_for_joint(g)
    raise ValueError(f"unknown mode {mode!r}")


# ------------------------------------------------------------ serialization


def serialize(g: FactorGraph) -> str:
    lines = ["factorgraph v1"]
    for v in g.var_names():
        lines.append(f"var {v} kind={g.variables[v]}")
    for f in g.factors:
        line = f"factor {f.id} form={f.form} stmt={json.dumps(f.pretty)} deps={','.join(map(str, sorted(f.deps)))}"
        if f.held:
            line += f" held={','.join(sorted(f.held))}"
        lines.append(line)
    for v, fid in sorted(g.edges, key=lambda e: (e[0], natural_key(e[1]))):
        lines.append(f"edge {v} {fid}")
    return "\n".join(lines) + "\n"


_FACTOR_RE = re.compile(
    r'^factor (\S+) form=(target|tilde|reject) stmt=("(?:[^"\\]|\\.)*") deps=([0-9,]*)(?: held=([\w,]+))?$'
)


def deserialize(text: str) -> FactorGraph:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].strip() != "factorgraph v1":
        raise FactorGraphError("line 1: expected header 'factorgraph v1'")
    variables: dict[str, str] = {}
    factors: list[Factor] = []
    edges: set[tuple[str, str]] = set()
    for n, line in enumerate(lines[1:], start=2):
        if line.startswith("var "):
            m = re.match(r"^var (\w+) kind=(data|param)$", line)
            if not m:
                raise FactorGraphError(f"line {n}: malformed var line")
            variables[m.group(1)] = m.group(2)
        elif line.startswith("factor "):
            m = _FACTOR_RE.match(line)
            if not m:
                raise FactorGraphError(f"line {n}: malformed factor line")
            fid, form, stmt_json, deps, held = m.groups()
            pretty = json.loads(stmt_json)
            try:
                stmt = parse_statement(pretty + ";")
            except FrontendError as e:
                raise FactorGraphError(f"line {n}: bad statement: {e}") from None
            dep_ids = frozenset(int(x) for x in deps.split(",") if x)
            factors.append(Factor(fid, form, pretty, dep_ids, frozenset(held.split(",")) if held else frozenset(), stmt))
        elif line.startswith("edge "):
            parts = line.split()
            if len(parts) != 3:
                raise FactorGraphError(f"line {n}: malformed edge line")
            edges.add((parts[1], parts[2]))
        else:
            raise FactorGraphError(f"line {n}: unknown record {line.split()[0]!r}")
    g = FactorGraph(variables, factors, edges)
    if len(g._by_id) != len(factors):
        raise FactorGraphError("duplicate factor id")
    for v, f in edges:
        if f not in g._by_id:
            raise FactorGraphError(f"edge references unknown factor {f}")
        if v not in variables:
            raise FactorGraphError(f"edge references unknown variable {v}")
    return g


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def to_dot(g: FactorGraph) -> str:
    lines = ["graph factorgraph {"]
    for v in g.var_names():
        style = ', style=filled, fillcolor="#dddddd"' if g.variables[v] == "data" else ""
        lines.append(f'  "{v}" [shape=ellipse{style}];')
    for f in g.factors:
        lines.append(f'  "{f.id}" [shape=box, label="{f.id}: {_dot_escape(f.pretty)}"];')
    for v, fid in sorted(g.edges, key=lambda e: (e[0], natural_key(e[1]))):
        lines.append(f'  "{v}" -- "{fid}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def is_recognizable_stmt(s: Stmt) -> bool:
    """Surface shape check shared with the transform: a plain builtin density call."""
    if isinstance(s, Tilde):
        return s.dist in DISTRIBUTIONS
    if isinstance(s, TargetIncrement):
        return isinstance(s.value, Call) and is_density_call(s.value.name)
    return False


__all__ = [
    "Factor", "FactorGraph", "FactorGraphError", "build_factor_graph", "extract_factors",
    "restrict_for_prior", "restrict_for_predictive", "restrict_for_joint", "restrict",
    "serialize", "deserialize", "to_dot", "natural_key",
]
