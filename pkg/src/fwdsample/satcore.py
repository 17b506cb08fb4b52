"""Propositional formulas, CNF conversion and projected all-solutions enumeration.

The solver is a small DPLL with unit propagation. Enumeration finds a model,
records its projection, adds a clause forbidding that projection and repeats
until the instance becomes unsatisfiable.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Protocol


# ------------------------------------------------------------------ formulas


@dataclass(frozen=True)
class Atom:
    name: str


@dataclass(frozen=True)
class Not:
    arg: "Formula"


@dataclass(frozen=True)
class And:
    args: tuple["Formula", ...]


@dataclass(frozen=True)
class Or:
    args: tuple["Formula", ...]


@dataclass(frozen=True)
class Implies:
    lhs: "Formula"
    rhs: "Formula"


Formula = Atom | Not | And | Or | Implies

TRUE = And(())
FALSE = Or(())


def conj(*args: Formula) -> And:
    return And(tuple(args))


def disj(*args: Formula) -> Or:
    return Or(tuple(args))


def atoms_of(f: Formula) -> set[str]:
    if isinstance(f, Atom):
        return {f.name}
    if isinstance(f, Not):
        return atoms_of(f.arg)
    if isinstance(f, Implies):
        return atoms_of(f.lhs) | atoms_of(f.rhs)
    out: set[str] = set()
    for a in f.args:
        out |= atoms_of(a)
    return out


def evaluate(f: Formula, true_atoms: set[str]) -> bool:
    if isinstance(f, Atom):
        return f.name in true_atoms
    if isinstance(f, Not):
        return not evaluate(f.arg, true_atoms)
    if isinstance(f, Implies):
        return (not evaluate(f.lhs, true_atoms)) or evaluate(f.rhs, true_atoms)
    if isinstance(f, And):
        return all(evaluate(a, true_atoms) for a in f.args)
    return any(evaluate(a, true_atoms) for a in f.args)


def nnf(f: Formula, negate: bool = False) -> Formula:
    """Negation normal form: negations only on atoms, no implications."""
    if isinstance(f, Atom):
        return Not(f) if negate else f
    if isinstance(f, Not):
        return nnf(f.arg, not negate)
    if isinstance(f, Implies):
        return nnf(Or((Not(f.lhs), f.rhs)), negate)
    args = tuple(nnf(a, negate) for a in f.args)
    if isinstance(f, And):
        return Or(args) if negate else And(args)
    return And(args) if negate else Or(args)


# ----------------------------------------------------------------------- CNF


@dataclass
class CnfInstance:
    clauses: list[tuple[int, ...]]
    atoms: list[str]  # atom i+1 <-> atoms[i]
    projection: list[int]
    aux: set[int] = field(default_factory=set)

    @property
    def num_vars(self) -> int:
        return len(self.atoms)

    def index(self, name: str) -> int:
        return self.atoms.index(name) + 1

    def to_dimacs(self) -> str:
        lines = ["c fwdsample cnf"]
        for i, name in enumerate(self.atoms, start=1):
            lines.append(f"c atom {i} {name}{' aux' if i in self.aux else ''}")
        lines.append("c projection " + " ".join(map(str, self.projection)))
        lines.append(f"p cnf {self.num_vars} {len(self.clauses)}")
        for c in self.clauses:
            lines.append(" ".join(map(str, c)) + " 0")
        return "\n".join(lines) + "\n"


DISTRIBUTE_LIMIT = 64  # max clauses produced by distributing one subformula


def _distribute(f: Formula, index) -> list[frozenset[int]] | None:
    """Clauses of an NNF formula by distribution, or None if it grows too big."""
    if isinstance(f, Atom):
        return [frozenset({index(f.name)})]
    if isinstance(f, Not):
        return [frozenset({-index(f.arg.name)})]
    if isinstance(f, And):
        out: list[frozenset[int]] = []
        for a in f.args:
            sub = _distribute(a, index)
            if sub is None:
                return None
            out.extend(sub)
            if len(out) > DISTRIBUTE_LIMIT:
                return None
        return out
    acc: list[frozenset[int]] = [frozenset()]
    for a in f.args:
        sub = _distribute(a, index)
        if sub is None or len(acc) * len(sub) > DISTRIBUTE_LIMIT:
            return None
        acc = [x | y for x in acc for y in sub]
    return acc


def to_cnf(f: Formula, universe: Iterable[str] | None = None,
           projection: Iterable[str] | None = None) -> CnfInstance:
    """Equisatisfiable CNF. Auxiliary Tseitin atoms never join the projection."""
    names = sorted(atoms_of(f)) if universe is None else list(universe)
    missing = atoms_of(f) - set(names)
    if missing:
        raise ValueError(f"atoms outside the universe: {sorted(missing)}")
    atoms = list(names)
    pos = {n: i + 1 for i, n in enumerate(atoms)}
    aux: set[int] = set()
    clauses: list[frozenset[int]] = []

    def index(name: str) -> int:
        return pos[name]

    def fresh() -> int:
        atoms.append(f"_aux{len(aux)}")
        aux.add(len(atoms))
        return len(atoms)

    def tseitin(g: Formula) -> int:
        """Literal equivalent (one direction suffices in NNF) to ``g``."""
        if isinstance(g, Atom):
            return index(g.name)
        if isinstance(g, Not):
            return -index(g.arg.name)
        lits = [tseitin(a) for a in g.args]
        x = fresh()
        if isinstance(g, And):
            clauses.extend(frozenset({-x, lit}) for lit in lits)
        else:
            clauses.append(frozenset({-x, *lits}))
        return x

    g = nnf(f)
    parts = g.args if isinstance(g, And) else (g,)
    for part in parts:
        sub = _distribute(part, index)
        if sub is None:
            clauses.append(frozenset({tseitin(part)}))
        else:
            clauses.extend(sub)
    out: list[tuple[int, ...]] = []
    seen: set[frozenset[int]] = set()
    for c in clauses:
        if any(-lit in c for lit in c) or c in seen:
            continue  # tautology or duplicate
        seen.add(c)
        out.append(tuple(sorted(c, key=lambda lit: (abs(lit), lit))))
    proj_names = names if projection is None else list(projection)
    return CnfInstance(out, atoms, [pos[n] for n in proj_names], aux)


# -------------------------------------------------------------------- solver


class Solver(Protocol):
    def solve(self, clauses: list[tuple[int, ...]], num_vars: int) -> dict[int, bool] | None: ...


class DpllSolver:
    """Iterative DPLL; decides the lowest unassigned atom, trying false first."""

    def solve(self, clauses, num_vars):
        value = [0] * (num_vars + 1)  # 0 unassigned, 1 true, -1 false
        occurs: list[list[int]] = [[] for _ in range(num_vars + 1)]
        for ci, c in enumerate(clauses):
            if not c:
                return None
            for lit in c:
                occurs[abs(lit)].append(ci)
        trail: list[int] = []
        decisions: list[tuple[int, int, bool]] = []  # (trail length, literal, flipped)

        def lit_val(lit: int) -> int:
            v = value[abs(lit)]
            return v if lit > 0 else -v

        def assign(lit: int) -> None:
            value[abs(lit)] = 1 if lit > 0 else -1
            trail.append(lit)

        def propagate(start: int) -> bool:
            """Unit propagation from trail[start:]; False on conflict."""
            pending = range(len(clauses)) if start == 0 else None
            qi = start
            while True:
                if pending is None:
                    if qi >= len(trail):
                        return True
                    lit = trail[qi]
                    qi += 1
                    todo = occurs[abs(lit)]
                else:
                    todo, pending = pending, None
                for ci in todo:
                    unassigned = 0
                    last = 0
                    sat = False
                    for lit in clauses[ci]:
                        v = lit_val(lit)
                        if v > 0:
                            sat = True
                            break
                        if v == 0:
                            unassigned += 1
                            last = lit
                    if sat:
                        continue
                    if unassigned == 0:
                        return False
                    if unassigned == 1:
                        assign(last)

        ok = propagate(0)
        while True:
            if ok:
                var = next((i for i in range(1, num_vars + 1) if value[i] == 0), None)
                if var is None:
                    return {i: value[i] > 0 for i in range(1, num_vars + 1)}
                decisions.append((len(trail), -var, False))
                mark = len(trail)
                assign(-var)
                ok = propagate(mark)
                continue
            while decisions:
                mark, lit, flipped = decisions.pop()
                while len(trail) > mark:
                    value[abs(trail.pop())] = 0
                if not flipped:
                    decisions.append((mark, -lit, True))
                    assign(-lit)
                    ok = propagate(mark)
                    break
            else:
                return None


@dataclass
class Enumeration:
    solutions: list[frozenset[str]]
    calls: int


def enumerate_with_stats(c: CnfInstance, solver: Solver | None = None) -> Enumeration:
    solver = solver or DpllSolver()
    clauses = list(c.clauses)
    found: list[frozenset[str]] = []
    calls = 0
    while True:
        calls += 1
        model = solver.solve(clauses, c.num_vars)
        if model is None:
            break
        found.append(frozenset(c.atoms[i - 1] for i in c.projection if model[i]))
        # an empty projection yields the empty blocking clause, ending the loop
        clauses.append(tuple(-i if model[i] else i for i in c.projection))
    return Enumeration(sorted(found, key=sorted), calls)


def enumerate_projected(c: CnfInstance, solver: Solver | None = None) -> list[frozenset[str]]:
    """Distinct projections of all models, in canonical sorted order."""
    return enumerate_with_stats(c, solver).solutions


def brute_force(f: Formula, projection: Iterable[str]) -> list[frozenset[str]]:
    """Truth-table reference: projections of all satisfying assignments."""
    names = sorted(atoms_of(f) | set(projection))
    proj = set(projection)
    out: set[frozenset[str]] = set()
    for bits in itertools.product((False, True), repeat=len(names)):
        true = {n for n, b in zip(names, bits) if b}
        if evaluate(f, true):
            out.add(frozenset(true & proj))
    return sorted(out, key=sorted)
