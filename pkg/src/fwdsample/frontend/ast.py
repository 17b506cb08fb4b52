"""Abstract syntax for the mini probabilistic language.

Nodes are frozen dataclasses. Source locations are carried along but excluded
from equality, so two programs compare equal when they are structurally
identical regardless of layout.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union

BLOCK_KINDS = (
    "data",
    "transformed_data",
    "parameters",
    "transformed_parameters",
    "model",
    "generated_quantities",
)

BLOCK_TITLES = {
    "data": "data",
    "transformed_data": "transformed data",
    "parameters": "parameters",
    "transformed_parameters": "transformed parameters",
    "model": "model",
    "generated_quantities": "generated quantities",
}


@dataclass(frozen=True)
class Loc:
    line: int
    col: int

    def __str__(self) -> str:
        return f"{self.line}:{self.col}"


NOLOC = Loc(0, 0)


# ---------------------------------------------------------------- expressions


@dataclass(frozen=True)
class Num:
    value: float
    is_int: bool
    loc: Loc = field(default=NOLOC, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    loc: Loc = field(default=NOLOC, compare=False, repr=False)


@dataclass(frozen=True)
class Index:
    base: "Expr"
    index: "Expr"
    loc: Loc = field(default=NOLOC, compare=False, repr=False)


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: "Expr"
    loc: Loc = field(default=NOLOC, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    loc: Loc = field(default=NOLOC, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple["Expr", ...]
    loc: Loc = field(default=NOLOC, compare=False, repr=False)


Expr = Union[Num, Var, Index, Unary, BinOp, Call]


def iter_expr(e: Expr) -> Iterator[Expr]:
    """Pre-order walk over an expression tree."""
    yield e
    if isinstance(e, Index):
        yield from iter_expr(e.base)
        yield from iter_expr(e.index)
    elif isinstance(e, Unary):
        yield from iter_expr(e.operand)
    elif isinstance(e, BinOp):
        yield from iter_expr(e.left)
        yield from iter_expr(e.right)
    elif isinstance(e, Call):
        for a in e.args:
            yield from iter_expr(a)


def expr_vars(e: Expr | None) -> set[str]:
    if e is None:
        return set()
    return {n.name for n in iter_expr(e) if isinstance(n, Var)}


def root_name(e: Expr) -> str | None:
    """Identifier at the bottom of an lvalue-like expression (``x`` or ``x[i]``)."""
    while isinstance(e, Index):
        e = e.base
    return e.name if isinstance(e, Var) else None


# ----------------------------------------------------------------- statements


@dataclass(frozen=True)
class Declaration:
    id: int
    type_name: str  # real | int | vector
    name: str
    shape: tuple[Expr, ...] = ()
    lower: Expr | None = None
    upper: Expr | None = None
    init: Expr | None = None
    # how the size was written: "vector" for vector[N] x, "suffix" for real x[N],
    # "prefix" for real[N] x. Only matters for printing.
    shape_style: str = field(default="suffix", compare=False)
    loc: Loc = field(default=NOLOC, compare=False, repr=False)

    kind = "declaration"


@dataclass(frozen=True)
class Assign:
    id: int
    name: str
    index: Expr | None
    value: Expr
    loc: Loc = field(default=NOLOC, compare=False, repr=False)

    kind = "assignment"


@dataclass(frozen=True)
class TargetIncrement:
    id: int
    value: Expr
    loc: Loc = field(default=NOLOC, compare=False, repr=False)

    kind = "target_increment"


@dataclass(frozen=True)
class Tilde:
    id: int
    lhs: Expr
    dist: str
    args: tuple[Expr, ...]
    loc: Loc = field(default=NOLOC, compare=False, repr=False)

    kind = "tilde"

    def desugar(self) -> TargetIncrement:
        """The equivalent ``target += dist_lpdf(lhs | args)`` statement."""
        from ..builtins import DISTRIBUTIONS

        suffix = DISTRIBUTIONS[self.dist].density_suffix
        call = Call(self.dist + suffix, (self.lhs, *self.args), self.loc)
        return TargetIncrement(self.id, call, self.loc)


@dataclass(frozen=True)
class For:
    id: int
    var: str
    lo: Expr
    hi: Expr
    body: tuple["Stmt", ...]
    loc: Loc = field(default=NOLOC, compare=False, repr=False)

    kind = "for_loop"


@dataclass(frozen=True)
class If:
    id: int
    cond: Expr
    then: tuple["Stmt", ...]
    orelse: tuple["Stmt", ...] | None = None
    loc: Loc = field(default=NOLOC, compare=False, repr=False)

    kind = "if_else"


@dataclass(frozen=True)
class Reject:
    id: int
    message: str
    loc: Loc = field(default=NOLOC, compare=False, repr=False)

    kind = "reject"


Stmt = Union[Declaration, Assign, TargetIncrement, Tilde, For, If, Reject]

DENSITY_KINDS = ("target_increment", "tilde", "reject")


def children(s: Stmt) -> tuple[Stmt, ...]:
    if isinstance(s, For):
        return s.body
    if isinstance(s, If):
        return s.then + (s.orelse or ())
    return ()


def walk(stmts: tuple[Stmt, ...] | list[Stmt]) -> Iterator[Stmt]:
    """Pre-order walk, which is also source order."""
    for s in stmts:
        yield s
        yield from walk(children(s))


def stmt_exprs(s: Stmt) -> list[Expr]:
    """Expressions owned directly by ``s`` (not by nested statements)."""
    if isinstance(s, Declaration):
        out = list(s.shape)
        out += [e for e in (s.lower, s.upper, s.init) if e is not None]
        return out
    if isinstance(s, Assign):
        return ([s.index] if s.index is not None else []) + [s.value]
    if isinstance(s, TargetIncrement):
        return [s.value]
    if isinstance(s, Tilde):
        return [s.lhs, *s.args]
    if isinstance(s, For):
        return [s.lo, s.hi]
    if isinstance(s, If):
        return [s.cond]
    return []


# -------------------------------------------------------------------- program


@dataclass(frozen=True)
class Symbol:
    name: str
    decl: Declaration
    block: str
    order: int  # position among all declarations, for deterministic tie-breaks


@dataclass(frozen=True)
class Block:
    kind: str
    stmts: tuple[Stmt, ...]
    loc: Loc = field(default=NOLOC, compare=False, repr=False)


class Program:
    """A parsed program plus lookup tables derived from it.

    Equality is structural over blocks only; the tables are derived data.
    """

    def __init__(self, blocks: tuple[Block, ...], source: str | None = None):
        self.blocks = blocks
        self.source = source
        self.symbols: dict[str, Symbol] = {}
        self._stmt: dict[int, Stmt] = {}
        self._block_of: dict[int, str] = {}
        self._enclosing: dict[int, tuple[int, ...]] = {}
        order = 0
        for block in blocks:
            for s, enclosing in _walk_with_enclosing(block.stmts, ()):
                self._stmt[s.id] = s
                self._block_of[s.id] = block.kind
                self._enclosing[s.id] = enclosing
                if isinstance(s, Declaration) and s.name not in self.symbols:
                    self.symbols[s.name] = Symbol(s.name, s, block.kind, order)
                    order += 1

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Program) and self.blocks == other.blocks

    def __hash__(self) -> int:
        return hash(self.blocks)

    def __repr__(self) -> str:
        kinds = ", ".join(b.kind for b in self.blocks)
        return f"Program([{kinds}], {len(self._stmt)} statements)"

    def block(self, kind: str) -> Block | None:
        for b in self.blocks:
            if b.kind == kind:
                return b
        return None

    def block_stmts(self, kind: str) -> tuple[Stmt, ...]:
        b = self.block(kind)
        return b.stmts if b is not None else ()

    def statement(self, sid: int) -> Stmt:
        return self._stmt[sid]

    def statements(self) -> list[Stmt]:
        """All statements, nested ones included, in source order."""
        return [self._stmt[i] for i in sorted(self._stmt)]

    def block_of(self, sid: int) -> str:
        return self._block_of[sid]

    def enclosing_control(self, sid: int) -> tuple[int, ...]:
        """Ids of the loops/conditionals enclosing ``sid``, outermost first."""
        return self._enclosing[sid]

    def vars_in(self, *kinds: str) -> list[str]:
        """Declared names of the given block kinds, in declaration order."""
        return [s.name for s in sorted(self.symbols.values(), key=lambda s: s.order) if s.block in kinds]

    @property
    def data_vars(self) -> list[str]:
        return self.vars_in("data")

    @property
    def param_vars(self) -> list[str]:
        return self.vars_in("parameters")


def _walk_with_enclosing(stmts, enclosing):
    for s in stmts:
        yield s, enclosing
        if isinstance(s, (For, If)):
            yield from _walk_with_enclosing(children(s), enclosing + (s.id,))
