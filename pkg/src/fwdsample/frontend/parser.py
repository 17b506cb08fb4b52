"""Recursive-descent parser for the mini probabilistic language."""
from __future__ import annotations

from ..builtins import DISTRIBUTIONS, call_arity, is_density_call, split_distribution_call
from .ast import (
    BLOCK_KINDS,
    Assign,
    BinOp,
    Block,
    Call,
    Declaration,
    Expr,
    For,
    If,
    Index,
    Loc,
    Num,
    Program,
    Reject,
    Stmt,
    TargetIncrement,
    Tilde,
    Unary,
    Var,
    iter_expr,
    stmt_exprs,
)
from .errors import FrontendError
from .lexer import Token, tokenize

TYPE_WORDS = ("real", "int", "vector")
UNSUPPORTED_TYPES = (
    "matrix", "simplex", "array", "row_vector", "ordered", "positive_ordered",
    "cov_matrix", "corr_matrix", "cholesky_factor_cov", "cholesky_factor_corr",
    "unit_vector", "complex", "tuple",
)
UNSUPPORTED_STMTS = (
    "while", "print", "return", "break", "continue", "increment_log_prob",
    "fatal_error", "profile",
)
RESERVED = {"for", "in", "if", "else", "reject", "target", "while", "lower", "upper", *TYPE_WORDS}

# binding power of binary operators, low to high
_BINARY_LEVELS = (
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/"),
)


class _Parser:
    def __init__(self, source: str, first_id: int = 1):
        self.toks = tokenize(source)
        self.pos = 0
        self.next_id = first_id

    # -- token helpers

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def advance(self) -> Token:
        t = self.tok
        self.pos += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.error(f"expected {text!r} but found {self.describe(self.tok)}")
        return self.advance()

    def expect_ident(self) -> Token:
        if self.tok.kind != "ident":
            self.error(f"expected identifier but found {self.describe(self.tok)}")
        return self.advance()

    def describe(self, t: Token) -> str:
        return "end of input" if t.kind == "eof" else repr(t.text)

    def error(self, msg: str, loc: Loc | None = None, kind: str = "syntax"):
        raise FrontendError(kind, msg, loc or self.tok.loc)

    def fresh_id(self) -> int:
        i = self.next_id
        self.next_id += 1
        return i

    # -- program structure

    def program(self) -> tuple[Block, ...]:
        blocks: list[Block] = []
        seen: set[str] = set()
        while self.tok.kind != "eof":
            loc = self.tok.loc
            kind = self.block_kind()
            if kind in seen:
                self.error(f"duplicate block '{kind.replace('_', ' ')}'", loc, "duplicate-block")
            if blocks and BLOCK_KINDS.index(kind) < BLOCK_KINDS.index(blocks[-1].kind):
                self.error(f"block '{kind.replace('_', ' ')}' is out of order", loc)
            seen.add(kind)
            self.expect("{")
            stmts = self.stmt_list()
            self.expect("}")
            blocks.append(Block(kind, tuple(stmts), loc))
        if not blocks:
            self.error("empty program: expected at least one block")
        return tuple(blocks)

    def block_kind(self) -> str:
        t = self.expect_ident()
        word = t.text
        if word in ("transformed", "generated"):
            second = self.expect_ident().text
            word = f"{word}_{second}"
        if word == "functions":
            self.error("user-defined functions are an unsupported construct", t.loc, "unsupported")
        if word not in BLOCK_KINDS:
            self.error(f"unknown block kind {word.replace('_', ' ')!r}", t.loc)
        return word

    def stmt_list(self) -> list[Stmt]:
        out: list[Stmt] = []
        while not self.at("}") and self.tok.kind != "eof":
            out.extend(self.statement())
        return out

    # -- statements

    def statement(self) -> list[Stmt]:
        t = self.tok
        if t.kind == "op" and t.text == "{":
            self.error("nested anonymous blocks are an unsupported construct", kind="unsupported")
        if t.kind != "ident":
            self.error(f"expected a statement but found {self.describe(t)}")
        word = t.text
        if word in TYPE_WORDS:
            return self.declaration()
        if word in UNSUPPORTED_TYPES:
            self.error(f"type '{word}' is an unsupported construct", kind="unsupported")
        if word in UNSUPPORTED_STMTS:
            self.error(f"'{word}' is an unsupported construct", kind="unsupported")
        if word == "target":
            return [self.target_increment()]
        if word == "for":
            return [self.for_loop()]
        if word == "if":
            return [self.if_else()]
        if word == "reject":
            return [self.reject()]
        return [self.assign_or_tilde()]

    def declaration(self) -> list[Stmt]:
        type_tok = self.advance()
        lower = upper = None
        if self.at("<"):
            lower, upper = self.bounds()
        prefix: tuple[Expr, ...] = ()
        style = "suffix"
        if self.at("["):
            self.advance()
            prefix = (self.expr(),)
            self.expect("]")
            style = "vector" if type_tok.text == "vector" else "prefix"
        elif type_tok.text == "vector":
            self.error("vector declarations need a size, e.g. vector[N]")
        decls: list[Stmt] = []
        while True:
            name_tok = self.expect_ident()
            self.check_declarable(name_tok)
            shape = prefix
            if self.at("["):
                if prefix:
                    self.error("multi-dimensional containers are an unsupported construct", kind="unsupported")
                self.advance()
                shape = (self.expr(),)
                self.expect("]")
                if self.at("["):
                    self.error("multi-dimensional containers are an unsupported construct", kind="unsupported")
            init = None
            if self.at("="):
                self.advance()
                init = self.expr()
            decls.append(
                Declaration(self.fresh_id(), type_tok.text, name_tok.text, shape, lower, upper, init,
                            style if shape else "suffix", type_tok.loc)
            )
            if self.at(","):
                self.advance()
                continue
            break
        self.expect(";")
        return decls

    def check_declarable(self, t: Token) -> None:
        if t.text in RESERVED:
            self.error(f"'{t.text}' is reserved and cannot be declared", t.loc)
        if t.text.endswith("__"):
            self.error("identifiers ending in '__' are reserved", t.loc)

    def bounds(self) -> tuple[Expr | None, Expr | None]:
        self.expect("<")
        lower = upper = None
        while True:
            which = self.expect_ident()
            if which.text not in ("lower", "upper"):
                if which.text in ("offset", "multiplier"):
                    self.error("offset/multiplier is an unsupported construct", which.loc, "unsupported")
                self.error("expected 'lower' or 'upper'", which.loc)
            self.expect("=")
            # bounds stop before comparisons so the closing '>' is not consumed
            e = self.binary(4)
            if which.text == "lower":
                lower = e
            else:
                upper = e
            if self.at(","):
                self.advance()
                continue
            break
        self.expect(">")
        return lower, upper

    def target_increment(self) -> Stmt:
        t = self.advance()
        self.expect("+=")
        e = self.expr()
        self.expect(";")
        return TargetIncrement(self.fresh_id(), e, t.loc)

    def for_loop(self) -> Stmt:
        t = self.advance()
        sid = self.fresh_id()
        self.expect("(")
        var = self.expect_ident()
        self.check_declarable(var)
        self.expect("in")
        lo = self.expr()
        self.expect(":")
        hi = self.expr()
        self.expect(")")
        body = self.braced_body()
        return For(sid, var.text, lo, hi, tuple(body), t.loc)

    def braced_body(self) -> list[Stmt]:
        if not self.at("{"):
            # single statement body, as Stan allows
            return self.statement()
        self.advance()
        body = self.stmt_list()
        self.expect("}")
        return body

    def if_else(self) -> Stmt:
        t = self.advance()
        sid = self.fresh_id()
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.braced_body()
        orelse = None
        if self.at("else"):
            self.advance()
            if self.at("if"):
                orelse = [self.if_else()]
            else:
                orelse = self.braced_body()
        return If(sid, cond, tuple(then), tuple(orelse) if orelse is not None else None, t.loc)

    def reject(self) -> Stmt:
        t = self.advance()
        self.expect("(")
        if self.tok.kind != "string":
            self.error("reject expects a string literal")
        msg = self.advance().text[1:-1]
        self.expect(")")
        self.expect(";")
        return Reject(self.fresh_id(), msg, t.loc)

    def assign_or_tilde(self) -> Stmt:
        name = self.expect_ident()
        lhs: Expr = Var(name.text, name.loc)
        if self.at("["):
            self.advance()
            idx = self.expr()
            self.expect("]")
            if self.at("["):
                self.error("multi-dimensional indexing is an unsupported construct", kind="unsupported")
            lhs = Index(lhs, idx, name.loc)
        if self.at("~"):
            self.advance()
            dist = self.expect_ident()
            self.expect("(")
            args = self.args(")")
            self.expect(")")
            if self.at("T"):
                self.error("truncation is an unsupported construct", kind="unsupported")
            self.expect(";")
            return Tilde(self.fresh_id(), lhs, dist.text, tuple(args), name.loc)
        if self.at("="):
            self.advance()
            value = self.expr()
            self.expect(";")
            index = lhs.index if isinstance(lhs, Index) else None
            return Assign(self.fresh_id(), name.text, index, value, name.loc)
        if self.at("+=") or self.at("-=") or self.at("*=") or self.at("/="):
            self.error("compound assignment is an unsupported construct", kind="unsupported")
        if self.at("("):
            self.error("function-call statements are an unsupported construct", kind="unsupported")
        self.error(f"expected '=' or '~' after {name.text!r}")

    # -- expressions

    def expr(self) -> Expr:
        return self.binary(0)

    def binary(self, level: int) -> Expr:
        if level == len(_BINARY_LEVELS):
            return self.unary()
        left = self.binary(level + 1)
        ops = _BINARY_LEVELS[level]
        while self.tok.kind == "op" and self.tok.text in ops:
            op = self.advance()
            right = self.binary(level + 1)
            left = BinOp(op.text, left, right, op.loc)
        return left

    def unary(self) -> Expr:
        if self.at("-") or self.at("!"):
            op = self.advance()
            return Unary(op.text, self.unary(), op.loc)
        if self.at("+"):
            self.advance()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.postfix()
        if self.at("^"):
            op = self.advance()
            # right associative; the exponent may carry a sign
            exponent = self.unary()
            return BinOp("^", base, exponent, op.loc)
        return base

    def postfix(self) -> Expr:
        e = self.primary()
        while self.at("["):
            t = self.advance()
            idx = self.expr()
            if self.at(","):
                self.error("multi-dimensional indexing is an unsupported construct", kind="unsupported")
            self.expect("]")
            e = Index(e, idx, t.loc)
        return e

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "int":
            self.advance()
            return Num(int(t.text), True, t.loc)
        if t.kind == "real":
            self.advance()
            return Num(float(t.text), False, t.loc)
        if t.kind == "ident":
            self.advance()
            if self.at("("):
                self.advance()
                args = self.args(")", allow_bar=is_density_call(t.text) or t.text.endswith("_cdf"))
                self.expect(")")
                return Call(t.text, tuple(args), t.loc)
            return Var(t.text, t.loc)
        if t.kind == "op" and t.text == "(":
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "string":
            self.error("string literals are only allowed in reject(...)")
        self.error(f"expected an expression but found {self.describe(t)}")

    def args(self, closer: str, allow_bar: bool = False) -> list[Expr]:
        out: list[Expr] = []
        if self.at(closer):
            return out
        out.append(self.expr())
        if allow_bar and self.at("|"):
            self.advance()
            if not self.at(closer):
                out.append(self.expr())
        elif self.at("|"):
            self.error("'|' is only allowed after the variate of a density or cdf call")
        while self.at(","):
            self.advance()
            out.append(self.expr())
        return out


def parse(source: str) -> Program:
    """Parse and validate ``source``; raise :class:`FrontendError` on failure."""
    p = _Parser(source)
    blocks = p.program()
    prog = Program(blocks, source)
    validate(prog)
    return prog


def parse_statement(text: str, sid: int = 1) -> Stmt:
    """Parse a single statement without scope checking.

    Used when reading factor-graph documents produced elsewhere, where only the
    statement text is available. Nested statements get ids after ``sid``.
    """
    p = _Parser(text)
    p.next_id = sid
    stmts = p.statement()
    if p.tok.kind != "eof" or len(stmts) != 1:
        p.error("expected exactly one statement")
    return stmts[0]


# ------------------------------------------------------------------ validation

_DENSITY_STMTS = (TargetIncrement, Tilde, Reject)
_DECL_ONLY_BLOCKS = ("data", "parameters")


def validate(prog: Program) -> None:
    declared: set[str] = set()
    for block in prog.blocks:
        _validate_stmts(block.stmts, block.kind, declared, set())
    if any(isinstance(s, _DENSITY_STMTS) for s in prog.statements()) and prog.block("model") is None:
        raise FrontendError("placement", "density statements require a model block")


def _validate_stmts(stmts, block: str, declared: set[str], loop_vars: set[str]) -> None:
    for s in stmts:
        if block not in _RNG_BLOCKS:
            _check_no_rng_calls(s)
        if isinstance(s, _DENSITY_STMTS) and block != "model":
            raise FrontendError("placement", f"{s.kind.replace('_', ' ')} statement outside the model block", s.loc)
        if block in _DECL_ONLY_BLOCKS and not isinstance(s, Declaration):
            raise FrontendError("placement", f"only declarations are allowed in the {block} block", s.loc)
        if isinstance(s, Declaration):
            for e in s.shape + tuple(x for x in (s.lower, s.upper) if x is not None):
                _check_expr(e, declared, loop_vars)
            if s.init is not None:
                if block in _DECL_ONLY_BLOCKS:
                    raise FrontendError("placement", f"declarations in the {block} block cannot have initial values", s.loc)
                _check_expr(s.init, declared, loop_vars)
            if s.name in declared or s.name in loop_vars:
                raise FrontendError("duplicate-declaration", f"'{s.name}' is declared more than once", s.loc)
            declared.add(s.name)
        elif isinstance(s, Assign):
            _check_name(s.name, s.loc, declared, loop_vars)
            if s.name in loop_vars:
                raise FrontendError("syntax", f"cannot assign to loop variable '{s.name}'", s.loc)
            if s.index is not None:
                _check_expr(s.index, declared, loop_vars)
            _check_expr(s.value, declared, loop_vars)
        elif isinstance(s, TargetIncrement):
            _check_expr(s.value, declared, loop_vars)
        elif isinstance(s, Tilde):
            if s.dist not in DISTRIBUTIONS:
                raise FrontendError("unsupported", f"distribution '{s.dist}' is not a builtin; an unsupported construct", s.loc)
            want = len(DISTRIBUTIONS[s.dist].params)
            if len(s.args) != want:
                raise FrontendError("arity", f"'{s.dist}' takes {want} argument(s), got {len(s.args)}", s.loc)
            for e in (s.lhs, *s.args):
                _check_expr(e, declared, loop_vars)
        elif isinstance(s, For):
            _check_expr(s.lo, declared, loop_vars)
            _check_expr(s.hi, declared, loop_vars)
            if s.var in declared or s.var in loop_vars:
                raise FrontendError("duplicate-declaration", f"loop variable '{s.var}' shadows a declaration", s.loc)
            _validate_stmts(s.body, block, declared, loop_vars | {s.var})
        elif isinstance(s, If):
            _check_expr(s.cond, declared, loop_vars)
            _validate_stmts(s.then, block, declared, loop_vars)
            if s.orelse is not None:
                _validate_stmts(s.orelse, block, declared, loop_vars)


def _check_name(name: str, loc: Loc, declared: set[str], loop_vars: set[str]) -> None:
    if name == "target":
        raise FrontendError("syntax", "'target' can only be used as 'target += ...'", loc)
    if name not in declared and name not in loop_vars:
        raise FrontendError("undeclared", f"identifier '{name}' is not declared", loc)


def _check_expr(e: Expr, declared: set[str], loop_vars: set[str]) -> None:
    if isinstance(e, Var):
        _check_name(e.name, e.loc, declared, loop_vars)
    elif isinstance(e, Index):
        _check_expr(e.base, declared, loop_vars)
        _check_expr(e.index, declared, loop_vars)
    elif isinstance(e, Unary):
        _check_expr(e.operand, declared, loop_vars)
    elif isinstance(e, BinOp):
        _check_expr(e.left, declared, loop_vars)
        _check_expr(e.right, declared, loop_vars)
    elif isinstance(e, Call):
        want = call_arity(e.name)
        if want is None:
            if e.name.endswith(("_lpdf", "_lpmf", "_lp", "_rng", "_cdf")):
                raise FrontendError("unsupported", f"'{e.name}' is not a builtin; user-defined functions are unsupported", e.loc)
            raise FrontendError("undeclared", f"unknown function '{e.name}'", e.loc)
        if len(e.args) != want:
            raise FrontendError("arity", f"'{e.name}' takes {want} argument(s), got {len(e.args)}", e.loc)
        for a in e.args:
            _check_expr(a, declared, loop_vars)


_RNG_BLOCKS = ("transformed_data", "generated_quantities")


def _check_no_rng_calls(s: Stmt) -> None:
    for e in stmt_exprs(s):
        for n in iter_expr(e):
            if isinstance(n, Call) and n.name.endswith("_rng"):
                raise FrontendError(
                    "placement", "_rng functions are only allowed in transformed data and generated quantities", n.loc
                )


__all__ = ["parse", "parse_statement", "validate", "FrontendError", "split_distribution_call"]
