"""Canonical pretty-printing. ``parse(pretty(p)) == p`` for every valid program."""
from __future__ import annotations

from ..builtins import is_density_call
from .ast import (
    BLOCK_TITLES,
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
    Reject,
    Stmt,
    TargetIncrement,
    Tilde,
    Unary,
    Var,
)

_PREC = {
    "||": 1,
    "&&": 2,
    "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5,
    "*": 6, "/": 6,
    "^": 8,
}
_UNARY = 7
_ATOM = 9


def _prec(e: Expr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Unary):
        return _UNARY
    if isinstance(e, Num) and e.value < 0:
        return _UNARY
    return _ATOM


def _num(n: Num) -> str:
    if n.is_int:
        return str(int(n.value))
    text = repr(float(n.value))
    if "e" not in text and "." not in text and "inf" not in text and "nan" not in text:
        text += ".0"
    return text


def expr(e: Expr) -> str:
    if isinstance(e, Num):
        return _num(e)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Index):
        return f"{_wrap(e.base, _ATOM)}[{expr(e.index)}]"
    if isinstance(e, Unary):
        inner = expr(e.operand)
        if _prec(e.operand) <= _UNARY:
            inner = f"({inner})"
        return f"{e.op}{inner}"
    if isinstance(e, BinOp):
        p = _PREC[e.op]
        if e.op == "^":
            left = _wrap(e.left, p + 1)
            right = _wrap(e.right, _UNARY)
            return f"{left}^{right}"
        left = _wrap(e.left, p)
        right = _wrap(e.right, p + 1)
        return f"{left} {e.op} {right}"
    if isinstance(e, Call):
        args = [expr(a) for a in e.args]
        if (is_density_call(e.name) or e.name.endswith("_cdf")) and args:
            rest = ", ".join(args[1:])
            return f"{e.name}({args[0]} | {rest})" if rest else f"{e.name}({args[0]})"
        return f"{e.name}({', '.join(args)})"
    raise TypeError(f"not an expression: {e!r}")


def _wrap(e: Expr, min_prec: int) -> str:
    text = expr(e)
    return f"({text})" if _prec(e) < min_prec else text


def decl_type(d: Declaration) -> str:
    """Type part of a declaration, e.g. ``real<lower=0>`` or ``vector[J]``."""
    out = d.type_name
    bounds = []
    if d.lower is not None:
        bounds.append(f"lower={_wrap(d.lower, 5)}")
    if d.upper is not None:
        bounds.append(f"upper={_wrap(d.upper, 5)}")
    if bounds:
        out += "<" + ", ".join(bounds) + ">"
    if d.shape and d.shape_style in ("vector", "prefix"):
        out += f"[{expr(d.shape[0])}]"
    return out


def declaration(d: Declaration, name: str | None = None) -> str:
    text = f"{decl_type(d)} {name or d.name}"
    if d.shape and d.shape_style == "suffix":
        text += f"[{expr(d.shape[0])}]"
    if d.init is not None:
        text += f" = {expr(d.init)}"
    return text + ";"


def stmt_head(s: Stmt) -> str:
    """One-line rendering; compound statements show only their header."""
    if isinstance(s, Declaration):
        return declaration(s)
    if isinstance(s, Assign):
        lhs = s.name if s.index is None else f"{s.name}[{expr(s.index)}]"
        return f"{lhs} = {expr(s.value)};"
    if isinstance(s, TargetIncrement):
        return f"target += {expr(s.value)};"
    if isinstance(s, Tilde):
        return f"{expr(s.lhs)} ~ {s.dist}({', '.join(expr(a) for a in s.args)});"
    if isinstance(s, Reject):
        return f'reject("{s.message}");'
    if isinstance(s, For):
        return f"for ({s.var} in {expr(s.lo)}:{expr(s.hi)})"
    if isinstance(s, If):
        return f"if ({expr(s.cond)})"
    raise TypeError(f"not a statement: {s!r}")


def stmt(s: Stmt, indent: int = 0) -> list[str]:
    pad = "  " * indent
    if isinstance(s, For):
        return [f"{pad}{stmt_head(s)} {{", *stmts(s.body, indent + 1), f"{pad}}}"]
    if isinstance(s, If):
        lines = [f"{pad}{stmt_head(s)} {{", *stmts(s.then, indent + 1)]
        if s.orelse is not None:
            lines.append(f"{pad}}} else {{")
            lines.extend(stmts(s.orelse, indent + 1))
        lines.append(f"{pad}}}")
        return lines
    return [pad + stmt_head(s)]


def stmts(ss, indent: int = 0) -> list[str]:
    out: list[str] = []
    for s in ss:
        out.extend(stmt(s, indent))
    return out


def one_line(s: Stmt) -> str:
    """A statement (compound ones included) flattened onto one line."""
    return " ".join(line.strip() for line in stmt(s))


def program(p: Program) -> str:
    lines: list[str] = []
    for b in p.blocks:
        lines.append(f"{BLOCK_TITLES[b.kind]} {{")
        lines.extend(stmts(b.stmts, 1))
        lines.append("}")
    return "\n".join(lines) + "\n"
