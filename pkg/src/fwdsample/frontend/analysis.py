from __future__ import annotations

from .ast import Assign, Declaration, For, If, Program, Stmt, children, expr_vars, stmt_exprs


def own_vars(s: Stmt) -> set[str]:
    """Identifiers in the statement's own expressions, nested statements excluded.

    Declarations contribute their name and initializer only: sizes and bounds
    are shape metadata and do not make the sized variable depend on the size.
    """
    if isinstance(s, Declaration):
        return {s.name} | expr_vars(s.init)
    out: set[str] = set()
    for e in stmt_exprs(s):
        out |= expr_vars(e)
    if isinstance(s, Assign):
        out.add(s.name)  # assignment target
    return out


def free_vars(stmt: Stmt, prog: Program | None = None) -> set[str]:
    """Free identifiers of ``stmt``, excluding ``target`` and indices it binds."""
    out = own_vars(stmt)
    for c in children(stmt):
        out |= free_vars(c, prog)
    if isinstance(stmt, For):
        out.discard(stmt.var)
    out.discard("target")
    return out


def header_vars(s: Stmt) -> set[str]:
    """Identifiers a compound statement evaluates itself (guard or loop bounds)."""
    if isinstance(s, (For, If)):
        return own_vars(s)
    return free_vars(s)
