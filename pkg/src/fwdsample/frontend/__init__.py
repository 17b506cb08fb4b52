"""Parsing, validation and printing for the mini probabilistic language."""
from .ast import Program, Stmt, Expr, DENSITY_KINDS
from .errors import FrontendError
from .parser import parse, parse_statement
from .printer import program as pretty
from .analysis import free_vars

__all__ = ["Program", "Stmt", "Expr", "DENSITY_KINDS", "FrontendError", "parse", "parse_statement", "pretty", "free_vars"]
