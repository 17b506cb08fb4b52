from __future__ import annotations

from .ast import Loc


class FrontendError(Exception):
    """A diagnostic from lexing, parsing or validation.

    ``kind`` is one of: lexical, syntax, undeclared, placement,
    duplicate-block, duplicate-declaration, unsupported, arity.
    """

    def __init__(self, kind: str, message: str, loc: Loc | None = None):
        self.kind = kind
        self.message = message
        self.loc = loc
        where = f"{loc.line}:{loc.col}: " if loc is not None else ""
        super().__init__(f"{where}{kind} error: {message}")
