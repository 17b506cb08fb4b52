from __future__ import annotations

import re
from dataclasses import dataclass

from .ast import Loc
from .errors import FrontendError


@dataclass(frozen=True)
class Token:
    kind: str  # ident | int | real | string | op | eof
    text: str
    loc: Loc


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<comment>//[^\n]*|\#[^\n]*|/\*.*?\*/)
  | (?P<real>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<string>"[^"\n]*")
  | (?P<op>\+=|<=|>=|==|!=|&&|\|\||[-+*/^~=<>(){}\[\];,:|!])
    """,
    re.VERBOSE | re.DOTALL,
)


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    line, line_start = 1, 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise FrontendError("lexical", f"unexpected character {source[pos]!r}", Loc(line, pos - line_start + 1))
        kind = m.lastgroup
        text = m.group()
        loc = Loc(line, pos - line_start + 1)
        if kind not in ("ws", "comment"):
            tokens.append(Token(kind, text, loc))
        newlines = text.count("\n")
        if newlines:
            line += newlines
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    if source.count("/*") > source.count("*/"):
        raise FrontendError("lexical", "unterminated block comment", Loc(line, pos - line_start + 1))
    tokens.append(Token("eof", "", Loc(line, pos - line_start + 1)))
    return tokens
