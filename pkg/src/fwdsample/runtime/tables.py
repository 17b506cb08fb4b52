"""Draw tables and CSV environments.

A column holds one variable for every row: shape ``(n,)`` for scalars and
``(n, k)`` for vectors. On disk a vector ``theta`` of length 3 becomes the
columns ``theta[1],theta[2],theta[3]``. Reals are written with 17
significant digits so a round trip is exact.
"""
from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..frontend.ast import Declaration

_COLUMN = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)(?:\[(\d+)\])?$")


def format_value(x) -> str:
    if isinstance(x, (np.integer, int)):
        return str(int(x))
    text = "%.17g" % float(x)
    # keep reals distinguishable from integers when read back untyped
    return text if any(c in text for c in ".ein") else text + ".0"


@dataclass
class DrawTable:
    columns: dict[str, np.ndarray] = field(default_factory=dict)
    chains: np.ndarray | None = None  # chain id per row, for MCMC output

    @property
    def n(self) -> int:
        return next(iter(self.columns.values())).shape[0] if self.columns else 0

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def flat(self) -> list[tuple[str, np.ndarray]]:
        """(label, 1-D array) per scalar column, vectors expanded element-wise."""
        out = []
        for name, col in self.columns.items():
            if col.ndim == 1:
                out.append((name, col))
            else:
                flat = col.reshape(col.shape[0], -1)
                out += [(f"{name}[{i + 1}]", flat[:, i]) for i in range(flat.shape[1])]
        return out

    def head(self, n: int) -> "DrawTable":
        return DrawTable({k: v[:n] for k, v in self.columns.items()},
                         None if self.chains is None else self.chains[:n])

    def to_csv(self) -> str:
        cols = self.flat()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([label for label, _ in cols])
        for i in range(self.n):
            w.writerow([format_value(c[i]) for _, c in cols])
        return buf.getvalue()

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv())


def _parse_number(tok: str):
    tok = tok.strip()
    try:
        return int(tok)
    except ValueError:
        return float(tok)


def read_csv(text: str, decls: dict[str, Declaration] | None = None) -> DrawTable:
    """Parse a CSV table; ``decls`` fixes integer vs real columns when given."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    if not rows:
        return DrawTable()
    header, body = rows[0], rows[1:]
    groups: dict[str, dict[int, int]] = {}  # name -> {element index: column}
    for j, label in enumerate(header):
        m = _COLUMN.match(label.strip())
        if m is None:
            raise ValueError(f"bad column name {label!r}")
        groups.setdefault(m.group(1), {})[int(m.group(2)) if m.group(2) else 0] = j
    for r in body:
        if len(r) != len(header):
            raise ValueError("ragged CSV row")
    values = [[_parse_number(t) for t in r] for r in body]
    out: dict[str, np.ndarray] = {}
    for name, cols in groups.items():
        decl = decls.get(name) if decls else None
        if decl is not None:
            is_int = decl.type_name == "int"
        else:
            is_int = all(isinstance(v[j], int) for v in values for j in cols.values())
        dtype = np.int64 if is_int else float
        if 0 in cols:
            if len(cols) > 1:
                raise ValueError(f"{name} is both a scalar and a vector")
            out[name] = np.array([v[cols[0]] for v in values], dtype=dtype)
        else:
            k = max(cols)
            if sorted(cols) != list(range(1, k + 1)):
                raise ValueError(f"columns of {name} are not 1..{k}")
            out[name] = np.array([[v[cols[i]] for i in range(1, k + 1)] for v in values], dtype=dtype)
            if not values:
                out[name] = out[name].reshape(0, k)
    return DrawTable(out)


def load_env(path: str | Path | None, decls: dict[str, Declaration] | None = None) -> dict[str, np.ndarray]:
    """Environment from a CSV file: one row shared by all draws, or one row per draw."""
    if path is None:
        return {}
    table = read_csv(Path(path).read_text(), decls)
    if table.n == 0:
        raise ValueError(f"{path}: no data rows")
    return dict(table.columns)


__all__ = ["DrawTable", "read_csv", "load_env", "format_value"]
