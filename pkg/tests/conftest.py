"""Shared helpers: fixture loading and random environments."""
from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from fwdsample.frontend import Program, parse
from fwdsample.runtime import load_env

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
FIXTURE_NAMES = sorted(p.stem for p in FIXTURES.glob("*.stan"))


def source(name: str) -> str:
    return (FIXTURES / f"{name}.stan").read_text()


def load(name: str) -> Program:
    return parse(source(name))


def data_path(name: str) -> Path | None:
    p = FIXTURES / f"{name}.data.csv"
    return p if p.exists() else None


def data_env(name: str, prog: Program | None = None) -> dict[str, np.ndarray]:
    prog = prog or load(name)
    decls = {n: s.decl for n, s in prog.symbols.items()}
    p = data_path(name)
    env = load_env(p, decls) if p else {}
    # size-only data for fixtures without a data file
    for n in prog.data_vars:
        if n not in env and prog.symbols[n].decl.type_name == "int":
            env[n] = np.array([4], dtype=np.int64)
    return env


def random_env(prog: Program, rng: np.random.Generator, batch: int,
               fixed: dict[str, np.ndarray] | None = None) -> dict[str, np.ndarray]:
    """Random values (batch rows) for every data and parameter variable,
    respecting declared bounds; ``fixed`` values are kept as given."""
    from fwdsample.runtime import Interpreter

    env = dict(fixed or {})
    interp = Interpreter(batch, {n: s.decl for n, s in prog.symbols.items()})
    for name in prog.data_vars + prog.param_vars:
        if name in env:
            continue
        d = prog.symbols[name].decl
        shape = (batch,) + interp.decl_shape(d, env)
        if d.type_name == "int":
            # integers are sizes or counts: one value shared by all rows
            env[name] = np.full((1,) + shape[1:], rng.integers(1, 5), dtype=np.int64)
            continue
        lo = float(interp.eval(d.lower, env)[0]) if d.lower is not None else None
        hi = float(interp.eval(d.upper, env)[0]) if d.upper is not None else None
        if lo is not None and hi is not None:
            env[name] = rng.uniform(lo, hi, shape)
        elif lo is not None:
            env[name] = lo + rng.exponential(1.0, shape) + 0.05
        elif hi is not None:
            env[name] = hi - rng.exponential(1.0, shape) - 0.05
        else:
            env[name] = rng.normal(0.0, 1.5, shape)
    return env


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


# ------------------------------------------------------------ acceptance report

ACCEPTANCE: dict[int, tuple[str, str]] = {}


@contextmanager
def criterion(number: int, title: str):
    """Record PASS/FAIL for one acceptance criterion; ``notes`` collects the measured values."""
    notes: list[str] = []
    try:
        yield notes
    except BaseException as e:
        detail = "; ".join(notes + [str(e).splitlines()[0] if str(e) else type(e).__name__])
        ACCEPTANCE[number] = ("FAIL", f"{title}: {detail}")
        raise
    ACCEPTANCE[number] = ("PASS", f"{title}: {'; '.join(notes)}" if notes else title)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, text = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {status}  {text}")
