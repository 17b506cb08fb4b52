"""Batched evaluation of mini-language statements.

Every value carries a leading batch axis of length ``B`` (one entry per draw)
or 1 (shared by all draws). Scalars have shape ``(b,)`` and vectors
``(b, n)``; before combining two values their trailing axes are padded so
that numpy broadcasting lines the batch axes up. Conditionals whose guard
differs between draws run both branches under a mask.
"""
from __future__ import annotations

import zlib
from typing import Callable

import numpy as np

from ..builtins import MATH_FUNCTIONS, split_distribution_call
from ..frontend.ast import (
    Assign,
    BinOp,
    Call,
    Declaration,
    Expr,
    For,
    If,
    Index,
    Num,
    Reject,
    Stmt,
    TargetIncrement,
    Tilde,
    Unary,
    Var,
    iter_expr,
)
from . import distributions as dists

MAX_REDRAWS = 1000


class RuntimeFailure(Exception):
    """Error raised while executing a program (bad value, unbound name, ...)."""


def stream(seed: int, block: int, key: str) -> np.random.Generator:
    """Independent generator for one (seed, row block, variable) triple."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(block), zlib.crc32(key.encode())]))


class RngPool:
    def __init__(self, seed: int, block: int = 0):
        self.seed, self.block = seed, block
        self._gens: dict[str, np.random.Generator] = {}

    def get(self, key: str) -> np.random.Generator:
        if key not in self._gens:
            self._gens[key] = stream(self.seed, self.block, key)
        return self._gens[key]


def align(*xs: np.ndarray) -> list[np.ndarray]:
    """Pad trailing axes so all arrays have the same rank."""
    nd = max(x.ndim for x in xs)
    return [x.reshape(x.shape + (1,) * (nd - x.ndim)) for x in xs]


def event_sum(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], -1).sum(axis=1) if x.ndim > 1 else x


def is_int(x: np.ndarray) -> bool:
    return np.issubdtype(x.dtype, np.integer)


def uniform_int(x: np.ndarray, what: str) -> int:
    if x.ndim != 1 or not is_int(x):
        raise RuntimeFailure(f"{what} must be an integer scalar")
    if x.shape[0] != 1 and not np.all(x == x[0]):
        raise RuntimeFailure(f"{what} differs between draws")
    return int(x[0])


def has_rng(e: Expr | None) -> bool:
    return e is not None and any(isinstance(n, Call) and n.name.endswith("_rng") for n in iter_expr(e))


Trace = Callable[[Stmt, object], None]


class Interpreter:
    def __init__(self, batch: int, decls: dict[str, Declaration] | None = None,
                 rngs: RngPool | None = None, trace: Trace | None = None):
        self.batch = batch
        self.decls = decls or {}
        self.rngs = rngs
        self.trace = trace
        self.shapes: dict[str, tuple[int, ...]] = {}
        self._hint: tuple[int, ...] = ()
        self._rng_key = ""
        self._desugared: dict[int, TargetIncrement] = {}

    # ------------------------------------------------------------ statements

    def run(self, stmts, env: dict[str, np.ndarray], target: np.ndarray | None = None) -> np.ndarray:
        """Execute ``stmts`` in ``env`` (mutated) and return the accumulated log density."""
        self.target = np.zeros(self.batch) if target is None else target
        for s in stmts:
            self.exec(s, env, None)
        return self.target

    def exec(self, s: Stmt, env, mask) -> None:
        if isinstance(s, Declaration):
            shape = self.decl_shape(s, env)
            self.shapes[s.name] = shape
            if s.init is not None:
                self.assign(s.name, None, s.init, env, mask, s)
            else:
                if s.type_name == "int":
                    env[s.name] = np.zeros((1,) + shape, dtype=np.int64)
                else:
                    env[s.name] = np.full((1,) + shape, np.nan)
                self._emit(s, None)
        elif isinstance(s, Assign):
            self.assign(s.name, s.index, s.value, env, mask, s)
        elif isinstance(s, (TargetIncrement, Tilde)):
            ti = s if isinstance(s, TargetIncrement) else self._desugar(s)
            val = event_sum(self.eval(ti.value, env).astype(float))
            if mask is not None:
                val = np.where(mask, val, 0.0)
            self.target = self.target + val
            self._emit(s, val)
        elif isinstance(s, Reject):
            self.target = np.where(mask, -np.inf, self.target) if mask is not None else np.full(self.batch, -np.inf)
            self._emit(s, mask)
        elif isinstance(s, For):
            lo = uniform_int(self.eval(s.lo, env), "loop bound")
            hi = uniform_int(self.eval(s.hi, env), "loop bound")
            self._emit(s, (lo, hi))
            saved = env.get(s.var)
            for i in range(lo, hi + 1):
                env[s.var] = np.array([i], dtype=np.int64)
                for c in s.body:
                    self.exec(c, env, mask)
            if saved is None:
                env.pop(s.var, None)
            else:
                env[s.var] = saved
        elif isinstance(s, If):
            cond = self.eval(s.cond, env)
            self._emit(s, cond)
            if cond.ndim != 1:
                raise RuntimeFailure("condition must be a scalar")
            truth = cond != 0
            if cond.shape[0] == 1:
                branch = s.then if truth[0] else (s.orelse or ())
                for c in branch:
                    self.exec(c, env, mask)
                return
            for branch, m in ((s.then, truth), (s.orelse or (), ~truth)):
                sub = m if mask is None else (mask & m)
                if branch and np.any(sub):
                    for c in branch:
                        self.exec(c, env, sub)
        else:
            raise RuntimeFailure(f"cannot execute {type(s).__name__}")

    def _emit(self, s, value) -> None:
        if self.trace is not None:
            self.trace(s, value)

    def _desugar(self, s: Tilde) -> TargetIncrement:
        if s.id not in self._desugared:
            self._desugared[s.id] = s.desugar()
        return self._desugared[s.id]

    def decl_shape(self, d: Declaration, env) -> tuple[int, ...]:
        return tuple(uniform_int(self.eval(e, env), f"size of {d.name}") for e in d.shape)

    def shape_of(self, name: str, env) -> tuple[int, ...]:
        if name in self.shapes:
            return self.shapes[name]
        if name in env:
            return env[name].shape[1:]
        d = self.decls.get(name)
        return self.decl_shape(d, env) if d is not None else ()

    def assign(self, name, index, value, env, mask, s) -> None:
        hint = self.shape_of(name, env) if index is None else ()
        random = has_rng(value)
        val = self._eval_rhs(name, value, env, hint)
        decl = self.decls.get(name)
        if random and decl is not None and (decl.lower is not None or decl.upper is not None):
            val = self._redraw_out_of_bounds(name, value, env, hint, val, decl)
        if index is None:
            if hint and val.shape[1:] != hint:
                try:
                    val = np.broadcast_to(align(val, np.zeros((1,) + hint))[0], (val.shape[0],) + hint)
                except ValueError:
                    raise RuntimeFailure(f"value of shape {val.shape[1:]} does not fit {name}{list(hint)}") from None
            if mask is not None:
                old = env.get(name)
                if old is None:
                    old = np.full((1,) + val.shape[1:], np.nan)
                m, v, o = align(mask, val, old)
                val = np.where(m, v, o)
            env[name] = val
        else:
            self._assign_element(name, index, val, env, mask)
        self._emit(s, env[name])

    def _eval_rhs(self, name, value, env, hint):
        self._hint, self._rng_key = hint, name
        try:
            return self.eval(value, env)
        finally:
            self._hint, self._rng_key = (), ""

    def _redraw_out_of_bounds(self, name, value, env, hint, val, decl):
        lo = self.eval(decl.lower, env) if decl.lower is not None else None
        hi = self.eval(decl.upper, env) if decl.upper is not None else None

        def bad_rows(v):
            bad = np.zeros(v.shape, dtype=bool)
            if lo is not None:
                a, b = align(v, lo)
                bad = bad | (a < b)
            if hi is not None:
                a, b = align(v, hi)
                bad = bad | (a > b)
            return event_sum(bad.astype(int)) > 0

        bad = bad_rows(val)
        tries = 0
        while np.any(bad):
            tries += 1
            if tries > MAX_REDRAWS:
                raise dists.DomainError(f"could not draw {name} inside its declared bounds")
            fresh = self._eval_rhs(name, value, env, hint)
            val = np.array(np.broadcast_to(val, fresh.shape)) if val.shape != fresh.shape else val.copy()
            val[bad] = fresh[bad]
            bad = bad_rows(val)
        return val

    def _assign_element(self, name, index, val, env, mask) -> None:
        if name not in env:
            raise RuntimeFailure(f"{name} is not defined")
        arr = env[name]
        if arr.ndim < 2:
            raise RuntimeFailure(f"{name} is not indexable")
        idx = self.eval(index, env)
        if not is_int(idx):
            raise RuntimeFailure(f"index of {name} must be an integer")
        n = arr.shape[1]
        if np.any(idx < 1) or np.any(idx > n):
            raise RuntimeFailure(f"index {int(idx[(idx < 1) | (idx > n)][0])} out of range for {name}[{n}]")
        b = max(arr.shape[0], val.shape[0], idx.shape[0], 1 if mask is None else mask.shape[0])
        dtype = np.result_type(arr.dtype, val.dtype)
        out = np.array(np.broadcast_to(arr, (b,) + arr.shape[1:]), dtype=dtype)
        rows = np.arange(b)
        cols = np.broadcast_to(idx - 1, (b,))
        new = np.broadcast_to(val, (b,) + val.shape[1:]) if val.shape[0] != b else val
        if new.ndim != out.ndim - 1:
            raise RuntimeFailure(f"element of {name} must be a scalar")
        if mask is not None:
            new = np.where(np.broadcast_to(mask, (b,)), new, out[rows, cols])
        out[rows, cols] = new
        env[name] = out

    # ----------------------------------------------------------- expressions

    def eval(self, e: Expr, env) -> np.ndarray:
        if isinstance(e, Num):
            return np.array([e.value], dtype=np.int64 if e.is_int else float)
        if isinstance(e, Var):
            try:
                return env[e.name]
            except KeyError:
                raise RuntimeFailure(f"{e.name} is not bound") from None
        if isinstance(e, Index):
            base = self.eval(e.base, env)
            idx = self.eval(e.index, env)
            if base.ndim < 2:
                raise RuntimeFailure("cannot index a scalar")
            if not is_int(idx):
                raise RuntimeFailure("index must be an integer")
            n = base.shape[1]
            if np.any(idx < 1) or np.any(idx > n):
                raise RuntimeFailure(f"index out of range 1..{n}")
            if idx.shape[0] == 1:
                return base[:, int(idx[0]) - 1]
            b = max(base.shape[0], idx.shape[0])
            return np.broadcast_to(base, (b,) + base.shape[1:])[np.arange(b), idx - 1]
        if isinstance(e, Unary):
            x = self.eval(e.operand, env)
            if e.op == "-":
                return -x
            if e.op == "!":
                return (x == 0).astype(np.int64)
            return x
        if isinstance(e, BinOp):
            return self._binop(e.op, self.eval(e.left, env), self.eval(e.right, env))
        if isinstance(e, Call):
            return self._call(e, env)
        raise RuntimeFailure(f"cannot evaluate {e!r}")

    def _binop(self, op, a, b):
        a, b = align(a, b)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                if is_int(a) and is_int(b):
                    if np.any(b == 0):
                        raise RuntimeFailure("integer division by zero")
                    return np.fix(a / b).astype(np.int64)
                return a / b
            if op == "^":
                return np.power(a.astype(float), b)
            if op in ("<", "<=", ">", ">=", "==", "!="):
                fn = {"<": np.less, "<=": np.less_equal, ">": np.greater, ">=": np.greater_equal,
                      "==": np.equal, "!=": np.not_equal}[op]
                return fn(a, b).astype(np.int64)
            if op == "&&":
                return ((a != 0) & (b != 0)).astype(np.int64)
            if op == "||":
                return ((a != 0) | (b != 0)).astype(np.int64)
        raise RuntimeFailure(f"unknown operator {op}")

    def _call(self, e: Call, env):
        if e.name in MATH_FUNCTIONS:
            args = [self.eval(a, env) for a in e.args]
            with np.errstate(divide="ignore", invalid="ignore"):
                if e.name == "pi":
                    return np.array([np.pi])
                if e.name == "pow":
                    a, b = align(*args)
                    return np.power(a.astype(float), b)
                x = args[0]
                return {"log": np.log, "exp": np.exp, "sqrt": np.sqrt, "abs": np.abs,
                        "square": np.square}[e.name](x.astype(float) if e.name != "abs" else x)
        split = split_distribution_call(e.name)
        if split is None:
            raise RuntimeFailure(f"unknown function {e.name}")
        dist, suffix = split
        args = [self.eval(a, env) for a in e.args]
        if suffix == "_rng":
            return self._rng(dist.name, args)
        x, *params = align(*args)
        if suffix == "_cdf":
            out = dists.cdf(dist.name, x, params)
            return out.reshape(out.shape[0], -1).prod(axis=1) if out.ndim > 1 else out
        return event_sum(dists.lpdf(dist.name, x, params))

    def _rng(self, dist: str, args):
        if self.rngs is None:
            raise RuntimeFailure("random number generation is not available here")
        trailing = np.broadcast_shapes(self._hint, *(a.shape[1:] for a in args))
        size = (self.batch,) + trailing
        params = [np.broadcast_to(align(a, np.zeros(size))[0], size) for a in args]
        return dists.rng(dist, self.rngs.get(self._rng_key or dist), size, params)
