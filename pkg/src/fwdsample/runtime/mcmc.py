"""Vectorized random-walk Metropolis over declared (possibly bounded) variables.

Each batch row runs its own chain. Bounded variables are sampled on an
unconstrained scale: ``lb + exp(z)`` for a lower bound, ``ub - exp(z)`` for an
upper bound and a logistic map for both, with the log Jacobian added to the
target.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit, log_expit

from .interpreter import RuntimeFailure, align

INIT_RADIUS = 2.0
INIT_RETRIES = 100


@dataclass(frozen=True)
class MhConfig:
    step_size: float = 0.5
    warmup: int = 500
    inner_iters: int = 200
    thin: int = 1

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.warmup < 0:
            raise ValueError("warmup must be non-negative")
        if self.inner_iters < 1 or self.thin < 1:
            raise ValueError("inner_iters and thin must be at least 1")


@dataclass
class Coord:
    """One sampled variable: trailing shape and optional bounds (batch-leading arrays)."""
    name: str
    shape: tuple[int, ...]
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None

    def constrain(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Map unconstrained ``z`` (B, *shape) to the support; also return log |dx/dz| per row."""
        lo = None if self.lower is None else align(self.lower.astype(float), z)[0]
        hi = None if self.upper is None else align(self.upper.astype(float), z)[0]
        if lo is None and hi is None:
            return z, np.zeros(z.shape[0])
        with np.errstate(over="ignore", invalid="ignore"):
            if hi is None:
                x, lj = lo + np.exp(z), z
            elif lo is None:
                x, lj = hi - np.exp(z), z
            else:
                x = lo + (hi - lo) * expit(z)
                lj = np.log(hi - lo) + log_expit(z) + log_expit(-z)
        lj = np.broadcast_to(lj, z.shape)
        return x, lj.reshape(z.shape[0], -1).sum(axis=1)


@dataclass
class ChainResult:
    draws: list[dict[str, np.ndarray]]  # one snapshot per kept draw
    accept_rate: np.ndarray  # per row, over all iterations


LogDensity = Callable[[dict[str, np.ndarray]], np.ndarray]


def _log_target(logp: LogDensity, coords: list[Coord], z: dict[str, np.ndarray]):
    xs: dict[str, np.ndarray] = {}
    total = 0.0
    for c in coords:
        x, lj = c.constrain(z[c.name])
        xs[c.name] = x
        total = total + lj
    lp = np.asarray(logp(xs), dtype=float)
    return lp + total, xs


def _initialize(logp, coords, batch, gen):
    z = {c.name: gen.uniform(-INIT_RADIUS, INIT_RADIUS, (batch,) + c.shape) for c in coords}
    lp, xs = _log_target(logp, coords, z)
    if np.any(np.isnan(lp)):
        raise RuntimeFailure("log density is NaN at the initial point")
    for _ in range(INIT_RETRIES):
        bad = ~np.isfinite(lp)
        if not np.any(bad):
            return z, lp, xs
        for c in coords:
            fresh = gen.uniform(-INIT_RADIUS, INIT_RADIUS, (batch,) + c.shape)
            z[c.name] = np.where(align(bad, fresh)[0], fresh, z[c.name])
        lp, xs = _log_target(logp, coords, z)
        if np.any(np.isnan(lp)):
            raise RuntimeFailure("log density is NaN at the initial point")
    raise RuntimeFailure(f"no initial point with finite log density after {INIT_RETRIES} attempts")


def _proposals(coords: list[Coord], componentwise: bool):
    """(coord, flat element or None) pairs updated in turn within one iteration."""
    if not componentwise:
        return [(None, None)]
    return [(c, i) for c in coords for i in range(int(np.prod(c.shape, dtype=int)))]


def run_chain(logp: LogDensity, coords: list[Coord], batch: int, gen: np.random.Generator,
              warmup: int, n_keep: int, thin: int, step: float | Sequence[float],
              label: str = "", componentwise: bool = False) -> ChainResult:
    """``batch`` independent chains; keep ``n_keep`` states, ``thin`` iterations apart, after warmup.

    A sequence of step sizes makes every chain pick one uniformly at random
    per proposal; the proposal stays symmetric. With ``componentwise`` one
    iteration is a sweep of single-element proposals over every coordinate.
    """
    scales = np.atleast_1d(np.asarray(step, dtype=float))
    if not coords:
        return ChainResult([{} for _ in range(n_keep)], np.ones(batch))
    z, lp, xs = _initialize(logp, coords, batch, gen)
    accepted = np.zeros(batch)
    kept: list[dict[str, np.ndarray]] = []
    total = warmup + n_keep * thin
    moves = _proposals(coords, componentwise)
    for t in range(1, total + 1):
        for target, i in moves:
            h = scales[0] if scales.size == 1 else scales[gen.integers(scales.size, size=batch)]
            prop = dict(z)
            for c in coords:
                if target is not None and c is not target:
                    continue
                noise = align(np.atleast_1d(h), z[c.name])[0] * gen.standard_normal(z[c.name].shape)
                if target is not None and c.shape:
                    keep = np.zeros(int(np.prod(c.shape, dtype=int)))
                    keep[i] = 1.0
                    noise = noise * keep.reshape((1,) + c.shape)
                prop[c.name] = z[c.name] + noise
            lp_new, xs_new = _log_target(logp, coords, prop)
            lp_new = np.where(np.isnan(lp_new), -np.inf, lp_new)
            with np.errstate(invalid="ignore"):
                ok = np.log(gen.random(batch)) < lp_new - lp
            accepted += ok
            for c in coords:
                m = align(ok, prop[c.name])[0]
                z[c.name] = np.where(m, prop[c.name], z[c.name])
                xs[c.name] = np.where(m, xs_new[c.name], xs[c.name])
            lp = np.where(ok, lp_new, lp)
        if t == warmup and warmup > 0 and not np.any(accepted):
            warnings.warn(f"Metropolis{' for ' + label if label else ''}: every proposal was rejected "
                          f"during {warmup} warmup iterations (step size {step})", RuntimeWarning, stacklevel=2)
        if t > warmup and (t - warmup) % thin == 0:
            kept.append({k: v.copy() for k, v in xs.items()})
    return ChainResult(kept, accepted / (total * len(moves)))


__all__ = ["MhConfig", "Coord", "ChainResult", "run_chain"]
