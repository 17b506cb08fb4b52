"""Elementwise log densities and random generators for the builtin distributions.

Every function works on numpy arrays that already broadcast against each
other. Log densities return ``-inf`` outside the support or when a parameter
is outside its domain; generators raise :class:`DomainError` instead.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import betaln, gammaln, xlog1py, xlogy

HALF_LOG_2PI = 0.5 * np.log(2 * np.pi)


class DomainError(ValueError):
    pass


def _is_int(x) -> np.ndarray:
    return np.equal(np.floor(x), x)


def _normal_lpdf(x, mu, sigma):
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (x - mu) / sigma
        return -0.5 * z * z - np.log(sigma) - HALF_LOG_2PI


def _lognormal_lpdf(x, mu, sigma):
    with np.errstate(divide="ignore", invalid="ignore"):
        lx = np.log(np.where(x > 0, x, 1.0))
        out = _normal_lpdf(lx, mu, sigma) - lx
    return np.where(x > 0, out, -np.inf)


def _exponential_lpdf(x, rate):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x >= 0, np.log(rate) - rate * x, -np.inf)


def _gamma_lpdf(x, shape, rate):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(shape, rate) - gammaln(shape) + xlogy(shape - 1, x) - rate * x
    return np.where(x > 0, out, -np.inf)


def _beta_lpdf(x, a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(a - 1, x) + xlog1py(b - 1, -x) - betaln(a, b)
    return np.where((x > 0) & (x < 1), out, -np.inf)


def _uniform_lpdf(x, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where((x >= lo) & (x <= hi), -np.log(hi - lo), -np.inf)


def _bernoulli_lpmf(n, p):
    out = xlogy(n, p) + xlog1py(1 - n, -p)
    return np.where((n == 0) | (n == 1), out, -np.inf)


def _poisson_lpmf(n, rate):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = xlogy(n, rate) - rate - gammaln(n + 1.0)
    return np.where((n >= 0) & _is_int(n), out, -np.inf)


def _binomial_lpmf(k, n, p):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
               + xlogy(k, p) + xlog1py(n - k, -p))
    return np.where((k >= 0) & (k <= n) & _is_int(k), out, -np.inf)


def _pos(x):
    return x > 0


def _prob(p):
    return (p >= 0) & (p <= 1)


@dataclass(frozen=True)
class Impl:
    lpdf: Callable
    rng: Callable  # (generator, size, *params) -> array
    domains: tuple[Callable, ...]  # per-parameter validity predicates
    discrete: bool = False


IMPLS: dict[str, Impl] = {
    "normal": Impl(_normal_lpdf, lambda g, size, mu, s: g.normal(mu, s, size), (lambda m: np.isfinite(m), _pos)),
    "lognormal": Impl(_lognormal_lpdf, lambda g, size, mu, s: g.lognormal(mu, s, size), (lambda m: np.isfinite(m), _pos)),
    "exponential": Impl(_exponential_lpdf, lambda g, size, r: g.exponential(1.0 / r, size), (_pos,)),
    "gamma": Impl(_gamma_lpdf, lambda g, size, a, b: g.gamma(a, 1.0 / b, size), (_pos, _pos)),
    "beta": Impl(_beta_lpdf, lambda g, size, a, b: g.beta(a, b, size), (_pos, _pos)),
    "uniform": Impl(_uniform_lpdf, lambda g, size, lo, hi: g.uniform(lo, hi, size), (lambda lo: np.isfinite(lo), None)),
    "bernoulli": Impl(_bernoulli_lpmf, lambda g, size, p: (g.random(size) < p).astype(np.int64), (_prob,), True),
    "poisson": Impl(_poisson_lpmf, lambda g, size, r: g.poisson(r, size).astype(np.int64), (_pos,), True),
    "binomial": Impl(
        _binomial_lpmf,
        lambda g, size, n, p: g.binomial(n.astype(np.int64), p, size).astype(np.int64),
        (lambda n: (n >= 0) & _is_int(n), _prob),
        True,
    ),
}


def params_valid(dist: str, params) -> np.ndarray:
    """Elementwise validity of the parameter values (broadcast together)."""
    impl = IMPLS[dist]
    ok = np.ones(np.broadcast_shapes(*(np.shape(p) for p in params)), dtype=bool)
    for check, p in zip(impl.domains, params):
        if check is not None:
            ok &= check(p)
    if dist == "uniform":
        ok &= params[1] > params[0]
    return ok


def lpdf(dist: str, x, params) -> np.ndarray:
    """Elementwise log density, ``-inf`` where the parameters are invalid."""
    with np.errstate(invalid="ignore"):
        out = IMPLS[dist].lpdf(x, *params)
        ok = params_valid(dist, params)
    return np.where(ok, out, -np.inf)


def rng(dist: str, gen: np.random.Generator, size: tuple[int, ...], params) -> np.ndarray:
    params = [np.broadcast_to(p, size) for p in params]
    ok = params_valid(dist, params)
    if not np.all(ok):
        bad = [np.asarray(p)[~ok].flat[0] for p in params]
        raise DomainError(f"{dist}_rng: invalid parameters {tuple(float(b) for b in bad)}")
    return IMPLS[dist].rng(gen, size, *params)


def _cdf_impl(dist: str):
    from scipy import stats

    return {
        "normal": lambda x, mu, s: stats.norm.cdf(x, mu, s),
        "lognormal": lambda x, mu, s: stats.lognorm.cdf(x, s, scale=np.exp(mu)),
        "exponential": lambda x, r: stats.expon.cdf(x, scale=1.0 / r),
        "gamma": lambda x, a, b: stats.gamma.cdf(x, a, scale=1.0 / b),
        "beta": lambda x, a, b: stats.beta.cdf(x, a, b),
        "uniform": lambda x, lo, hi: stats.uniform.cdf(x, lo, hi - lo),
        "bernoulli": lambda x, p: stats.bernoulli.cdf(x, p),
        "poisson": lambda x, r: stats.poisson.cdf(x, r),
        "binomial": lambda x, n, p: stats.binom.cdf(x, n, p),
    }[dist]


def cdf(dist: str, x, params) -> np.ndarray:
    """Elementwise distribution function, ``nan`` where the parameters are invalid."""
    with np.errstate(invalid="ignore", divide="ignore"):
        out = _cdf_impl(dist)(x, *params)
        return np.where(params_valid(dist, params), out, np.nan)
