"""Names and arities of the builtin functions the mini-language knows about.

Numeric implementations live in :mod:`fwdsample.runtime.distributions`; this
module only describes the surface so the frontend can validate calls without
importing numpy.
"""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Distribution:
    name: str
    params: tuple[str, ...]
    discrete: bool

    @property
    def density_suffix(self) -> str:
        return "_lpmf" if self.discrete else "_lpdf"


DISTRIBUTIONS: dict[str, Distribution] = {
    d.name: d
    for d in (
        Distribution("normal", ("mu", "sigma"), False),
        Distribution("lognormal", ("mu", "sigma"), False),
        Distribution("exponential", ("rate",), False),
        Distribution("gamma", ("shape", "rate"), False),
        Distribution("beta", ("a", "b"), False),
        Distribution("uniform", ("lo", "hi"), False),
        Distribution("bernoulli", ("p",), True),
        Distribution("poisson", ("rate",), True),
        Distribution("binomial", ("n", "p"), True),
    )
}

# name -> accepted argument counts
MATH_FUNCTIONS: dict[str, tuple[int, ...]] = {
    "log": (1,),
    "exp": (1,),
    "sqrt": (1,),
    "pow": (2,),
    "pi": (0,),
    "abs": (1,),
    "square": (1,),
}

FAMILY_SUFFIXES = ("_lpdf", "_lpmf", "_rng", "_cdf")


def split_distribution_call(name: str) -> tuple[Distribution, str] | None:
    """Return ``(distribution, suffix)`` for names like ``normal_lpdf``.

    The suffix must match the distribution's kind: continuous families only
    take ``_lpdf``, discrete ones only ``_lpmf``.
    """
    for suffix in FAMILY_SUFFIXES:
        if name.endswith(suffix):
            base = name[: -len(suffix)]
            dist = DISTRIBUTIONS.get(base)
            if dist is None:
                return None
            if suffix in ("_lpdf", "_lpmf") and suffix != dist.density_suffix:
                return None
            return dist, suffix
    return None


def call_arity(name: str) -> int | None:
    """Expected argument count for a builtin call, or None if unknown."""
    if name in MATH_FUNCTIONS:
        return MATH_FUNCTIONS[name][0]
    split = split_distribution_call(name)
    if split is None:
        return None
    dist, suffix = split
    if suffix == "_rng":
        return len(dist.params)
    return len(dist.params) + 1


def is_density_call(name: str) -> bool:
    split = split_distribution_call(name)
    return split is not None and split[1] in ("_lpdf", "_lpmf")


def is_builtin_function(name: str) -> bool:
    return call_arity(name) is not None
