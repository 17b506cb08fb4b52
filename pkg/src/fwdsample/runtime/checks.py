"""Statistical comparison of draw tables, and SBC rank statistics."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..codegen import SbcBundle
from .interpreter import RuntimeFailure
from .mcmc import MhConfig
from .sampling import run_chain_programs, run_program
from .tables import DrawTable

Z_MAX = 4.0
KS_ALPHA = 1e-3
CHI2_ALPHA = 1e-3
SBC_BINS = 8


@dataclass
class VariableCheck:
    name: str
    mean_forward: float
    mean_reference: float
    mean_z: float
    sd_forward: float
    sd_reference: float
    sd_z: float
    ks_stat: float
    ks_p: float
    passed: bool

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: {verdict} mean {self.mean_forward:.4g} vs {self.mean_reference:.4g} "
                f"(z={self.mean_z:.2f}) sd {self.sd_forward:.4g} vs {self.sd_reference:.4g} "
                f"(z={self.sd_z:.2f}) ks D={self.ks_stat:.4f} p={self.ks_p:.3g}")


@dataclass
class EquivalenceReport:
    variables: list[VariableCheck]
    z_max: float = Z_MAX
    alpha: float = KS_ALPHA
    timing: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.variables)

    def failed(self) -> list[str]:
        return [v.name for v in self.variables if not v.passed]

    def lines(self, with_timing: bool = False) -> list[str]:
        out = [f"overall: {'PASS' if self.passed else 'FAIL'}"]
        out += [v.line() for v in self.variables]
        if with_timing:
            out += [f"time {k}: {t:.3f}s" for k, t in self.timing.items()]
        return out


def _moments(x: np.ndarray) -> tuple[float, float, float]:
    mean = float(np.mean(x))
    var = float(np.var(x))
    m4 = float(np.mean((x - mean) ** 4))
    return mean, var, m4


def _effective_n(x: np.ndarray, chains: np.ndarray | None) -> tuple[float, float]:
    """Standard error of the mean and effective sample size (batch means over chains)."""
    n = x.shape[0]
    var = float(np.var(x))
    if chains is None or len(np.unique(chains)) < 2:
        return (np.sqrt(var / n), float(n))
    ids = np.unique(chains)
    means = np.array([x[chains == c].mean() for c in ids])
    se = float(np.std(means, ddof=1) / np.sqrt(len(ids)))
    if se == 0.0 or var == 0.0:
        return (se, float(n))
    return (se, float(min(n, var / se ** 2)))


def _z(diff: float, se: float) -> float:
    if se == 0.0:
        return 0.0 if diff == 0.0 else float("inf")
    return abs(diff) / se


def compare_column(name: str, f: np.ndarray, r: np.ndarray, r_chains: np.ndarray | None = None,
                   z_max: float = Z_MAX, alpha: float = KS_ALPHA) -> VariableCheck:
    f = np.asarray(f, dtype=float)
    r = np.asarray(r, dtype=float)
    mf, vf, m4f = _moments(f)
    mr, vr, m4r = _moments(r)
    se_mf = np.sqrt(vf / f.size)
    se_mr, n_eff = _effective_n(r, r_chains)
    mean_z = _z(mf - mr, float(np.hypot(se_mf, se_mr)))
    sdf, sdr = np.sqrt(vf), np.sqrt(vr)

    def se_sd(m4, var, sd, n):
        return np.sqrt(max(m4 - var * var, 0.0) / n) / (2 * sd) if sd > 0 else 0.0

    sd_z = _z(sdf - sdr, float(np.hypot(se_sd(m4f, vf, sdf, f.size), se_sd(m4r, vr, sdr, n_eff))))
    ks = stats.ks_2samp(f, r).statistic
    en = np.sqrt(f.size * n_eff / (f.size + n_eff))
    ks_p = float(stats.kstwobign.sf(ks * en))
    passed = mean_z <= z_max and sd_z <= z_max and ks_p >= alpha
    return VariableCheck(name, mf, mr, mean_z, sdf, sdr, sd_z, float(ks), ks_p, passed)


def equivalence_check(forward: DrawTable, reference: DrawTable, z_max: float = Z_MAX,
                      alpha: float = KS_ALPHA) -> EquivalenceReport:
    """Per scalar column: mean and sd z-tests against combined standard errors plus a two-sample KS test."""
    if set(forward.names) != set(reference.names):
        raise ValueError(f"column mismatch: {sorted(forward.names)} vs {sorted(reference.names)}")
    ref = dict(reference.flat())
    checks = [compare_column(label, col, ref[label], reference.chains, z_max, alpha)
              for label, col in forward.flat()]
    return EquivalenceReport(checks, z_max, alpha)


# ----------------------------------------------------------------------- SBC


def sbc_ranks(prior: dict[str, np.ndarray], posterior: dict[str, np.ndarray],
              variables: list[str] | None = None) -> dict[str, np.ndarray]:
    """Rank of each prior draw among its L posterior draws: count strictly below.

    ``prior[v]`` has shape (R, ...) and ``posterior[v]`` shape (R, L, ...).
    """
    variables = variables or list(prior)
    out = {}
    for v in variables:
        p = np.asarray(prior[v])
        post = np.asarray(posterior[v])
        out[v] = (post < p[:, None]).sum(axis=1)
    return out


@dataclass
class RankCheck:
    name: str
    counts: list[int]
    chi2: float
    p: float
    passed: bool

    def line(self) -> str:
        return (f"{self.name}: {'PASS' if self.passed else 'FAIL'} chi2={self.chi2:.3f} p={self.p:.3g} "
                f"bins={' '.join(map(str, self.counts))}")


@dataclass
class SbcReport:
    draws: int
    ranks: dict[str, np.ndarray]
    variables: list[RankCheck]

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.variables)

    def lines(self) -> list[str]:
        return [f"overall: {'PASS' if self.passed else 'FAIL'}"] + [v.line() for v in self.variables]

    def ranks_table(self) -> DrawTable:
        return DrawTable({k: np.asarray(v, dtype=np.int64) for k, v in self.ranks.items()})


def rank_uniformity(ranks: dict[str, np.ndarray], draws: int, bins: int = SBC_BINS,
                    alpha: float = CHI2_ALPHA) -> SbcReport:
    """Chi-square test of rank uniformity on {0..draws} grouped into ``bins`` bins."""
    checks = []
    bins = min(bins, draws + 1)  # fewer rank values than bins would leave empty bins
    for v, r in ranks.items():
        r = np.asarray(r)
        flat = r.reshape(r.shape[0], -1)
        for i in range(flat.shape[1]):
            label = v if r.ndim == 1 else f"{v}[{i + 1}]"
            b = (flat[:, i] * bins) // (draws + 1)
            counts = np.bincount(b, minlength=bins)
            # expected mass per bin under a uniform rank on {0..draws}
            edges = np.searchsorted((np.arange(draws + 1) * bins) // (draws + 1), np.arange(bins + 1))
            expected = np.diff(edges) / (draws + 1) * flat.shape[0]
            chi2, p = stats.chisquare(counts, expected)
            checks.append(RankCheck(label, counts.tolist(), float(chi2), float(p), bool(p > alpha)))
    return SbcReport(draws, ranks, checks)


def run_sbc(bundle: SbcBundle, data_env: dict[str, np.ndarray], reps: int, seed: int,
            cfg: MhConfig | None = None) -> SbcReport:
    """Simulate ``reps`` prior draws, fit each with the posterior program and rank the truth."""
    cfg = cfg or MhConfig()
    env = dict(data_env)
    if not bundle.single_program:
        env.update(run_chain_programs(bundle.prior, data_env, reps, seed, cfg).columns)
    run = run_program(bundle.posterior, env, reps, seed, cfg, keep=bundle.draws)
    ranks = {}
    for p in bundle.params:
        ind = run.draws.get(p + "_lt")
        if ind is None:
            raise RuntimeFailure(f"posterior program does not compute {p}_lt")
        ranks[p] = ind.sum(axis=1).astype(np.int64)
    return rank_uniformity(ranks, bundle.draws)


__all__ = [
    "VariableCheck", "EquivalenceReport", "compare_column", "equivalence_check",
    "sbc_ranks", "RankCheck", "SbcReport", "rank_uniformity", "run_sbc",
]
