"""Execution of plans and programs, Metropolis sampling and statistical checks."""
from .checks import (
    EquivalenceReport,
    SbcReport,
    equivalence_check,
    rank_uniformity,
    run_sbc,
    sbc_ranks,
)
from .distributions import DomainError
from .interpreter import Interpreter, RngPool, RuntimeFailure
from .mcmc import MhConfig, run_chain
from .sampling import (
    exec_pdf,
    exec_rng,
    factor_log_density,
    reference_joint_sampler,
    run_chain_programs,
    run_plan,
    run_program,
    segment_log_density,
)
from .tables import DrawTable, load_env, read_csv

__all__ = [
    "EquivalenceReport", "SbcReport", "equivalence_check", "rank_uniformity", "run_sbc", "sbc_ranks",
    "DomainError", "Interpreter", "RngPool", "RuntimeFailure", "MhConfig", "run_chain",
    "exec_pdf", "exec_rng", "factor_log_density", "reference_joint_sampler", "run_chain_programs",
    "run_plan", "run_program", "segment_log_density", "DrawTable", "load_env", "read_csv",
]
