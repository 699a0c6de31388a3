"""Distributed Bayesian estimation of coloured Gaussian graphical models."""
from .errors import (
    DimensionMismatch, EstimationError, InsufficientReplicates, InvalidGraph, NotPositiveDefinite, RconError,
)
from .graph import ColouredGraph, LocalModel, complete_graph, cycle_graph, local_model, validate_coloured_graph
from .rcon import (
    RconSpec, SampleStats, build_spec, cone_check, cumulant, k_of_theta, loglik, simulate_data, suff_stats,
    theta_of_k,
)
from .sampler import CgwParams, init_chain, posterior_params, psi_step, rw_step, sample
from .mle import fit_mle
from .distributed import (
    BayesConfig, GlobalEstimate, combine, estimate_distributed, estimate_global_bayes, estimate_global_mle,
    estimate_local, run_method,
)
from .asymptotics import asymptotic_cov
from .bench import condition_report, nmse, normality_check, run_experiment, scenario_cycle, scenario_grid

__version__ = "0.1.0"
