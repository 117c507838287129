"""Bayesian optimisation toolkit for structured (discrete) design spaces.

A Gaussian process with a Tanimoto kernel models the objective directly
over count fingerprints, and a fixed generative decoder's Gaussian prior
is conditioned on GP-predicted improvement via preconditioned
Crank-Nicolson MCMC. The classical latent-space BO baseline and a random
search control are included for comparison, along with an exact rejection
oracle, geometry diagnostics, and a trace-emitting CLI.
"""

from .core import (
    Dataset,
    Evaluation,
    Fingerprint,
    GpSettings,
    RngStream,
    RunConfig,
    Structure,
    dataset_best,
    derive_stream,
)
from .decoder import (
    Decoder,
    DecoderProtocolError,
    DecoderSpec,
    decode_map,
    external_handshake,
    linear_threshold_spec,
    make_decoder,
    sequence_argmax_spec,
)
from .diagnostics import (
    MatchReport,
    RadialStats,
    annulus_report,
    box_shell_overlap,
    distribution_match,
)
from .gp import (
    GpPosterior,
    GramNotPositiveDefiniteError,
    InsufficientCandidatesError,
    KernelParams,
    build_posterior,
    fit,
    gram,
    prob_improvement,
    qei_greedy_select,
    tanimoto,
)
from .objectives import ObjectiveSpec, evaluate, make_objective, nk_global_optimum
from .optimizer import RunRecord, cowboys_run, lsbo_run, random_search_run
from .pcn import (
    ChainState,
    GpImprovementTarget,
    InfeasibleOracleError,
    PcnSettings,
    SampleResult,
    accept_prob,
    cowboys_sample,
    log_accept_prob,
    log_likelihood,
    pcn_propose,
    rejection_sample,
    run_chain,
)

__version__ = "0.1.0"

__all__ = [
    "ChainState",
    "Dataset",
    "Decoder",
    "DecoderProtocolError",
    "DecoderSpec",
    "Evaluation",
    "Fingerprint",
    "GpImprovementTarget",
    "GpPosterior",
    "GpSettings",
    "GramNotPositiveDefiniteError",
    "InfeasibleOracleError",
    "InsufficientCandidatesError",
    "KernelParams",
    "MatchReport",
    "ObjectiveSpec",
    "PcnSettings",
    "RadialStats",
    "RngStream",
    "RunConfig",
    "RunRecord",
    "SampleResult",
    "Structure",
    "accept_prob",
    "annulus_report",
    "box_shell_overlap",
    "build_posterior",
    "cowboys_run",
    "cowboys_sample",
    "dataset_best",
    "decode_map",
    "derive_stream",
    "distribution_match",
    "evaluate",
    "external_handshake",
    "fit",
    "gram",
    "linear_threshold_spec",
    "log_accept_prob",
    "log_likelihood",
    "lsbo_run",
    "make_decoder",
    "make_objective",
    "nk_global_optimum",
    "pcn_propose",
    "prob_improvement",
    "qei_greedy_select",
    "random_search_run",
    "rejection_sample",
    "run_chain",
    "sequence_argmax_spec",
    "tanimoto",
]
