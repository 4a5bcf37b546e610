"""Spectral learner for mixtures of two Mallows models."""

from .completion import find_pi, greedy_place, learn_single_mallows, recover_rest, solve_f2
from .conditioned import candidate_centrals, conditioned_hypotheses, fit_params, moment_misfit
from .degenerate import handle_degenerate, remove_common_prefix
from .learner import estimate_phi, infer_top_k, learn, thresholds
from .types import (
    BucketStructure,
    ConfigError,
    LearnedMixture,
    LearnerConfig,
    PrefixHypothesis,
    SplitSample,
    StageFailure,
)

__all__ = [
    "BucketStructure", "ConfigError", "LearnedMixture", "LearnerConfig", "PrefixHypothesis",
    "SplitSample", "StageFailure", "candidate_centrals", "conditioned_hypotheses", "estimate_phi", "find_pi", "fit_params", "greedy_place", "handle_degenerate",
    "infer_top_k", "learn", "learn_single_mallows", "moment_misfit", "recover_rest", "remove_common_prefix",
    "solve_f2", "thresholds",
]
