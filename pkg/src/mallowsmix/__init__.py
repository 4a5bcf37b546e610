"""Learning mixtures of two Mallows models from rankings.

Elements are 0-based integers internally; rankings files and JSON use
1-based ids.  The hot loops run in a compiled extension when it is
built and in numpy otherwise (see :mod:`mallowsmix.kernels`).
"""

from .em import em_learn, weighted_kemeny_local_search
from .harness import ExperimentConfig, run_experiment, score_success, write_results
from .kernels import BACKEND
from .mallows import MallowsModel, position_prob_table, z_partition
from .mixture import MallowsMixture, sample_mixture_batch
from .moments import MomentStats, closed_form, estimate_from_samples
from .permutations import Permutation, kendall_tau
from .rankings import RankingSample
from .spectral import LearnedMixture, LearnerConfig, learn

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ExperimentConfig", "LearnedMixture", "LearnerConfig", "MallowsMixture", "MallowsModel",
    "MomentStats", "Permutation", "RankingSample", "closed_form", "em_learn", "estimate_from_samples",
    "kendall_tau", "learn", "position_prob_table", "run_experiment", "sample_mixture_batch",
    "score_success", "weighted_kemeny_local_search", "write_results", "z_partition",
]
