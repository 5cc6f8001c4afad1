"""Probability-weighted-averaging optimizers over DMP policies.

Cross-entropy, covariance-matrix-adaptation and path-integral-style
policy improvement share one update: a convex combination of sampled
parameter vectors weighted by cost-derived probabilities. This package
implements the three weighting schemes, the generic black-box optimizers,
the rollout-based update family (fixed covariance, CEM-style and
CMAES-style covariance adaptation), a planar-arm viapoint benchmark, and
an experiment harness.
"""

from .arm import ArmModel, ViapointTask, final_posture, forward_kinematics, viapoint_cost
from .backend import backend_name, has_compiled_kernels
from .distributions import DecompositionError, GaussianSearchDistribution, sample
from .dmp import (
    DmpPolicy,
    FittingError,
    Trajectory,
    basis_activations,
    integrate,
    min_jerk,
    train_from_trajectory,
)
from .es import (
    Algorithm,
    CmaesConfig,
    CmaesState,
    ConditioningError,
    cem_update,
    cmaes_update,
    expected_gaussian_norm,
    minimize,
)
from .harness import ExperimentConfig, LearningCurve, preset, run, run_session
from .pi2 import (
    CovarianceUpdate,
    ExplorationMode,
    Pi2Config,
    RolloutBatch,
    UpdateReport,
    cost_to_go,
    exploration_magnitude,
    generate_exploration,
    per_timestep_updates,
    pi2_update,
    temporal_average,
)
from .weighting import (
    CemEliteness,
    CmaesEliteness,
    Pi2Eliteness,
    ProbabilityWeights,
    cem_weights,
    cmaes_weights,
    effective_selection_mass,
    pi2_weights,
)

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "ArmModel",
    "CemEliteness",
    "CmaesConfig",
    "CmaesEliteness",
    "CmaesState",
    "ConditioningError",
    "CovarianceUpdate",
    "DecompositionError",
    "DmpPolicy",
    "ExperimentConfig",
    "ExplorationMode",
    "FittingError",
    "GaussianSearchDistribution",
    "LearningCurve",
    "Pi2Config",
    "Pi2Eliteness",
    "ProbabilityWeights",
    "RolloutBatch",
    "Trajectory",
    "UpdateReport",
    "ViapointTask",
    "backend_name",
    "basis_activations",
    "cem_update",
    "cem_weights",
    "cmaes_update",
    "cmaes_weights",
    "cost_to_go",
    "effective_selection_mass",
    "expected_gaussian_norm",
    "exploration_magnitude",
    "final_posture",
    "forward_kinematics",
    "generate_exploration",
    "has_compiled_kernels",
    "integrate",
    "min_jerk",
    "minimize",
    "per_timestep_updates",
    "pi2_update",
    "pi2_weights",
    "preset",
    "run",
    "run_session",
    "sample",
    "temporal_average",
    "train_from_trajectory",
    "viapoint_cost",
]
