"""Deterministic particle method for the regularized homogeneous Landau equation."""

__version__ = "0.1.0"

from .core import (
    DiagnosticsRecord,
    ModelParams,
    ParticleEnsemble,
    ScoreField,
    read_snapshot,
    validate_ensemble,
    validate_params,
    write_snapshot,
)
from .diagnostics import (
    TransportPlanResult,
    dissipation,
    entropy,
    eta_min,
    eta_trend_report,
    moments,
    momentum,
    wasserstein_2,
    wasserstein_inf,
)
from .estimators import LandauParticleFlow, MollifiedDensity
from .initial import InitialCondition, sample_initial
from .integrator import StepConfig, Trajectory, integrate, rhs, step
from .kernel import VelocityField, kernel_eval, kernel_holder_check, projection, velocity_field
from .mollifier import (
    QuadratureRule,
    ScoreLattice,
    log_density,
    moll_grad,
    moll_value,
    score,
    score_field,
    score_lipschitz_check,
)

__all__ = [
    "DiagnosticsRecord",
    "InitialCondition",
    "LandauParticleFlow",
    "ModelParams",
    "MollifiedDensity",
    "ParticleEnsemble",
    "QuadratureRule",
    "ScoreField",
    "ScoreLattice",
    "StepConfig",
    "Trajectory",
    "TransportPlanResult",
    "VelocityField",
    "dissipation",
    "entropy",
    "eta_min",
    "eta_trend_report",
    "integrate",
    "kernel_eval",
    "kernel_holder_check",
    "log_density",
    "moll_grad",
    "moll_value",
    "moments",
    "momentum",
    "projection",
    "read_snapshot",
    "rhs",
    "sample_initial",
    "score",
    "score_field",
    "score_lipschitz_check",
    "step",
    "validate_ensemble",
    "validate_params",
    "velocity_field",
    "wasserstein_2",
    "wasserstein_inf",
    "write_snapshot",
]
