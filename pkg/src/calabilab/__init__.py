"""Numerical laboratory for the Calabi flow on symmetric Kahler reductions.

Simulate the fourth-order scalar-curvature flow on two desk-scale
backends (conformal torus potentials, toric interval potentials), record
curvature diagnostics along trajectories, and analyze the recorded traces
with the regularity-scale calculus: curvature scale, Dini derivatives,
doubling statistics, growth bounds, barrier checks and blow-up rates.
"""

from .diagnostics import DiagnosticsSample, VectorFieldSpec
from .errors import (
    BadParams,
    CalabiLabError,
    CorruptFile,
    DomainError,
    NonKahler,
    SchemaMismatch,
    SolverFailure,
    StepTooSmall,
    VersionMismatch,
)
from .flow import FlowConfig, RunResult, StepResult, run, step
from .geometry import (
    MetricState,
    ScalarField,
    ToricPotential,
    TorusPotential,
    flat_state,
    round_state,
    toric_state,
    torus_state,
)
from .scale import Trace, curvature_scale, rescale_trace, synthetic_trace

__version__ = "0.1.0"

__all__ = [
    "BadParams", "CalabiLabError", "CorruptFile", "DiagnosticsSample",
    "DomainError", "FlowConfig", "MetricState", "NonKahler", "RunResult",
    "ScalarField", "SchemaMismatch", "SolverFailure", "StepResult",
    "StepTooSmall", "ToricPotential", "TorusPotential", "Trace",
    "VectorFieldSpec", "VersionMismatch", "curvature_scale", "flat_state",
    "rescale_trace", "round_state", "run", "step", "synthetic_trace",
    "toric_state", "torus_state",
]
