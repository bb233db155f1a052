"""Pseudo-spectral Navier-Stokes on the 3-torus with heat-flow Besov diagnostics,
Picard fluctuation hierarchies and empirically calibrated a priori estimates."""

from .data import DataSpec, generate_data
from .errors import (
    BesovNSError,
    ConfigError,
    DiagnosticWarning,
    MeshMismatch,
    OutputError,
    ResolutionExceeded,
    StepUnstable,
    StructuralViolation,
    UnderResolvedQuadrature,
    VerificationFailed,
)
from .norms import BesovSpec, ChLSpec, QuadratureCfg, besov_norm_heat, besov_norm_lp, lebesgue_norm
from .picard import DecompositionSet, build_split, decompose
from .solver import SolverConfig, Trajectory, duhamel_B, linear_flow, simulate
from .spectral import Grid3, SpectralVectorField, heat_semigroup, leray_project
from .verify import VerificationReport, fit_constant

__all__ = [
    "BesovNSError",
    "BesovSpec",
    "ChLSpec",
    "ConfigError",
    "DataSpec",
    "DecompositionSet",
    "DiagnosticWarning",
    "Grid3",
    "MeshMismatch",
    "OutputError",
    "QuadratureCfg",
    "ResolutionExceeded",
    "SolverConfig",
    "SpectralVectorField",
    "StepUnstable",
    "StructuralViolation",
    "Trajectory",
    "UnderResolvedQuadrature",
    "VerificationFailed",
    "VerificationReport",
    "besov_norm_heat",
    "besov_norm_lp",
    "build_split",
    "decompose",
    "duhamel_B",
    "fit_constant",
    "generate_data",
    "heat_semigroup",
    "lebesgue_norm",
    "leray_project",
    "linear_flow",
    "simulate",
]
