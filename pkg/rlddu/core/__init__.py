"""
Core package: errors and schemas.

The solver base class and the orchestrator live in rlddu.core.base_solver and
rlddu.core.orchestrator; they pull in the numerical packages and are imported
from there.
"""

from .errors import ConfigError, DegenerateError, RldduError, ShapeError
from .schemas import ExperimentConfig, ExperimentReport, ReportRow, SystemDims

__all__ = [
    "RldduError",
    "ShapeError",
    "DegenerateError",
    "ConfigError",
    "SystemDims",
    "ExperimentConfig",
    "ReportRow",
    "ExperimentReport",
]
