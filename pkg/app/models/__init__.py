"""Model imports for easy access"""

from .schemas import (
    # Enums
    BasisFamily,
    ErrorKind,
    FitMethod,
    ResponseKind,
    RankMethod,

    # Simulation Models
    ModelSpec,
    ErrorSpec,

    # Run configuration
    RunConfig,

    # Request Models
    SimulateRequest,
    CurvesPayload,
    RankRequest,
    FitRequest,

    # Report Models
    RankReport,
    FitReport,
    StudyRow,

    # Health Models
    HealthStatus,
)

__all__ = [
    # Enums
    'BasisFamily',
    'ErrorKind',
    'FitMethod',
    'ResponseKind',
    'RankMethod',

    # Simulation Models
    'ModelSpec',
    'ErrorSpec',

    # Run configuration
    'RunConfig',

    # Request Models
    'SimulateRequest',
    'CurvesPayload',
    'RankRequest',
    'FitRequest',

    # Report Models
    'RankReport',
    'FitReport',
    'StudyRow',

    # Health Models
    'HealthStatus',
]
