"""etckit: simulation and analysis of performance-barrier event-triggered
control -- trigger designs, analytic minimum inter-event times, dynamic
average consensus, and the vehicle-platoon benchmark."""

from . import linear, network, nonlinear, numerics, sim
from .errors import (
    AccuracyError,
    BracketError,
    ConfigError,
    DivergenceError,
    EtcError,
    InfeasibilityError,
    ValidationError,
    WindowExhaustedError,
    ZenoSuspectedError,
)
from .nonlinear import (
    ClassKDerivativeSpec,
    DerivativeBased,
    DistributedPB,
    Dynamic,
    ExponentialSpec,
    FunctionBased,
    IssCertificate,
    OnlineSpec,
    PerformanceBarrier,
)
from .sim import EventLog, SimConfig, Trajectory, VectorField, simulate

__version__ = "0.1.0"

__all__ = [
    "linear",
    "network",
    "nonlinear",
    "numerics",
    "sim",
    "simulate",
    "SimConfig",
    "VectorField",
    "Trajectory",
    "EventLog",
    "IssCertificate",
    "ExponentialSpec",
    "ClassKDerivativeSpec",
    "OnlineSpec",
    "DerivativeBased",
    "FunctionBased",
    "PerformanceBarrier",
    "Dynamic",
    "DistributedPB",
    "EtcError",
    "ValidationError",
    "InfeasibilityError",
    "BracketError",
    "WindowExhaustedError",
    "AccuracyError",
    "DivergenceError",
    "ZenoSuspectedError",
    "ConfigError",
]
