"""Jacobi deviation equations for Lagrangian systems.

Derive the mass, gyroscopic and stiffness matrices of the linearised flow
from a Lagrangian written in a small expression language, integrate the
trajectory and its deviation together, and measure Lyapunov spectra and
orbit stability.
"""
from .backend import BACKEND
from .dynamics import (IntegrationResult, IntegrationSettings, drift_report,
                       integrate, linearization_error)
from .errors import (ConfigError, DivergenceError, DomainError, JacobivarError,
                     NotAutonomousError, ParseError, SingularMassError,
                     UndeclaredSymbolError)
from .expr import SymbolTable, differentiate, evaluate, parse, render, simplify
from .lyapunov import LyapunovReport, LyapunovSettings, lyapunov_spectrum
from .stability import (ReferenceOrbit, StabilityVerdict, integrate_normal_deviation,
                        stability_coefficient, verdict)
from .state import FlowState
from .variational import (DerivedSystem, LagrangianSystem, build_gamma, derive,
                          eval_H, eval_h)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "ConfigError", "DerivedSystem", "DivergenceError", "DomainError",
    "FlowState", "IntegrationResult", "IntegrationSettings", "JacobivarError",
    "LagrangianSystem", "LyapunovReport", "LyapunovSettings", "NotAutonomousError",
    "ParseError", "ReferenceOrbit", "SingularMassError", "StabilityVerdict",
    "SymbolTable", "UndeclaredSymbolError", "build_gamma", "derive", "differentiate",
    "drift_report", "eval_H", "eval_h", "evaluate", "integrate",
    "integrate_normal_deviation", "linearization_error", "lyapunov_spectrum", "parse",
    "render", "simplify", "stability_coefficient", "verdict",
]
