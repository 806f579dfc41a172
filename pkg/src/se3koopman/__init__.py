"""Analytic Koopman lift of quadrotor dynamics on SE(3), with diagnostics and a benchmark harness."""

from .dynamics import QuadrotorParams, QuadrotorState, Trajectory, integrate
from .lift import (DomainBounds, LiftConfig, assemble_A, assemble_B, lift, lifted_rhs,
                   propagate_lifted, selector_B, unlift)

__version__ = "0.1.0"

__all__ = [
    "QuadrotorParams", "QuadrotorState", "Trajectory", "integrate",
    "DomainBounds", "LiftConfig", "assemble_A", "assemble_B", "lift", "lifted_rhs",
    "propagate_lifted", "selector_B", "unlift", "__version__",
]
