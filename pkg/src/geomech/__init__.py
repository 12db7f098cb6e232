"""Lagrangian mechanics on the Cartan-form bundle, Routh reduction and AKS systems."""
from .geomcalc import NumericalEvaluationError, ScalarField, complete_lift, lie_bracket, vertical_lift
from .integrate import SimulationError, Trajectory, simulate
from .mech import (CartanPoint, DegenerateLagrangian, Frame, LagrangianSystem, ProjectableField,
                   canonical_section, energy, lift_coefficients, solve_accel)
from .symmetry import (GroupAction, PrincipalConnection, build_reduced_system, equivalence_check,
                       momentum_map, routhian)
from .systems import BUILTINS

__version__ = "0.1.0"

__all__ = [
    "BUILTINS", "CartanPoint", "DegenerateLagrangian", "Frame", "GroupAction", "LagrangianSystem",
    "NumericalEvaluationError", "PrincipalConnection", "ProjectableField", "ScalarField", "SimulationError",
    "Trajectory", "build_reduced_system", "canonical_section", "complete_lift", "energy", "equivalence_check",
    "lie_bracket", "lift_coefficients", "momentum_map", "routhian", "simulate", "solve_accel", "vertical_lift",
]
