"""Finite-difference simulation and optimal bilinear control of a chemo-repulsion system."""

from .cost import AdmissibleBox, CostParams, PGDOptions, Scenario, evaluate, pgd
from .diagnostics import diagnose, exponent_table
from .forward import ModelParams, StateTrajectory, seed_admissible, solve_state
from .grid import Grid, TimeGrid, build_grid

__all__ = [
    "AdmissibleBox",
    "CostParams",
    "Grid",
    "ModelParams",
    "PGDOptions",
    "Scenario",
    "StateTrajectory",
    "TimeGrid",
    "build_grid",
    "diagnose",
    "evaluate",
    "exponent_table",
    "pgd",
    "seed_admissible",
    "solve_state",
]
