"""Decoupled, energy-stable finite element solver for viscoelastic
electrohydrodynamics: ion transport in log-concentration form, incompressible
flow by projection, and a log-conformation Oldroyd-B model, tied together by a
scalar auxiliary variable.
"""
from .driver import Params, SimState, Simulation, convergence_study, run_case
from .mesh import Mesh, build_unit_square

__all__ = ["Mesh", "Params", "SimState", "Simulation", "build_unit_square",
           "convergence_study", "run_case"]
__version__ = "0.1.0"
