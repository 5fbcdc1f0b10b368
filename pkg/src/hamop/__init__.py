"""Operator learning and classical solvers for 1-D Hamiltonian dynamics in bounded potentials."""

from .deeponet import DeepONetModel, DeepONetRegressor
from .dynamics import HamiltonianSystem, Trajectory, generate_labels, gl4_solve, rk4_solve
from .estimators import NumericalSolver
from .potgen import GeneratorConfig, generate_dataset, generate_potential

__version__ = "0.1.0"

__all__ = [
    "DeepONetModel",
    "DeepONetRegressor",
    "GeneratorConfig",
    "HamiltonianSystem",
    "NumericalSolver",
    "Trajectory",
    "generate_dataset",
    "generate_labels",
    "generate_potential",
    "gl4_solve",
    "rk4_solve",
    "__version__",
]
