"""chaoslab: modulated free energy, mean-field limits and particle ensembles.

The building blocks live in submodules:

- ``kernels``: interaction kernels g and confinements V
- ``grid`` and ``equilibrium``: cell-averaged densities and the thermal equilibrium
- ``meanfield``: the nonlinear Fokker-Planck flow
- ``liouville``: the joint N-particle density and its free energy audits
- ``particles`` and ``diagnostics``: SDE/MALA ensembles and their functionals
- ``cli``: configuration, recipes and the command line
"""
from .config import ExperimentConfig, load_config, parse_config
from .equilibrium import convexity_constant, free_energy, solve_thermal_equilibrium
from .errors import AuditViolation, ChaosLabError, ConfigError, NumericalError
from .grid import Grid1D, GridDensity, GridField
from .kernels import ConfinementSpec, KernelSpec
from .liouville import JointDensity, LiouvilleSolver, build_joint, modulated_free_energy
from .meanfield import run_meanfield
from .particles import mala_sample, run_ensemble

__version__ = "0.1.0"

__all__ = [
    "AuditViolation", "ChaosLabError", "ConfigError", "ConfinementSpec", "ExperimentConfig", "Grid1D",
    "GridDensity", "GridField", "JointDensity", "KernelSpec", "LiouvilleSolver", "NumericalError",
    "build_joint", "convexity_constant", "free_energy", "load_config", "mala_sample", "modulated_free_energy",
    "parse_config", "run_ensemble", "run_meanfield", "solve_thermal_equilibrium",
]
