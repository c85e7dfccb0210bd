"""Numerical laboratory for the parabolic-elliptic Keller-Segel system with
signal-dependent motility ``u_t = Δ(γ(v) u)``, ``-Δv + v = u``."""

__version__ = "0.1.0"

from .grid import Grid, build_grid, grad_sq_norm, integrate, laplacian_apply, neumann_mu1
from .elliptic import HelmholtzSolver, comparison_check, helmholtz_solve
from .motility import MotilitySpec
from .integrator import SimConfig, SimState, run, step

__all__ = [
    "Grid",
    "HelmholtzSolver",
    "MotilitySpec",
    "SimConfig",
    "SimState",
    "build_grid",
    "comparison_check",
    "grad_sq_norm",
    "helmholtz_solve",
    "integrate",
    "laplacian_apply",
    "neumann_mu1",
    "run",
    "step",
]
