"""Neumann Helmholtz solves ``(I - Δ) v = u`` on a fixed grid."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import ConvergenceError, Grid

# grids above this size switch from a sparse LU to conjugate gradients
DIRECT_SOLVE_MAX_CELLS = 256 * 256


class HelmholtzSolver:
    """Cached solver for ``(I - Δ_h) v = u`` with zero-flux boundaries.

    The problem is symmetrized by multiplying with the cell volumes, giving
    the SPD system ``(V - K) v = V u``. Its factorization is computed once
    and reused for every right-hand side.

    Args:
        grid: the discretization
        tol: relative residual bound for the iterative fallback
        method: ``"direct"``, ``"cg"`` or ``None`` to choose by grid size
    """

    def __init__(self, grid: Grid, tol: float = 1e-12, method: str | None = None):
        self.grid = grid
        self.tol = tol
        if method is None:
            method = "direct" if grid.num_cells <= DIRECT_SOLVE_MAX_CELLS else "cg"
        if method not in ("direct", "cg"):
            raise ValueError(f"unknown method {method!r}")
        self.method = method
        self._vol = grid.cell_volumes
        self.matrix = (sp.diags(self._vol) - grid.stiffness).tocsc()
        self._lu = spla.splu(self.matrix) if method == "direct" else None

    @property
    def operator(self) -> sp.csr_matrix:
        """The unsymmetrized operator ``I - Δ_h``."""
        return (sp.identity(self.grid.num_cells) - self.grid.laplacian_matrix).tocsr()

    def solve(self, u) -> np.ndarray:
        u = self.grid.check(u)
        if not np.all(np.isfinite(u)):
            raise ValueError("right-hand side contains non-finite values")
        # constants are fixed points, so solve for the deviation from one of
        # them; this makes constant data come back exactly
        shift = u[0]
        rhs = self._vol * (u - shift)
        if self._lu is not None:
            return shift + self._lu.solve(rhs)
        diag = self.matrix.diagonal()
        precond = sp.diags(1.0 / diag)
        v, info = spla.cg(self.matrix, rhs, rtol=self.tol, atol=0.0, M=precond, maxiter=10_000)
        if info != 0:
            res = np.linalg.norm(self.matrix @ v - rhs) / max(np.linalg.norm(rhs), 1e-300)
            raise ConvergenceError(f"CG failed (info={info}), relative residual {res:.3e}")
        return shift + v

    __call__ = solve

    def residual(self, v, u) -> float:
        """Relative residual ``||(I - Δ_h) v - u|| / ||u||``."""
        u = self.grid.check(u)
        r = self.operator @ self.grid.check(v) - u
        return float(np.linalg.norm(r) / max(np.linalg.norm(u), 1e-300))


def helmholtz_solve(solver: HelmholtzSolver, u) -> np.ndarray:
    return solver.solve(u)


def comparison_check(solver: HelmholtzSolver, a, b, atol: float = 1e-10) -> bool:
    """Whether ``solve(a) <= solve(b) + atol`` holds in every cell."""
    return bool(np.all(solver.solve(a) <= solver.solve(b) + atol))
