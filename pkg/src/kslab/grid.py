"""Uniform cell-centered grids with zero-flux boundaries.

Three geometries are supported: an interval, an axis-aligned rectangle and a
radially symmetric ball of arbitrary ambient dimension. All of them share the
same finite-volume structure: a diagonal matrix of cell volumes ``V`` and a
symmetric, negative semi-definite "stiffness" matrix ``K`` assembled from
face fluxes, so that the discrete Laplacian is ``V^{-1} K``. Boundary faces
carry no flux, which implements the Neumann condition by ghost-cell
reflection and makes every volume-weighted column sum of the Laplacian vanish.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any

import numpy as np
import scipy.sparse as sp


class GridError(ValueError):
    """Raised for invalid grid descriptors or grid/field mismatches."""


class ConvergenceError(RuntimeError):
    """Raised when an iterative procedure does not converge."""


GEOMETRIES = ("interval", "rectangle", "radial_ball")


def unit_ball_volume(n: int) -> float:
    """Volume of the unit ball in ``n`` dimensions."""
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def unit_sphere_area(n: int) -> float:
    """Surface area of the unit sphere bounding the ``n``-ball."""
    return 2 * math.pi ** (n / 2) / math.gamma(n / 2)


def _stiffness_1d(num: int, spacing: float, face_area: np.ndarray) -> sp.csr_matrix:
    """Symmetric 1D flux matrix with zero flux through the two end faces.

    ``face_area`` holds the ``num - 1`` interior face measures.
    """
    w = face_area / spacing
    main = np.zeros(num)
    main[:-1] -= w
    main[1:] -= w
    return sp.diags([w, main, w], [-1, 0, 1], format="csr")


@dataclass(frozen=True, eq=False)
class Grid:
    """Cell-centered discretization of an interval, rectangle or radial ball.

    Use :func:`build_grid` rather than instantiating directly.

    Attributes:
        geometry: one of ``"interval"``, ``"rectangle"``, ``"radial_ball"``
        extents: domain length per axis (radius for the ball)
        cells_per_axis: number of cells per axis
        ambient_dim: dimension of the physical domain
    """

    geometry: str
    extents: tuple[float, ...]
    cells_per_axis: tuple[int, ...]
    ambient_dim: int
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.extents, self.cells_per_axis))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells_per_axis

    @property
    def num_cells(self) -> int:
        return int(np.prod(self.cells_per_axis))

    @cached_property
    def axis_centers(self) -> tuple[np.ndarray, ...]:
        return tuple(
            (np.arange(N) + 0.5) * h for N, h in zip(self.cells_per_axis, self.spacing)
        )

    @cached_property
    def centers(self) -> np.ndarray:
        """Cell centers as an array of shape ``(num_cells, num_axes)``."""
        mesh = np.meshgrid(*self.axis_centers, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    @cached_property
    def cell_volumes(self) -> np.ndarray:
        if self.geometry == "radial_ball":
            n = self.ambient_dim
            (N,), (h,) = self.cells_per_axis, self.spacing
            faces = np.arange(N + 1) * h
            return unit_sphere_area(n) * (faces[1:] ** n - faces[:-1] ** n) / n
        vols = np.ones(1)
        for N, h in zip(self.cells_per_axis, self.spacing):
            vols = np.multiply.outer(vols, np.full(N, h))
        return vols.ravel()

    @property
    def total_volume(self) -> float:
        """Exact measure of the domain."""
        if self.geometry == "radial_ball":
            return unit_ball_volume(self.ambient_dim) * self.extents[0] ** self.ambient_dim
        return float(np.prod(self.extents))

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Symmetric matrix ``K`` with ``(K f)_i`` the net face flux into cell ``i``."""
        if self.geometry == "interval":
            (N,), (h,) = self.cells_per_axis, self.spacing
            return _stiffness_1d(N, h, np.ones(N - 1))
        if self.geometry == "radial_ball":
            (N,), (h,) = self.cells_per_axis, self.spacing
            r_faces = np.arange(1, N) * h
            area = unit_sphere_area(self.ambient_dim) * r_faces ** (self.ambient_dim - 1)
            return _stiffness_1d(N, h, area)
        (nx, ny), (hx, hy) = self.cells_per_axis, self.spacing
        # face measure in 2D is the transverse cell width
        kx = _stiffness_1d(nx, hx, np.full(nx - 1, hy))
        ky = _stiffness_1d(ny, hy, np.full(ny - 1, hx))
        return (sp.kron(kx, sp.identity(ny)) + sp.kron(sp.identity(nx), ky)).tocsr()

    @cached_property
    def faces(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Interior faces as ``(left cell, right cell, area / h)`` arrays."""
        K = self.stiffness.tocoo()
        upper = K.row < K.col
        return K.row[upper], K.col[upper], K.data[upper]

    @cached_property
    def laplacian_matrix(self) -> sp.csr_matrix:
        """Discrete Neumann Laplacian ``V^{-1} K`` as a sparse matrix."""
        return sp.diags(1.0 / self.cell_volumes) @ self.stiffness

    def check(self, values: Any) -> np.ndarray:
        """Return ``values`` as a flat float array, validating its length."""
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1:
            arr = arr.ravel()
        if arr.size != self.num_cells:
            raise GridError(
                f"field has {arr.size} values but grid has {self.num_cells} cells"
            )
        return arr

    def to_dict(self) -> dict[str, Any]:
        """JSON descriptor of the grid."""
        data: dict[str, Any] = {
            "geometry": self.geometry,
            "extents": list(self.extents),
            "cells": list(self.cells_per_axis),
        }
        if self.geometry == "radial_ball":
            data["ambient_dim"] = self.ambient_dim
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Grid:
        return build_grid(
            data["geometry"],
            data["extents"],
            data["cells"],
            ambient_dim=data.get("ambient_dim"),
        )

    def __repr__(self) -> str:
        return (
            f"Grid({self.geometry}, extents={self.extents}, "
            f"cells={self.cells_per_axis}, n={self.ambient_dim})"
        )


def build_grid(
    geometry: str,
    extents: float | tuple[float, ...] | list[float],
    cells_per_axis: int | tuple[int, ...] | list[int],
    *,
    ambient_dim: int | None = None,
) -> Grid:
    """Build a uniform cell-centered grid.

    Args:
        geometry: ``"interval"``, ``"rectangle"`` or ``"radial_ball"``
        extents: length ``L`` (interval), ``(Lx, Ly)`` (rectangle) or radius
            ``R`` (radial ball)
        cells_per_axis: cell count per axis, at least 2
        ambient_dim: dimension ``n`` of the ball; ignored for other geometries

    Returns:
        Grid: the discretization with cell centers at ``(i + 1/2) h``.
    """
    if geometry not in GEOMETRIES:
        raise GridError(f"unknown geometry {geometry!r}, expected one of {GEOMETRIES}")
    ext = tuple(float(e) for e in np.atleast_1d(extents))
    cells = tuple(int(c) for c in np.atleast_1d(cells_per_axis))
    num_axes = 2 if geometry == "rectangle" else 1
    if len(ext) != num_axes or len(cells) != num_axes:
        raise GridError(f"{geometry} needs {num_axes} extent(s) and cell count(s)")
    if not all(math.isfinite(e) and e > 0 for e in ext):
        raise GridError(f"extents must be positive, got {ext}")
    if any(c < 2 for c in cells):
        raise GridError(f"need at least 2 cells per axis, got {cells}")
    if geometry == "radial_ball":
        if ambient_dim is None or int(ambient_dim) < 1:
            raise GridError(f"radial ball needs ambient_dim >= 1, got {ambient_dim}")
        n = int(ambient_dim)
    else:
        n = num_axes
    return Grid(geometry, ext, cells, n)


def integrate(grid: Grid, f: Any) -> float:
    """Volume-weighted sum of cell values."""
    return float(grid.cell_volumes @ grid.check(f))


def inner(grid: Grid, f: Any, g: Any) -> float:
    """Cell-volume inner product."""
    return float(grid.cell_volumes @ (grid.check(f) * grid.check(g)))


def mean(grid: Grid, f: Any) -> float:
    """Volume-weighted mean; exact for constant fields."""
    f = grid.check(f)
    return float(f[0] + integrate(grid, f - f[0]) / float(grid.cell_volumes.sum()))


def net_flux(grid: Grid, f: Any) -> np.ndarray:
    """Net face flux ``K f`` into each cell.

    Fluxes are formed from face differences, so constants map to exactly zero.
    """
    f = grid.check(f)
    i, j, w = grid.faces
    flux = w * (f[j] - f[i])
    n = grid.num_cells
    return np.bincount(i, flux, n) - np.bincount(j, flux, n)


def laplacian_apply(grid: Grid, f: Any) -> np.ndarray:
    """Apply the zero-flux finite-volume Laplacian to a cell field."""
    return net_flux(grid, f) / grid.cell_volumes


def grad_sq_norm(grid: Grid, f: Any) -> float:
    """Discrete Dirichlet energy, equal to ``-<f, laplacian(f)>`` in volume weights."""
    return face_pair_sum(grid, f, f)


def face_pair_sum(grid: Grid, f: Any, g: Any) -> float:
    """Sum over interior faces of ``area * (jump f)(jump g) / h``.

    This is the discrete counterpart of ``integral grad f . grad g`` and
    equals ``-<g, laplacian(f)>`` exactly up to roundoff.
    """
    f = grid.check(f)
    g = grid.check(g)
    i, j, w = grid.faces
    return float(np.sum(w * (f[j] - f[i]) * (g[j] - g[i])))


def analytic_mu1(grid: Grid) -> float | None:
    """First nonzero Neumann eigenvalue of the continuous domain, if known in closed form."""
    if grid.geometry in ("interval", "rectangle"):
        return min((math.pi / L) ** 2 for L in grid.extents)
    return None


def numeric_mu1(grid: Grid, *, tol: float = 1e-12, max_iter: int = 10_000) -> float:
    """First nonzero eigenvalue of the discrete operator by inverse iteration.

    Power iteration is run on ``(I - Δ_h)^{-1}`` restricted to mean-free
    fields; its dominant eigenvalue is ``1 / (1 + mu1)``.

    Raises:
        ConvergenceError: if the Rayleigh quotient has not settled within
            ``max_iter`` iterations
    """
    from .elliptic import HelmholtzSolver

    solver = HelmholtzSolver(grid)
    vol = grid.cell_volumes
    total = vol.sum()
    rng = np.random.default_rng(0)
    x = rng.standard_normal(grid.num_cells)
    # seed with a smooth mode so the iteration starts near the low end
    x += np.cos(np.pi * grid.centers[:, 0] / grid.extents[0])
    lam_old = math.inf
    for _ in range(max_iter):
        x -= (vol @ x) / total
        x /= math.sqrt(vol @ (x * x))
        y = solver.solve(x)
        lam = float(vol @ (x * y))
        x = y
        if abs(lam - lam_old) <= tol * abs(lam):
            return 1.0 / lam - 1.0
        lam_old = lam
    raise ConvergenceError(f"inverse iteration did not converge in {max_iter} iterations")


def neumann_mu1(grid: Grid, *, numeric: bool = False, **kwargs: Any) -> float:
    """First nonzero eigenvalue of ``-Δ`` with Neumann conditions.

    The closed-form value ``min (π / L)^2`` is returned for intervals and
    rectangles unless ``numeric`` is set; the radial ball always uses the
    discrete operator.
    """
    exact = analytic_mu1(grid)
    if exact is not None and not numeric:
        return exact
    return numeric_mu1(grid, **kwargs)
