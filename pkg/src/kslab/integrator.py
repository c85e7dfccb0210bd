"""Linearly implicit time stepping for ``u_t = Δ(γ(v) u)``, ``(I - Δ) v = u``.

Each step freezes the motility at the old signal and solves

    u^{n+1} - dt Δ_h (γ(v^n) u^{n+1}) = u^n,

then recomputes ``v^{n+1}`` from the Helmholtz problem. Writing
``w = γ(v^n) u^{n+1}`` turns the first equation into the symmetric M-matrix
system ``(V / γ - dt K) w = V u^n``, which conserves the volume-weighted
mass (``K`` has zero column sums) and keeps ``w``, hence ``u``, nonnegative.
The system is solved for the increment of ``w`` over ``γ(v^n) u^n`` so that
constant states are reproduced bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields
from typing import Any, Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .elliptic import DIRECT_SOLVE_MAX_CELLS, HelmholtzSolver
from .grid import Grid, mean, net_flux
from .motility import MotilitySpec

logger = logging.getLogger(__name__)

COMPLETED = "Completed"
CONVERGED = "Converged"
THRESHOLD_EXCEEDED = "ThresholdExceeded"


class StepError(RuntimeError):
    """A time step failed; ``step`` is the index of the step being attempted."""

    def __init__(self, msg: str, step: int):
        super().__init__(f"step {step}: {msg}")
        self.step = step


@dataclass
class SimState:
    u: np.ndarray
    v: np.ndarray
    t: float = 0.0
    step: int = 0


@dataclass
class SimConfig:
    """Run controls.

    Attributes:
        t_end: final time
        dt: time step; ``None`` selects ``0.25 h_min^2 / γ(min v0)``
        convergence_tol: stop once ``max |u - mean(u0)|`` falls below this
        blowup_threshold: stop once ``max u`` exceeds this
        output_every: record diagnostics every this many steps
        seed: seed for random initial-data generators
        residual_bound: if set, a step whose key-identity residual exceeds it
            is retried with half the time step
        max_halvings: retry budget per step for ``residual_bound``
    """

    t_end: float = 10.0
    dt: float | None = None
    convergence_tol: float = 1e-6
    blowup_threshold: float = 1e8
    output_every: int = 1
    seed: int = 0
    residual_bound: float | None = None
    max_halvings: int = 8

    def __post_init__(self):
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.output_every < 1:
            raise ValueError("output_every must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SimConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)


def default_dt(grid: Grid, spec: MotilitySpec, v0: np.ndarray) -> float:
    h = min(grid.spacing)
    return 0.25 * h * h / float(spec.gamma(np.min(v0)))


class Stepper:
    """Assembles and solves the per-step linear system on a fixed grid."""

    def __init__(self, grid: Grid, spec: MotilitySpec, solver: HelmholtzSolver | None = None):
        self.grid = grid
        self.spec = spec
        self.solver = solver or HelmholtzSolver(grid)
        self._vol = grid.cell_volumes
        self._K = grid.stiffness.tocsc()
        self._direct = grid.num_cells <= DIRECT_SOLVE_MAX_CELLS

    def advance_u(self, u: np.ndarray, v: np.ndarray, dt: float) -> np.ndarray:
        gam = self.spec.gamma(v)
        A = (sp.diags(self._vol / gam) - dt * self._K).tocsc()
        rhs = dt * net_flux(self.grid, gam * u)
        if not np.any(rhs):
            return u.copy()
        if self._direct:
            dw = spla.splu(A).solve(rhs)
        else:
            dw, info = spla.cg(A, rhs, rtol=1e-13, atol=0.0, M=sp.diags(1.0 / A.diagonal()))
            if info != 0:
                raise RuntimeError(f"CG failed with info={info}")
        return u + dw / gam

    def step(self, state: SimState, dt: float) -> SimState:
        u = self.advance_u(state.u, state.v, dt)
        if not np.all(np.isfinite(u)):
            raise StepError("non-finite density", state.step + 1)
        v = self.solver.solve(u)
        return SimState(u, v, state.t + dt, state.step + 1)


def step(
    state: SimState,
    config: SimConfig | float,
    spec: MotilitySpec,
    grid: Grid,
    solver: HelmholtzSolver | None = None,
) -> SimState:
    """Advance one step; ``config`` may be a ``SimConfig`` or a bare time step."""
    dt = config if isinstance(config, (int, float)) else config.dt
    if dt is None:
        dt = default_dt(grid, spec, state.v)
    return Stepper(grid, spec, solver).step(state, float(dt))


def key_identity_residual(
    prev: SimState, cur: SimState, spec: MotilitySpec, solver: HelmholtzSolver
) -> float:
    """Sup-norm defect of ``v_t + γ(v) u = (I - Δ)^{-1}[γ(v) u]`` across one step."""
    dt = cur.t - prev.t
    if dt <= 0:
        return 0.0
    flux = spec.gamma(cur.v) * cur.u
    res = (cur.v - prev.v) / dt + flux - solver.solve(flux)
    return float(np.max(np.abs(res)))


@dataclass
class RunResult:
    """Outcome of :func:`run`.

    Unpacks as ``(state, records, exit_event)``.
    """

    state: SimState
    records: list
    exit_event: str
    dt: float
    vstar: float
    v0: np.ndarray
    min_u: float = 0.0
    times: list[float] = field(default_factory=list)
    trajectory: list[np.ndarray] = field(default_factory=list)

    def __iter__(self):
        return iter((self.state, self.records, self.exit_event))


def run(
    u0,
    config: SimConfig,
    spec: MotilitySpec,
    grid: Grid,
    solver: HelmholtzSolver | None = None,
    *,
    keep_trajectory: bool = False,
    on_record: Callable[[SimState], None] | None = None,
) -> RunResult:
    """Integrate from ``u0`` until ``t_end``, convergence or threshold crossing.

    Args:
        u0: nonnegative, not identically zero initial density
        config: run controls
        spec: motility
        grid: discretization
        solver: Helmholtz solver for ``grid``, built if omitted
        keep_trajectory: store ``u`` after every step (for the scaling check)
        on_record: called with the state each time diagnostics are recorded

    Returns:
        RunResult: final state, diagnostics records and exit event label.
    """
    from .diagnostics import record

    u0 = grid.check(u0).copy()
    if np.any(u0 < 0) or not np.any(u0 > 0):
        raise ValueError("initial density must be nonnegative and not identically zero")
    if config.blowup_threshold <= np.max(u0):
        raise ValueError("blowup_threshold must exceed max(u0)")
    solver = solver or HelmholtzSolver(grid)
    stepper = Stepper(grid, spec, solver)
    v0 = solver.solve(u0)
    state = SimState(u0, v0, 0.0, 0)
    dt = config.dt if config.dt is not None else default_dt(grid, spec, v0)
    ubar = mean(grid, u0)
    vstar = float(np.min(v0))
    min_u = float(np.min(u0))

    records = [record(state, state, grid, spec, solver, v0=v0, vstar=vstar, ubar=ubar)]
    if on_record:
        on_record(state)
    times = [0.0] if keep_trajectory else []
    traj = [u0.copy()] if keep_trajectory else []

    exit_event = COMPLETED
    eps_t = 1e-12 * config.t_end
    while state.t < config.t_end - eps_t:
        h = min(dt, config.t_end - state.t)
        prev = state
        for _ in range(config.max_halvings + 1):
            state = stepper.step(prev, h)
            if config.residual_bound is None:
                break
            if key_identity_residual(prev, state, spec, solver) <= config.residual_bound:
                break
            h *= 0.5
        else:
            logger.warning("residual bound not met after %d halvings", config.max_halvings)
        vstar = min(vstar, float(np.min(state.v)))
        min_u = min(min_u, float(np.min(state.u)))
        if keep_trajectory:
            times.append(state.t)
            traj.append(state.u.copy())

        if np.max(np.abs(state.u - ubar)) < config.convergence_tol:
            exit_event = CONVERGED
        elif np.max(state.u) > config.blowup_threshold:
            exit_event = THRESHOLD_EXCEEDED
        done = exit_event != COMPLETED or state.t >= config.t_end - eps_t
        if done or state.step % config.output_every == 0:
            records.append(
                record(prev, state, grid, spec, solver, v0=v0, vstar=vstar, ubar=ubar)
            )
            if on_record:
                on_record(state)
        if exit_event != COMPLETED:
            break

    return RunResult(state, records, exit_event, dt, vstar, v0, min_u, times, traj)
