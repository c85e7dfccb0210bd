"""Per-step verification quantities and time-series post-processing."""

from __future__ import annotations

import math
from dataclasses import asdict, astuple, dataclass, fields
from typing import Any, Sequence

import numpy as np

from .elliptic import HelmholtzSolver
from .grid import Grid, face_pair_sum, grad_sq_norm, integrate, laplacian_apply, mean
from .integrator import SimState, key_identity_residual
from .motility import MotilitySpec, check_A1
from .theory import TheoryReport, pointwise_envelope


@dataclass
class DiagnosticsRecord:
    t: float
    mass: float
    lyapunov_E: float
    dissipation_D1: float
    dissipation_D2: float
    min_v: float
    max_v: float
    max_u: float
    dist_u: float
    dist_v_h1: float
    key_residual: float
    envelope_margin: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> tuple[float, ...]:
        return astuple(self)

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def record(
    prev: SimState,
    cur: SimState,
    grid: Grid,
    spec: MotilitySpec,
    solver: HelmholtzSolver,
    *,
    v0: np.ndarray | None = None,
    vstar: float | None = None,
    ubar: float | None = None,
) -> DiagnosticsRecord:
    """Evaluate all verification quantities for ``cur``.

    ``v0`` and ``vstar`` define the pointwise envelope; when omitted, ``prev``
    is treated as the initial state and the envelope covers ``[prev.t, cur.t]``.
    The dissipation ``D2`` is the face sum of ``jump(v) * jump(v γ(v)) / h``,
    which is nonnegative whenever ``s γ(s)`` is nondecreasing.
    """
    u, v = cur.u, cur.v
    if v0 is None:
        v0, t_env = prev.v, cur.t - prev.t
    else:
        t_env = cur.t
    if vstar is None:
        vstar = float(min(np.min(prev.v), np.min(v)))
    if ubar is None:
        ubar = mean(grid, u)
    gam = spec.gamma(v)
    lap_v = laplacian_apply(grid, v)
    grad2 = grad_sq_norm(grid, v)
    dev = v - ubar
    env = pointwise_envelope(v0, float(spec.gamma(vstar)), t_env)
    return DiagnosticsRecord(
        t=float(cur.t),
        mass=integrate(grid, u),
        lyapunov_E=0.5 * (grad2 + integrate(grid, v * v)),
        dissipation_D1=integrate(grid, gam * lap_v**2),
        dissipation_D2=face_pair_sum(grid, v, v * gam),
        min_v=float(np.min(v)),
        max_v=float(np.max(v)),
        max_u=float(np.max(u)),
        dist_u=float(np.max(np.abs(u - ubar))),
        dist_v_h1=math.sqrt(max(grad2 + integrate(grid, dev * dev), 0.0)),
        key_residual=key_identity_residual(prev, cur, spec, solver),
        envelope_margin=float(np.min(env - v)),
    )


def _column(series: Sequence[DiagnosticsRecord], name: str) -> np.ndarray:
    return np.array([getattr(r, name) for r in series], dtype=float)


@dataclass
class LyapunovAudit:
    max_increase: float
    tol_E: float
    monotone: bool
    strictly_decreasing: bool
    identity_residual: float

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def lyapunov_audit(
    series: Sequence[DiagnosticsRecord], dt: float | None = None, eps_scheme: float = 0.1
) -> LyapunovAudit:
    """Check that ``E`` does not increase and measure the energy-identity defect.

    The identity residual is the mean over consecutive records of
    ``|ΔE/Δt + (D1 + D2)|`` with the dissipation averaged over the two
    endpoints. The monotonicity tolerance is ``10 dt max(D1 + D2) eps_scheme``.

    Args:
        series: diagnostics records of one run
        dt: the run's time step; defaults to the smallest record spacing
        eps_scheme: scheme-error allowance
    """
    if len(series) < 2:
        raise ValueError("need at least 2 records")
    t = _column(series, "t")
    E = _column(series, "lyapunov_E")
    D = _column(series, "dissipation_D1") + _column(series, "dissipation_D2")
    dE = np.diff(E)
    dt_rec = np.diff(t)
    if dt is None:
        dt = float(dt_rec.min())
    tol = 10 * dt * max(float(np.max(D)), 0.0) * eps_scheme
    max_inc = float(np.max(dE))
    ident = np.abs(dE / dt_rec + 0.5 * (D[1:] + D[:-1]))
    return LyapunovAudit(
        max_increase=max_inc,
        tol_E=tol,
        monotone=max_inc <= tol,
        strictly_decreasing=bool(np.all(dE < 0)),
        identity_residual=float(np.mean(ident)),
    )


def dissipation_sign_ok(
    series: Sequence[DiagnosticsRecord], spec: MotilitySpec, atol: float = 1e-10
) -> dict[str, Any]:
    """``D2 >= -atol`` at every record, provided A1 certifies on the visited range."""
    lo = float(np.min(_column(series, "min_v")))
    hi = float(np.max(_column(series, "max_v")))
    a1 = check_A1(spec, (lo, max(hi, lo * (1 + 1e-9))), 1000)
    d2_min = float(np.min(_column(series, "dissipation_D2")))
    return {
        "a1_certified": a1.holds,
        "d2_min": d2_min,
        "passed": (d2_min >= -atol) if a1.holds else None,
    }


def fit_decay_rate(t, y, window_fraction: float = 0.5) -> tuple[float, float]:
    """Least-squares slope of ``log y`` against ``t`` over the trailing window.

    Returns:
        tuple: ``(slope, r_squared)``; ``r_squared`` is 1 for an exact fit.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    if not 0 < window_fraction <= 1:
        raise ValueError("window_fraction must be in (0, 1]")
    if np.any(y <= 0):
        raise ValueError("all values must be positive")
    start = t[-1] - window_fraction * (t[-1] - t[0])
    mask = t >= start - 1e-12 * max(abs(start), 1.0)
    if mask.sum() < 3:
        raise ValueError("fewer than 3 points in the fit window")
    tw, ly = t[mask], np.log(y[mask])
    tc = tw - tw.mean()
    slope = float(tc @ (ly - ly.mean()) / (tc @ tc))
    resid = ly - ly.mean() - slope * tc
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(resid @ resid)
    # log-constant data leaves only roundoff in ss_tot; treat it as an exact fit
    flat = ss_tot <= (1e-14 * max(1.0, float(np.max(np.abs(ly))))) ** 2 * ly.size
    r2 = 1.0 if flat else 1.0 - ss_res / ss_tot
    return slope, r2


@dataclass
class RateVerdict:
    status: str  # "pass", "fail" or "non_converging"
    fitted_rate: float
    predicted_rate: float
    r_squared: float
    delta: float

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def rate_verdict(fitted_rate: float, predicted_rate: float, delta: float = 0.15) -> bool:
    return fitted_rate >= (1 - delta) * predicted_rate


def rate_check(
    series: Sequence[DiagnosticsRecord],
    theory: TheoryReport | float,
    delta: float = 0.15,
    window_fraction: float = 0.5,
) -> RateVerdict:
    """Compare the fitted decay rate of ``dist_v_h1`` with the predicted lower bound."""
    pred = theory if isinstance(theory, (int, float)) else theory.predicted_rate_norm
    t = _column(series, "t")
    y = _column(series, "dist_v_h1")
    keep = y > 0
    try:
        slope, r2 = fit_decay_rate(t[keep], y[keep], window_fraction)
    except ValueError:
        return RateVerdict("non_converging", math.nan, pred, math.nan, delta)
    if slope >= 0:
        return RateVerdict("non_converging", -slope, pred, r2, delta)
    status = "pass" if rate_verdict(-slope, pred, delta) else "fail"
    return RateVerdict(status, -slope, pred, r2, delta)


def grow_up_trend(series: Sequence[DiagnosticsRecord], fraction: float = 0.5) -> dict[str, Any]:
    """Whether ``max_v`` increases strictly across the trailing part of the run."""
    t = _column(series, "t")
    mv = _column(series, "max_v")
    start = t[-1] - fraction * (t[-1] - t[0])
    tail = mv[t >= start]
    increasing = bool(tail.size >= 2 and np.all(np.diff(tail) > 0))
    growth = float(tail[-1] / tail[0] - 1.0) if tail.size else math.nan
    return {"increasing": increasing, "relative_growth": growth, "records": int(tail.size)}


def mass_drift(series: Sequence[DiagnosticsRecord]) -> float:
    m = _column(series, "mass")
    return float(np.max(np.abs(m - m[0])) / abs(m[0]))
