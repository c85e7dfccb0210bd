"""Closed-form predictions used as oracles by the diagnostics and harness."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .motility import MotilitySpec


@dataclass(frozen=True)
class KInterval:
    """Interval ``(lo, hi)`` or ``(lo, hi]`` of admissible exponents."""

    lo: float
    hi: float
    hi_closed: bool

    def __contains__(self, k: float) -> bool:
        if k <= self.lo:
            return False
        return k <= self.hi if self.hi_closed else k < self.hi

    def to_dict(self) -> dict[str, Any]:
        return {"lo": self.lo, "hi": self.hi if math.isfinite(self.hi) else None,
                "hi_closed": self.hi_closed}

    def __str__(self) -> str:
        return f"({self.lo:g}, {self.hi:g}{']' if self.hi_closed else ')'}"


def admissible_k_range(n: int) -> KInterval:
    """Exponents ``k`` for which ``γ(s) = s^{-k}`` gives bounded solutions in dimension ``n``."""
    if int(n) != n or n < 2:
        raise ValueError(f"need integer n >= 2, got {n}")
    if n == 2:
        return KInterval(0.0, math.inf, False)
    if n == 3:
        return KInterval(0.0, 2.0, False)
    if n in (4, 5):
        return KInterval(0.0, 1.0, True)
    return KInterval(0.0, 4.0 / (n - 2), False)


def critical_mass_2d(chi: float) -> float:
    if not chi > 0:
        raise ValueError("chi must be positive")
    return 4 * math.pi / chi


def predicted_decay_rate(mu1: float, gamma_at_vstar: float) -> float:
    """Guaranteed exponential rate of ``(||∇v||^2 + ||v - mean||^2)^{1/2}``.

    The squared quantity decays at twice this rate.
    """
    if not (mu1 > 0 and gamma_at_vstar > 0):
        raise ValueError("mu1 and gamma(v*) must be positive")
    return mu1 * gamma_at_vstar / (1 + mu1)


def pointwise_envelope(v0, gamma_at_vstar: float, t: float) -> np.ndarray:
    """Upper bound ``v0 * exp(γ(v*) t)`` on the signal concentration."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return np.asarray(v0, dtype=float) * math.exp(gamma_at_vstar * t)


def scaling_partner(spec: MotilitySpec, lam: float, times, states, query_times=None):
    """Map a power-law trajectory to the one started from ``lam * u0``.

    If ``u(t)`` solves the system with ``γ(s) = s^{-k}``, then
    ``U(t) = lam * u(lam^{-k} t)`` solves it as well. The stored trajectory
    is linearly interpolated in time.

    Args:
        spec: power-law motility
        lam: positive scale factor
        times: increasing sample times of the stored trajectory
        states: array ``(len(times), num_cells)`` of stored fields
        query_times: times at which to evaluate ``U``; defaults to
            ``lam^k * times`` (no interpolation needed)

    Returns:
        tuple: ``(query_times, U)``
    """
    if spec.kind != "power_law":
        raise ValueError("scaling relation only holds for power-law motility")
    if not lam > 0:
        raise ValueError("lambda must be positive")
    k = spec.params["k"]
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    if query_times is None:
        return lam**k * times, lam * states
    query_times = np.asarray(query_times, dtype=float)
    base_t = lam ** (-k) * query_times
    if base_t.max(initial=0.0) > times[-1] * (1 + 1e-12):
        raise ValueError(
            f"requested time {base_t.max():g} beyond stored trajectory end {times[-1]:g}"
        )
    idx = np.clip(np.searchsorted(times, base_t, side="right") - 1, 0, len(times) - 2)
    w = ((base_t - times[idx]) / (times[idx + 1] - times[idx]))[:, None]
    w = np.clip(w, 0.0, 1.0)
    out = (1 - w) * states[idx] + w * states[idx + 1]
    return query_times, lam * out


@dataclass
class TheoryReport:
    """Predicted quantities for one scenario."""

    n: int
    mu1: float
    vstar: float
    gamma_at_vstar: float
    predicted_rate_norm: float
    k: float | None = None
    critical_mass: float | None = None
    admissible_k: dict | None = None
    k_admissible: bool | None = None
    pointwise_envelope_params: dict | None = None
    vstar_source: str = "empirical"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def theory_report(
    spec: MotilitySpec, n: int, mu1: float, vstar: float, vstar_source: str = "empirical"
) -> TheoryReport:
    gv = float(spec.gamma(vstar))
    k = spec.k
    adm = admissible_k_range(n) if n >= 2 else None
    return TheoryReport(
        n=n,
        mu1=mu1,
        vstar=vstar,
        gamma_at_vstar=gv,
        predicted_rate_norm=predicted_decay_rate(mu1, gv),
        k=k,
        critical_mass=critical_mass_2d(spec.chi) if (n == 2 and spec.chi) else None,
        admissible_k=adm.to_dict() if adm else None,
        k_admissible=(k in adm) if (adm is not None and k is not None) else None,
        pointwise_envelope_params={"gamma_at_vstar": gv},
        vstar_source=vstar_source,
    )
