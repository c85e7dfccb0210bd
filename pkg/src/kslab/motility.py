"""Motility functions with closed-form derivatives and sampled assumption checks.

Each built-in kind is described by its logarithm ``log γ(s)`` and the two
logarithmic derivative ratios ``a = γ'/γ`` and ``b = γ''/γ``. This keeps
ratios such as ``γγ''/γ'^2 = b/a^2`` exact even where ``γ`` itself underflows.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np

KINDS = ("power_law", "exponential", "sqrt_exp", "log_power", "custom")
# kinds with a singularity at s = 0
SINGULAR_KINDS = ("power_law", "sqrt_exp", "log_power")
DEFAULT_S_MIN = 1e-8

HOLDS = "holds_on_sample"
FAILS = "fails"


class MotilityError(ValueError):
    pass


@dataclass(frozen=True)
class MotilitySpec:
    """A motility function ``γ`` and its parameters.

    Attributes:
        kind: one of :data:`KINDS`
        params: ``{"k": ...}`` for power_law and log_power, ``{"chi": ...}`` for
            exponential, nothing for sqrt_exp
        s_min: arguments below this value are clamped to it
        funcs: ``(γ, γ', γ'')`` callables for the custom kind
    """

    kind: str
    params: dict[str, float] = field(default_factory=dict)
    s_min: float = DEFAULT_S_MIN
    funcs: tuple[Callable, Callable, Callable] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise MotilityError(f"unknown motility kind {self.kind!r}")
        if self.kind in ("power_law", "log_power") and not self.params.get("k", 0) > 0:
            raise MotilityError(f"{self.kind} needs k > 0")
        if self.kind == "exponential" and not self.params.get("chi", 0) > 0:
            raise MotilityError("exponential needs chi > 0")
        if self.kind == "custom" and (self.funcs is None or len(self.funcs) != 3):
            raise MotilityError("custom motility needs a (gamma, dgamma, d2gamma) triple")
        if not self.s_min > 0:
            raise MotilityError("s_min must be positive")

    @property
    def k(self) -> float | None:
        return self.params.get("k") if self.kind == "power_law" else None

    @property
    def chi(self) -> float | None:
        return self.params.get("chi") if self.kind == "exponential" else None

    def clamp(self, s):
        return np.maximum(np.asarray(s, dtype=float), self.s_min)

    def log_gamma(self, s) -> np.ndarray:
        s = self.clamp(s)
        if self.kind == "power_law":
            return -self.params["k"] * np.log(s)
        if self.kind == "exponential":
            return -self.params["chi"] * s
        if self.kind == "sqrt_exp":
            return -np.sqrt(s)
        if self.kind == "log_power":
            return -self.params["k"] * np.log(s) - np.log(np.log1p(s))
        with np.errstate(divide="ignore"):
            return np.log(self._custom(0, s))

    def log_derivs(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(γ'/γ, γ''/γ)`` at ``s``."""
        s = self.clamp(s)
        if self.kind == "power_law":
            k = self.params["k"]
            return -k / s, k * (k + 1) / s**2
        if self.kind == "exponential":
            chi = self.params["chi"]
            return np.full_like(s, -chi), np.full_like(s, chi * chi)
        if self.kind == "sqrt_exp":
            r = np.sqrt(s)
            return -0.5 / r, 0.25 / s + 0.25 / (s * r)
        if self.kind == "log_power":
            # γ = 1/g with g = s^k log(1+s)
            k = self.params["k"]
            L = np.log1p(s)
            g1_g = k / s + 1.0 / ((1 + s) * L)
            g2_g = k * (k - 1) / s**2 + 2 * k / (s * (1 + s) * L) - 1.0 / ((1 + s) ** 2 * L)
            return -g1_g, 2 * g1_g**2 - g2_g
        g = self._custom(0, s)
        return self._custom(1, s) / g, self._custom(2, s) / g

    def _custom(self, order: int, s) -> np.ndarray:
        out = np.asarray(self.funcs[order](s), dtype=float)
        if not np.all(np.isfinite(out)):
            raise MotilityError(f"custom motility returned non-finite values (order {order})")
        return np.broadcast_to(out, np.shape(s)).astype(float)

    def gamma(self, s) -> np.ndarray:
        if self.kind == "custom":
            return self._custom(0, self.clamp(s))
        return np.exp(self.log_gamma(s))

    __call__ = gamma

    def eval(self, s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return ``(γ, γ', γ'')`` at ``s``."""
        s = self.clamp(s)
        if self.kind == "custom":
            return self._custom(0, s), self._custom(1, s), self._custom(2, s)
        g = np.exp(self.log_gamma(s))
        a, b = self.log_derivs(s)
        return g, g * a, g * b

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "custom":
            raise MotilityError("custom motility functions are not serializable")
        data: dict[str, Any] = {"kind": self.kind, "params": dict(self.params)}
        if self.s_min != DEFAULT_S_MIN:
            data["s_min"] = self.s_min
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MotilitySpec:
        return cls(data["kind"], dict(data.get("params", {})), data.get("s_min", DEFAULT_S_MIN))


def power_law(k: float) -> MotilitySpec:
    return MotilitySpec("power_law", {"k": k})


def exponential(chi: float) -> MotilitySpec:
    return MotilitySpec("exponential", {"chi": chi})


def sqrt_exp() -> MotilitySpec:
    return MotilitySpec("sqrt_exp")


def log_power(k: float) -> MotilitySpec:
    return MotilitySpec("log_power", {"k": k})


def custom(gamma: Callable, dgamma: Callable, d2gamma: Callable, s_min: float = DEFAULT_S_MIN):
    return MotilitySpec("custom", {}, s_min, (gamma, dgamma, d2gamma))


def constant(value: float = 1.0) -> MotilitySpec:
    """Constant motility, handy for testing the diffusion part alone."""
    return custom(
        lambda s: np.full(np.shape(s), value),
        lambda s: np.zeros(np.shape(s)),
        lambda s: np.zeros(np.shape(s)),
    )


def gamma_eval(spec: MotilitySpec, s: float) -> tuple[float, float, float]:
    g, g1, g2 = spec.eval(s)
    return float(g), float(g1), float(g2)


@dataclass
class AssumptionReport:
    """Outcome of a sampled check of one structural assumption on ``γ``.

    The verdict only covers the sampled range; it is a numerical
    certificate, not a proof.
    """

    assumption: str
    verdict: str
    certified_range: tuple[float, float]
    samples: int
    first_violation: tuple[float, float] | None = None
    clamped: bool = False
    value: float | None = None

    @property
    def holds(self) -> bool:
        return self.verdict == HOLDS

    def to_dict(self) -> dict[str, Any]:
        return {
            "assumption": self.assumption,
            "verdict": self.verdict,
            "first_violation": list(self.first_violation) if self.first_violation else None,
            "certified_range": list(self.certified_range),
            "samples": self.samples,
            "clamped": self.clamped,
            "value": self.value,
        }


def log_samples(s_range: tuple[float, float], n_samples: int) -> np.ndarray:
    lo, hi = s_range
    if not 0 < lo < hi:
        raise MotilityError(f"invalid sample range {s_range}")
    return np.geomspace(lo, hi, n_samples)


def check_A0(spec: MotilitySpec, s_range=(1e-2, 1e6), n_samples: int = 10_000) -> AssumptionReport:
    """Positivity and monotonicity of ``γ`` on the sample, plus decay at the right end.

    Positivity and the sign of ``γ'`` are read off the logarithmic form so
    that underflow of ``γ`` does not masquerade as a violation.
    """
    s = log_samples(s_range, n_samples)
    a, _ = spec.log_derivs(s)
    logg = spec.log_gamma(s)
    bad = np.flatnonzero(~(np.isfinite(logg) & (a <= 0)))
    decays = bool(logg[-1] < logg[0])
    first = (float(s[bad[0]]), float(a[bad[0]])) if bad.size else None
    ok = first is None and decays
    return AssumptionReport(
        "A0", HOLDS if ok else FAILS, tuple(s_range), n_samples, first,
        clamped=s_range[0] < spec.s_min,
    )


def check_A1(spec: MotilitySpec, s_range=(1e-2, 1e6), n_samples: int = 10_000) -> AssumptionReport:
    """Check ``γ(s) + s γ'(s) >= 0`` on log-uniform samples.

    Values down to ``-1e-12`` are accepted so that exact-zero boundary
    cases such as ``γ(s) = 1/s`` pass.
    """
    if n_samples < 100:
        raise MotilityError("check_A1 needs at least 100 samples")
    s = log_samples(s_range, n_samples)
    g, g1, _ = spec.eval(s)
    val = g + s * g1
    bad = np.flatnonzero(val < -1e-12)
    first = (float(s[bad[0]]), float(val[bad[0]])) if bad.size else None
    return AssumptionReport(
        "A1", FAILS if bad.size else HOLDS, tuple(s_range), n_samples, first,
        clamped=s_range[0] < spec.s_min, value=float(val.min()),
    )


def check_A2(
    spec: MotilitySpec,
    k: float,
    log10_range: tuple[float, float] = (1.0, 1e4),
    n_samples: int = 400,
) -> AssumptionReport:
    """Trend certificate for ``s^k γ(s) -> +inf``.

    Samples are placed so that ``log10 s`` is itself geometrically spaced
    between ``log10_range`` (default ``10^1 ... 10^10000``), and the sequence
    ``f = k log s + log γ(s)`` is evaluated in log space. The check holds if
    ``f`` is strictly increasing across the last decade of ``log s`` and
    ``s^k γ`` has grown more than tenfold across that decade.

    Custom kinds are evaluated in floating point and therefore limited to
    ``s <= 1e300``.
    """
    if not k > 0:
        raise MotilityError("check_A2 needs k > 0")
    lo, hi = log10_range
    if spec.kind == "custom":
        hi = min(hi, 300.0)
    if not 0 < lo < hi:
        raise MotilityError(f"invalid log10 range {log10_range}")
    x = np.geomspace(lo, hi, n_samples)
    ln_s = x * math.log(10)
    f = k * ln_s + _log_gamma_from_log(spec, ln_s)
    tail = x >= hi / 10
    start = int(np.argmax(tail))
    # γ may underflow to log γ = -inf; -inf - -inf counts as "not increasing"
    with np.errstate(invalid="ignore"):
        diffs = np.diff(f[tail])
        growth = f[-1] - f[start]
    increasing = bool(np.all(diffs > 0))
    grew = bool(growth > math.log(10))
    first = None
    if not increasing:
        j = start + int(np.argmax(~(diffs > 0))) + 1
        first = (float(10 ** min(x[j], 300.0)), float(f[j]))
    elif not grew:
        first = (float(10 ** min(x[-1], 300.0)), float(f[-1]))
    ok = increasing and grew
    return AssumptionReport(
        "A2", HOLDS if ok else FAILS, (float(10**min(lo, 300.0)), float(10**min(hi, 300.0))),
        n_samples, first, value=float(growth),
    )


def _log_gamma_from_log(spec: MotilitySpec, ln_s: np.ndarray) -> np.ndarray:
    """``log γ(e^{ln_s})`` without forming ``s`` where a closed form allows it."""
    if spec.kind == "power_law":
        return -spec.params["k"] * ln_s
    if spec.kind == "log_power":
        # log(1 + s) = ln_s + log1p(e^{-ln_s})
        ln_log = np.log(ln_s + np.log1p(np.exp(-ln_s)))
        return -spec.params["k"] * ln_s - ln_log
    if spec.kind == "exponential":
        with np.errstate(over="ignore"):
            return -spec.params["chi"] * np.exp(ln_s)
    if spec.kind == "sqrt_exp":
        with np.errstate(over="ignore"):
            return -np.exp(0.5 * ln_s)
    return spec.log_gamma(np.exp(ln_s))


def a3_sup_l0(spec: MotilitySpec, s_range=(1e-2, 1e6), n_samples: int = 10_000) -> float:
    """Largest ``l0`` with ``l0 |γ'|^2 <= γ γ''`` on the sample.

    Returns ``inf`` when ``γ'`` vanishes somewhere on the sample, where the
    ratio is undefined.
    """
    s = log_samples(s_range, n_samples)
    a, b = spec.log_derivs(s)
    if np.any(a >= 0):
        return math.inf
    return float(np.min(b / (a * a)))


def a3_implies_a2_k(l0: float) -> float:
    """Smallest exponent such that any larger ``k`` satisfies the growth condition."""
    if not l0 > 1:
        raise MotilityError(f"need l0 > 1, got {l0}")
    return 1.0 / (l0 - 1.0)


def check_A3(spec: MotilitySpec, l0: float, s_range=(1e-2, 1e6), n_samples: int = 10_000) -> AssumptionReport:
    s = log_samples(s_range, n_samples)
    a, b = spec.log_derivs(s)
    slack = b - l0 * a * a
    bad = np.flatnonzero(slack < -1e-12 * np.maximum(b, 1.0))
    first = (float(s[bad[0]]), float(slack[bad[0]])) if bad.size else None
    return AssumptionReport(
        "A3", FAILS if bad.size else HOLDS, tuple(s_range), n_samples, first,
        clamped=s_range[0] < spec.s_min, value=a3_sup_l0(spec, s_range, n_samples),
    )


def assumption_report(
    spec: MotilitySpec,
    s_range: tuple[float, float] = (1e-2, 1e6),
    n_samples: int = 10_000,
    k: float | None = None,
) -> dict[str, Any]:
    """Run all four assumption checks; this is what ``check-gamma`` prints.

    Unless ``k`` is given, A2 is tested with an exponent just above the one
    implied by the sampled A3 constant (or ``k = 1`` when that constant is
    not above 1). ``max_dimension`` is the largest ``n`` with
    ``l0 > (n + 2) / 4``.
    """
    l0 = a3_sup_l0(spec, s_range, n_samples)
    if k is None:
        if math.isfinite(l0) and l0 > 1:
            k = a3_implies_a2_k(l0) * (1 + 1e-3) + 1e-12
        else:
            k = 1.0
    a3 = check_A3(spec, l0 if math.isfinite(l0) else 1.0, s_range, n_samples)
    return {
        "motility": spec.to_dict() if spec.kind != "custom" else {"kind": "custom"},
        "s_range": list(s_range),
        "samples": n_samples,
        "A0": check_A0(spec, s_range, n_samples).to_dict(),
        "A1": check_A1(spec, s_range, n_samples).to_dict(),
        "A2": {**check_A2(spec, k).to_dict(), "k": k},
        "A3": {**a3.to_dict(), "l0_sup": l0, "max_dimension": _max_dimension(l0)},
    }


def _max_dimension(l0: float) -> int | None:
    if not math.isfinite(l0):
        return None
    n = math.ceil(4 * l0 - 2) - 1
    return n if n >= 1 else None
