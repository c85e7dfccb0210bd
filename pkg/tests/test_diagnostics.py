import math

import numpy as np
import pytest

from kslab.diagnostics import (
    DiagnosticsRecord,
    dissipation_sign_ok,
    fit_decay_rate,
    grow_up_trend,
    lyapunov_audit,
    mass_drift,
    rate_check,
    rate_verdict,
    record,
)
from kslab.elliptic import HelmholtzSolver
from kslab.grid import build_grid
from kslab.integrator import SimConfig, SimState, run
from kslab.motility import constant, power_law
from kslab.theory import theory_report


def test_equilibrium_record(any_grid):
    solver = HelmholtzSolver(any_grid)
    c = np.full(any_grid.num_cells, 2.0)
    s0, s1 = SimState(c, c.copy()), SimState(c, c.copy(), t=0.1, step=1)
    r = record(s0, s1, any_grid, power_law(0.5), solver)
    assert r.lyapunov_E == pytest.approx(0.5 * 4 * any_grid.cell_volumes.sum(), rel=1e-14)
    assert r.dissipation_D1 == 0 and r.dissipation_D2 == 0
    assert r.dist_u == 0 and r.dist_v_h1 == 0
    assert r.key_residual < 1e-12
    assert r.envelope_margin >= 0


def test_d1_with_constant_motility():
    errs = []
    for N in (64, 128):
        g = build_grid("interval", math.pi, N)
        v = 1 + 0.5 * np.cos(g.centers[:, 0])
        s = SimState(v, v)
        r = record(s, s, g, constant(1.0), HelmholtzSolver(g))
        errs.append(abs(r.dissipation_D1 - math.pi / 8))
    assert errs[0] < 1e-3
    assert errs[0] / errs[1] == pytest.approx(4, rel=0.1)


def test_record_columns():
    cols = DiagnosticsRecord.columns()
    assert cols[:3] == ["t", "mass", "lyapunov_E"]
    assert len(cols) == 12


def test_fit_exact_exponential():
    t = np.linspace(0, 10, 50)
    slope, r2 = fit_decay_rate(t, 3 * np.exp(-0.7 * t), window_fraction=1.0)
    assert slope == pytest.approx(-0.7, abs=1e-9)
    assert r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_perturbed_and_constant():
    t = np.linspace(0, 20, 400)
    slope, _ = fit_decay_rate(t, np.exp(-t) * (1 + 0.01 * np.sin(t)))
    assert slope == pytest.approx(-1, abs=0.02)
    slope, r2 = fit_decay_rate(t, np.full_like(t, 4.2))
    assert abs(slope) < 1e-12 and r2 == 1.0


def test_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        fit_decay_rate([0, 1, 2, 3], [1, 0, 1, 1])
    with pytest.raises(ValueError):
        fit_decay_rate([0, 1], [1, 1], window_fraction=1.0)
    with pytest.raises(ValueError):
        fit_decay_rate([0, 1, 2], [1, 1, 1], window_fraction=0)


def synthetic_series(rate, n=60):
    t = np.linspace(0, 10, n)
    return [DiagnosticsRecord(ti, 1, 1, 0, 0, 1, 1, 1, 0, math.exp(-rate * ti), 0, 0) for ti in t]


def test_rate_check_arithmetic():
    assert rate_check(synthetic_series(0.30), 0.25).passed
    v = rate_check(synthetic_series(0.20), 0.25)
    assert v.status == "fail"
    assert v.fitted_rate == pytest.approx(0.20)
    assert not rate_verdict(0.2, 0.25) and rate_verdict(0.2125, 0.25)
    assert rate_check(synthetic_series(-0.1), 0.25).status == "non_converging"


def test_rate_check_with_theory_report():
    rep = theory_report(power_law(0.5), 1, 1.0, 1.0)
    assert rate_check(synthetic_series(0.6), rep).passed


def test_audit_constant_run(interval64):
    res = run(np.ones(64), SimConfig(t_end=1.0, dt=0.1), power_law(0.5), interval64)
    audit = lyapunov_audit(res.records, res.dt)
    assert audit.max_increase == 0.0
    assert audit.identity_residual == 0.0
    assert audit.monotone


def test_audit_on_perturbed_run(interval64):
    u0 = 1 + 0.5 * np.cos(interval64.centers[:, 0])
    res = run(u0, SimConfig(t_end=3.0, dt=0.01, convergence_tol=0), power_law(0.5), interval64)
    audit = lyapunov_audit(res.records, res.dt)
    assert audit.strictly_decreasing and audit.monotone
    sign = dissipation_sign_ok(res.records, power_law(0.5))
    assert sign["a1_certified"] and sign["passed"]
    assert mass_drift(res.records) < 1e-13
    with pytest.raises(ValueError):
        lyapunov_audit(res.records[:1])


def test_sign_check_skipped_without_certificate(interval64):
    u0 = 1 + 0.5 * np.cos(interval64.centers[:, 0])
    res = run(u0, SimConfig(t_end=0.2, dt=0.01, convergence_tol=0), power_law(1.5), interval64)
    sign = dissipation_sign_ok(res.records, power_law(1.5))
    assert not sign["a1_certified"] and sign["passed"] is None


def test_grow_up_trend():
    rising = synthetic_series(0.1)
    for i, r in enumerate(rising):
        r.max_v = 1 + 0.01 * i
    trend = grow_up_trend(rising)
    assert trend["increasing"] and trend["relative_growth"] > 0
    rising[-1].max_v = 0.5
    assert not grow_up_trend(rising)["increasing"]
