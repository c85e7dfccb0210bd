"""Scenario registry, initial data, run manifests and parameter sweeps."""

from __future__ import annotations

import copy
import csv
import hashlib
import itertools
import json
import logging
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from . import __version__
from .diagnostics import (
    DiagnosticsRecord,
    dissipation_sign_ok,
    fit_decay_rate,
    grow_up_trend,
    lyapunov_audit,
    mass_drift,
    rate_check,
)
from .elliptic import HelmholtzSolver
from .grid import Grid, integrate, mean, neumann_mu1
from .integrator import RunResult, SimConfig, run
from .motility import MotilitySpec
from .theory import scaling_partner, theory_report

logger = logging.getLogger(__name__)

OUTPUT_ENV = "KSLAB_OUTPUT_DIR"
CHECKS = ("mass", "lyapunov", "envelope", "rate", "scaling", "grow-up-trend", "bounded")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PHYSICS = 2
EXIT_INVARIANT = 3

DEFAULT_OPTIONS = {
    "rate_delta": 0.15,
    "rate_window": 0.5,
    "rate_min_r_squared": 0.99,
    "rate_dist_u_tol": 1e-6,
    "eps_scheme": 0.1,
    "mass_tol": 1e-10,
    "positivity_tol": 1e-12,
    "envelope_tol": 1e-8,
    "d2_tol": 1e-10,
    "bounded_factor": 2.0,
    "scaling_lambda": 2.0,
    "scaling_tol": 5e-3,
    "vstar": None,
    "snapshots": False,
}


class ScenarioError(ValueError):
    pass


# --------------------------------------------------------------------------
# initial data


def generate_initial(spec: dict[str, Any], grid: Grid, seed: int = 0) -> np.ndarray:
    """Nonnegative, not identically zero initial density.

    Supported kinds:

    * ``constant_plus_cosine``: ``base + amplitude * p`` where ``p`` is
      ``cos(mode π x / L)`` along the first axis with its discrete mean removed
    * ``gaussian_bump``: ``background`` plus a Gaussian of standard deviation
      ``width`` at ``center``, scaled so the total mass is ``target_mass``
    * ``random_perturbation``: ``base + amplitude * U(-1, 1)`` per cell, drawn
      from ``seed`` (or the run seed)
    """
    kind = spec.get("kind")
    x = grid.centers
    if kind == "constant_plus_cosine":
        base = float(spec.get("base", 1.0))
        amp = float(spec.get("amplitude", 0.5))
        mode = int(spec.get("mode", 1))
        if abs(amp) >= base:
            raise ScenarioError("amplitude must be smaller than the base constant")
        p = np.cos(mode * math.pi * x[:, 0] / grid.extents[0])
        p -= mean(grid, p)
        u = base + amp * p
    elif kind == "gaussian_bump":
        width = float(spec.get("width", 0.3))
        target = float(spec["target_mass"])
        background = float(spec.get("background", 0.0))
        if target <= 0 or width <= 0 or background < 0:
            raise ScenarioError("gaussian_bump needs target_mass > 0, width > 0, background >= 0")
        if grid.geometry == "radial_ball":
            center = np.zeros(1)
        else:
            center = np.asarray(spec.get("center", [L / 2 for L in grid.extents]), dtype=float)
        bump = np.exp(-np.sum((x - center) ** 2, axis=1) / (2 * width**2))
        rest = target - background * float(grid.cell_volumes.sum())
        if rest <= 0:
            raise ScenarioError("background alone exceeds target_mass")
        u = background + bump * (rest / integrate(grid, bump))
    elif kind == "random_perturbation":
        base = float(spec.get("base", 1.0))
        amp = float(spec.get("amplitude", 0.1))
        if abs(amp) >= base:
            raise ScenarioError("amplitude must be smaller than the base constant")
        rng = np.random.default_rng(int(spec.get("seed", seed)))
        u = base + amp * rng.uniform(-1.0, 1.0, grid.num_cells)
    else:
        raise ScenarioError(f"unknown initial-data kind {kind!r}")
    if np.any(u < 0) or not np.any(u > 0):
        raise ScenarioError("initial density must be nonnegative and not identically zero")
    return u


# --------------------------------------------------------------------------
# scenarios


@dataclass
class Scenario:
    name: str
    grid: dict[str, Any]
    motility: dict[str, Any]
    initial: dict[str, Any]
    config: dict[str, Any]
    expected_exit: str | None = None
    checks: list[str] = field(default_factory=list)
    options: dict[str, Any] = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        unknown = set(self.checks) - set(CHECKS)
        if unknown:
            raise ScenarioError(f"unknown checks {sorted(unknown)}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "grid": self.grid,
            "motility": self.motility,
            "initial": self.initial,
            "config": self.config,
            "expected_exit": self.expected_exit,
            "checks": list(self.checks),
            "options": self.options,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Scenario:
        return cls(
            name=data["name"],
            grid=data["grid"],
            motility=data["motility"],
            initial=data["initial"],
            config=data.get("config", {}),
            expected_exit=data.get("expected_exit"),
            checks=list(data.get("checks", [])),
            options=dict(data.get("options", {})),
            description=data.get("description", ""),
        )

    def build(self) -> tuple[Grid, MotilitySpec, SimConfig]:
        return (
            Grid.from_dict(self.grid),
            MotilitySpec.from_dict(self.motility),
            SimConfig.from_dict(self.config),
        )

    def option(self, key: str) -> Any:
        return self.options.get(key, DEFAULT_OPTIONS[key])

    def config_hash(self) -> str:
        return canonical_hash({"scenario": self.to_dict(), "version": __version__})


def canonical_hash(obj: Any) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def scenario_names() -> list[str]:
    pkg = resources.files("kslab") / "scenarios"
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))


def load_scenario(name_or_path: str | os.PathLike) -> Scenario:
    path = Path(name_or_path)
    if path.suffix == ".json" and path.exists():
        return Scenario.from_dict(json.loads(path.read_text()))
    res = resources.files("kslab") / "scenarios" / f"{name_or_path}.json"
    if not res.is_file():
        raise ScenarioError(f"unknown scenario {name_or_path!r}; known: {scenario_names()}")
    return Scenario.from_dict(json.loads(res.read_text()))


def parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(scenario: Scenario, overrides: dict[str, Any] | Iterable[str]) -> Scenario:
    """Return a copy with dotted-path overrides applied.

    ``overrides`` is a mapping such as ``{"motility.params.k": 0.75}`` or a
    list of ``"key=value"`` strings whose values are parsed as JSON.
    """
    if not isinstance(overrides, dict):
        pairs = {}
        for item in overrides:
            if "=" not in item:
                raise ScenarioError(f"override {item!r} is not of the form key=value")
            key, val = item.split("=", 1)
            pairs[key.strip()] = parse_value(val.strip())
        overrides = pairs
    data = copy.deepcopy(scenario.to_dict())
    for key, val in overrides.items():
        parts = key.split(".")
        node = data
        for p in parts[:-1]:
            if not isinstance(node.get(p), dict):
                if p in node:
                    raise ScenarioError(f"cannot override into non-mapping {key!r}")
                node[p] = {}
            node = node[p]
        node[parts[-1]] = val
    out = Scenario.from_dict(data)
    out.build()  # type-check the result
    return out


# --------------------------------------------------------------------------
# output


def output_root(out_dir: str | os.PathLike | None = None) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    return Path(os.environ.get(OUTPUT_ENV, "runs"))


def write_series_csv(records: list[DiagnosticsRecord], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(DiagnosticsRecord.columns())
        for r in records:
            writer.writerow([repr(float(x)) for x in r.row()])


def read_series_csv(path: Path) -> list[DiagnosticsRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != DiagnosticsRecord.columns():
            raise ValueError(f"unexpected series header in {path}")
        return [DiagnosticsRecord(*map(float, row)) for row in reader]


def write_snapshot(path: Path, grid: Grid, u: np.ndarray, v: np.ndarray, t: float) -> None:
    """One JSON header line with the grid descriptor, then one CSV row per cell."""
    with open(path, "w", newline="") as fh:
        fh.write(json.dumps({"grid": grid.to_dict(), "t": t}) + "\n")
        writer = csv.writer(fh)
        axes = ["r"] if grid.geometry == "radial_ball" else ["x", "y"][: len(grid.extents)]
        writer.writerow(["index", *axes, "u", "v"])
        for i, (c, ui, vi) in enumerate(zip(grid.centers, u, v)):
            writer.writerow([i, *(repr(float(ci)) for ci in c), repr(float(ui)), repr(float(vi))])


def read_snapshot(path: Path) -> tuple[Grid, float, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        header = json.loads(fh.readline())
        rows = list(csv.reader(fh))[1:]
    arr = np.array([[float(x) for x in r] for r in rows])
    return Grid.from_dict(header["grid"]), header["t"], arr[:, -2], arr[:, -1]


def write_json_atomic(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True, allow_nan=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# checks


def scaling_check(
    grid: Grid, spec: MotilitySpec, u0: np.ndarray, lam: float, t_end: float, dt: float
) -> dict[str, Any]:
    """Compare a direct run from ``lam * u0`` with the rescaled run from ``u0``.

    Both runs use the same time step, so the mismatch measures the time
    discretization error rather than an exact discrete symmetry.
    """
    k = spec.params["k"]
    cfg = dict(convergence_tol=0.0, blowup_threshold=1e300, dt=dt)
    base = run(u0, SimConfig(t_end=lam ** (-k) * t_end, **cfg), spec, grid, keep_trajectory=True)
    direct = run(lam * u0, SimConfig(t_end=t_end, **cfg), spec, grid, keep_trajectory=True)
    _, U = scaling_partner(
        spec, lam, base.times, np.array(base.trajectory), np.array(direct.times)
    )
    err = float(np.max(np.abs(U - np.array(direct.trajectory))))
    return {"sup_error": err, "lambda": lam, "t_end": t_end, "dt": dt}


def evaluate_checks(
    scenario: Scenario, result: RunResult, grid: Grid, spec: MotilitySpec, theory, u0
) -> dict[str, dict[str, Any]]:
    """Verdicts for the invariants and the requested physics checks."""
    recs = result.records
    opt = scenario.option
    verdicts: dict[str, dict[str, Any]] = {}

    drift = mass_drift(recs)
    verdicts["mass"] = {"kind": "invariant", "drift": drift, "passed": drift < opt("mass_tol")}
    floor = -opt("positivity_tol") * float(np.max(u0))
    verdicts["positivity"] = {
        "kind": "invariant",
        "min_u": result.min_u,
        "passed": result.min_u >= floor,
    }
    if scenario.expected_exit:
        verdicts["exit_event"] = {
            "kind": "physics",
            "expected": scenario.expected_exit,
            "actual": result.exit_event,
            "passed": scenario.expected_exit == result.exit_event,
        }
    checks = set(scenario.checks)
    if "lyapunov" in checks:
        audit = lyapunov_audit(recs, result.dt, opt("eps_scheme"))
        sign = dissipation_sign_ok(recs, spec, opt("d2_tol"))
        ok = audit.monotone and sign["passed"] is not False
        verdicts["lyapunov"] = {"kind": "physics", **audit.to_dict(), **sign, "passed": ok}
    if "envelope" in checks:
        margin = float(min(r.envelope_margin for r in recs))
        verdicts["envelope"] = {
            "kind": "physics",
            "min_margin": margin,
            "passed": margin >= -opt("envelope_tol"),
        }
    if "rate" in checks:
        rv = rate_check(recs, theory, opt("rate_delta"), opt("rate_window"))
        dist_u = recs[-1].dist_u
        ok = (
            rv.passed
            and rv.r_squared > opt("rate_min_r_squared")
            and dist_u < opt("rate_dist_u_tol")
        )
        verdicts["rate"] = {"kind": "physics", **rv.to_dict(), "final_dist_u": dist_u, "passed": ok}
    if "grow-up-trend" in checks:
        trend = grow_up_trend(recs)
        verdicts["grow-up-trend"] = {"kind": "physics", **trend, "passed": trend["increasing"]}
    if "bounded" in checks:
        peak = max(r.max_v for r in recs)
        limit = opt("bounded_factor") * recs[0].max_v
        verdicts["bounded"] = {"kind": "physics", "max_v": peak, "limit": limit, "passed": peak < limit}
    if "scaling" in checks:
        if spec.kind != "power_law":
            raise ScenarioError("scaling check needs power-law motility")
        cfg = SimConfig.from_dict(scenario.config)
        dt = cfg.dt if cfg.dt is not None else result.dt
        sc = scaling_check(grid, spec, u0, opt("scaling_lambda"), cfg.t_end, dt)
        verdicts["scaling"] = {"kind": "physics", **sc, "passed": sc["sup_error"] < opt("scaling_tol")}
    return verdicts


def exit_code_for(verdicts: dict[str, dict[str, Any]]) -> int:
    failed = [v for v in verdicts.values() if not v["passed"]]
    if any(v["kind"] == "invariant" for v in failed):
        return EXIT_INVARIANT
    if failed:
        return EXIT_PHYSICS
    return EXIT_OK


# --------------------------------------------------------------------------
# running


@dataclass
class RunManifest:
    data: dict[str, Any]
    path: Path | None = None
    result: RunResult | None = field(default=None, repr=False)

    @property
    def exit_code(self) -> int:
        return self.data["exit_code"]

    @property
    def verdicts(self) -> dict[str, dict[str, Any]]:
        return self.data["verdicts"]

    @property
    def directory(self) -> Path | None:
        return self.path.parent if self.path else None

    @classmethod
    def load(cls, path: str | os.PathLike) -> RunManifest:
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        return cls(json.loads(path.read_text()), path)


def run_scenario(
    scenario: str | Scenario,
    overrides: dict[str, Any] | Iterable[str] | None = None,
    out_dir: str | os.PathLike | None = None,
    *,
    write: bool = True,
) -> RunManifest:
    """Run a scenario and its checks, writing series CSV, snapshots and manifest.

    Artifacts go to ``<out_dir>/<name>-<hash8>/``; ``out_dir`` defaults to
    ``$KSLAB_OUTPUT_DIR`` or ``./runs``.
    """
    start = time.perf_counter()
    if not isinstance(scenario, Scenario):
        scenario = load_scenario(scenario)
    if overrides:
        scenario = apply_overrides(scenario, overrides)
    grid, spec, config = scenario.build()
    u0 = generate_initial(scenario.initial, grid, config.seed)
    solver = HelmholtzSolver(grid)

    snapshots: list[tuple[float, np.ndarray, np.ndarray]] = []
    on_record = None
    if scenario.option("snapshots"):
        def on_record(state):
            snapshots.append((state.t, state.u.copy(), state.v.copy()))

    result = run(u0, config, spec, grid, solver, on_record=on_record)
    if not snapshots:
        snapshots = [(0.0, u0, result.v0), (result.state.t, result.state.u, result.state.v)]

    vstar_opt = scenario.option("vstar")
    vstar = float(vstar_opt) if vstar_opt is not None else result.vstar
    theory = theory_report(
        spec, grid.ambient_dim, neumann_mu1(grid), vstar,
        "configured" if vstar_opt is not None else "empirical",
    )
    verdicts = evaluate_checks(scenario, result, grid, spec, theory, u0)
    code = exit_code_for(verdicts)

    chash = scenario.config_hash()
    data = {
        "scenario": scenario.to_dict(),
        "config_hash": chash,
        "version": __version__,
        "theory": theory.to_dict(),
        "exit_event": result.exit_event,
        "final_time": result.state.t,
        "steps": result.state.step,
        "dt": result.dt,
        "verdicts": verdicts,
        "exit_code": code,
        "artifacts": {},
    }
    manifest = RunManifest(data, None, result)
    if write:
        run_dir = output_root(out_dir) / f"{scenario.name}-{chash[:8]}"
        snap_dir = run_dir / "snapshots"
        snap_dir.mkdir(parents=True, exist_ok=True)
        write_series_csv(result.records, run_dir / "series.csv")
        names = []
        for i, (t, u, v) in enumerate(snapshots):
            name = f"snapshot_{i:05d}.csv"
            write_snapshot(snap_dir / name, grid, u, v, t)
            names.append(f"snapshots/{name}")
        data["artifacts"] = {"series": "series.csv", "snapshots": names}
        data["wall_clock_s"] = time.perf_counter() - start
        manifest.path = run_dir / "manifest.json"
        write_json_atomic(manifest.path, data)
    else:
        data["wall_clock_s"] = time.perf_counter() - start
    return manifest


# --------------------------------------------------------------------------
# sweeps


def expand_grid(grid_spec: dict[str, list] | list[dict[str, Any]]) -> list[dict[str, Any]]:
    """Override sets for a sweep, in declared order.

    A mapping of dotted keys to value lists expands to the Cartesian product
    with the first key varying slowest; a list of mappings is used as is.
    """
    if isinstance(grid_spec, list):
        return [dict(item) for item in grid_spec]
    if not grid_spec:
        return []
    keys = list(grid_spec)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid_spec[k] for k in keys))]


def _sweep_cell(args) -> dict[str, Any]:
    scenario_dict, overrides, out_dir = args
    row: dict[str, Any] = {}
    try:
        man = run_scenario(Scenario.from_dict(scenario_dict), overrides, out_dir)
        recs = man.result.records
        row["exit_event"] = man.data["exit_event"]
        row["exit_code"] = man.exit_code
        try:
            slope, r2 = fit_decay_rate([r.t for r in recs], [r.dist_v_h1 for r in recs])
            row["fitted_rate"], row["r_squared"] = -slope, r2
        except ValueError:
            row["fitted_rate"], row["r_squared"] = math.nan, math.nan
        row["max_v_trend"] = grow_up_trend(recs)["relative_growth"]
        row["peak_to_mean"] = recs[-1].max_v / (recs[-1].mass / float(
            Grid.from_dict(man.data["scenario"]["grid"]).cell_volumes.sum()))
        row["manifest"] = str(man.path)
        row["error"] = ""
    except Exception as exc:  # recorded per row; the sweep continues
        logger.exception("sweep cell failed")
        row.update(exit_event="", exit_code=EXIT_ERROR, fitted_rate=math.nan,
                   r_squared=math.nan, max_v_trend=math.nan, peak_to_mean=math.nan,
                   manifest="", error=f"{type(exc).__name__}: {exc}")
    return row


SWEEP_COLUMNS = ["exit_event", "exit_code", "fitted_rate", "r_squared", "max_v_trend",
                 "peak_to_mean", "manifest", "error"]


def sweep(
    base: str | Scenario,
    grid_spec: dict[str, list] | list[dict[str, Any]],
    out_dir: str | os.PathLike | None = None,
    workers: int | None = None,
) -> tuple[list[dict[str, Any]], Path]:
    """Run every override set of ``grid_spec`` and write ``aggregate.csv``.

    Runs execute in a process pool; rows keep the declared grid order.

    Returns:
        tuple: the aggregate rows and the path of the aggregate CSV.
    """
    if not isinstance(base, Scenario):
        base = load_scenario(base)
    cells = expand_grid(grid_spec)
    root = output_root(out_dir) / f"sweep-{base.name}-{canonical_hash([base.to_dict(), cells])[:8]}"
    root.mkdir(parents=True, exist_ok=True)
    jobs = [(base.to_dict(), cell, str(root)) for cell in cells]
    if workers == 1 or len(jobs) <= 1:
        results = [_sweep_cell(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, jobs))
    keys = list(dict.fromkeys(k for cell in cells for k in cell))
    rows = [{"index": i, **{k: cell.get(k) for k in keys}, **res}
            for i, (cell, res) in enumerate(zip(cells, results))]
    path = root / "aggregate.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", *keys, *SWEEP_COLUMNS])
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in ["index", *keys, *SWEEP_COLUMNS]])
    return rows, path


def _fmt(value: Any) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, dict)):
        return json.dumps(value)
    return "" if value is None else str(value)
