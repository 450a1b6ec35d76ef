"""Reproducible experiment sweeps, result containers, and config ingestion.

Every Monte-Carlo trial gets its own generator seeded by a stateless hash of
(master seed, point index, trial index), so results are independent of
execution order and worker count: the same spec and seed reproduce the same
result bit for bit, serial or parallel.

Feasibility sweeps grid over (eta, N), solve each trial by alternating
projection, and summarize per point; quantile boundaries then read off the
smallest N reaching a target feasibility fraction. Rate sweeps run the full
pipeline per trial (channels, nulling, conjugate-gradient polish, DoF probe).

Config files are flat JSON. Physical-unit aliases (``*_dbm``, ``*_db``,
``noise_psd_dbm_per_hz`` with ``bandwidth_hz``) are converted to linear
scales at parse time; everything downstream is linear.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from hashlib import sha256
from pathlib import Path

import numpy as np

from .channel import (
    GeometryScenario,
    SystemConfig,
    assemble_nulling_system,
    sample_channels,
    sample_geometric,
    surrogate_system,
    uniform_power,
)
from .nulling import ApOptions, alternating_projection
from .rates import (
    AscentOptions,
    DofEstimate,
    estimate_dof,
    rate_inputs_from_realization,
    rcg_maximize,
    sum_rate,
)

WORKERS_ENV = "RISNULL_WORKERS"

CHANNEL_MODES = ("exact-cascade", "gaussian-surrogate", "geometric")

_MASK64 = (1 << 64) - 1


class ConfigError(ValueError):
    """Raised for malformed or inconsistent configuration input."""


def _splitmix64(z: int) -> int:
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_trial_seed(master_seed: int, point_index: int, trial_index: int) -> int:
    """Stateless per-trial seed: nested 64-bit mixing of the three indices."""
    h = _splitmix64(master_seed & _MASK64)
    h = _splitmix64(h ^ (point_index & _MASK64))
    h = _splitmix64(h ^ (trial_index & _MASK64))
    return h


@dataclass(frozen=True)
class SweepSpec:
    """Declarative description of one sweep.

    ``channel_mode`` picks how each trial builds its system: full cascaded
    channels re-assembled per draw, a Gaussian surrogate with matched
    marginals, or distance-based scales from ``geometry`` (which then
    requires a single placeholder entry in ``eta_grid``; the measured ratio
    is reported instead).
    """

    config: SystemConfig
    n_grid: tuple[int, ...]
    eta_grid: tuple[float, ...]
    trials_per_point: int = 200
    channel_mode: str = "exact-cascade"
    master_seed: int = 0
    solver: ApOptions = field(default_factory=ApOptions)
    geometry: GeometryScenario | None = None

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "eta_grid", tuple(float(e) for e in self.eta_grid))
        if not self.n_grid or any(n < 1 for n in self.n_grid):
            raise ConfigError("n_grid must be a nonempty list of positive integers")
        if self.channel_mode not in CHANNEL_MODES:
            raise ConfigError(f"channel_mode must be one of {CHANNEL_MODES}")
        if self.channel_mode == "geometric":
            if self.geometry is None:
                raise ConfigError("geometric mode needs a geometry block")
            if len(self.eta_grid) != 1:
                raise ConfigError(
                    "geometric mode measures eta itself; give a single placeholder entry"
                )
        else:
            if not self.eta_grid or any(e < 0 for e in self.eta_grid):
                raise ConfigError("eta_grid must be a nonempty list of nonnegative ratios")
        if self.trials_per_point < 1:
            raise ConfigError("trials_per_point must be >= 1")

    @property
    def point_count(self) -> int:
        return len(self.n_grid) * len(self.eta_grid)


@dataclass
class PointResult:
    """Aggregate solver outcome at one (eta, N) grid point."""

    eta: float
    n: int
    trials: int
    feasible_count: int
    feasible_fraction: float
    mean_normalized_residual: float
    mean_iterations: float
    failures: int
    measured_eta: float


SWEEP_COLUMNS = [
    "eta",
    "n",
    "trials",
    "feasible_count",
    "feasible_fraction",
    "mean_normalized_residual",
    "mean_iterations",
    "failures",
    "measured_eta",
]


@dataclass
class SweepResult:
    """Point results in grid order plus full provenance for reproduction."""

    points: list[PointResult]
    provenance: dict

    columns = SWEEP_COLUMNS

    def to_rows(self) -> list[list]:
        return [[getattr(p, c) for c in self.columns] for p in self.points]

    def to_dict(self) -> dict:
        return {
            "kind": "feasibility_sweep",
            "provenance": self.provenance,
            "points": [dataclasses.asdict(p) for p in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SweepResult":
        return cls(
            points=[PointResult(**p) for p in d["points"]],
            provenance=d["provenance"],
        )


def _build_trial_system(spec: SweepSpec, n: int, eta: float, rng: np.random.Generator):
    """Returns (system, measured_eta) for one trial."""
    if spec.channel_mode == "gaussian-surrogate":
        sigma4 = spec.config.sigma4
        system = surrogate_system(spec.config.L, n, eta * sigma4, sigma4, rng)
        return system, eta
    if spec.channel_mode == "geometric":
        cfg = spec.config.with_updates(N=n)
        real = sample_geometric(spec.geometry, cfg, rng)
        system = assemble_nulling_system(real, uniform_power(cfg), cfg)
        return system, real.eta_effective
    cfg = spec.config.with_updates(N=n, eta=eta)
    real = sample_channels(cfg, rng)
    system = assemble_nulling_system(real, uniform_power(cfg), cfg)
    return system, eta


def _run_point(spec: SweepSpec, point_index: int, eta: float, n: int) -> PointResult:
    feasible = 0
    failures = 0
    residuals: list[float] = []
    iterations: list[float] = []
    measured: list[float] = []
    for t in range(spec.trials_per_point):
        rng = np.random.default_rng(derive_trial_seed(spec.master_seed, point_index, t))
        try:
            system, eta_meas = _build_trial_system(spec, n, eta, rng)
            outcome = alternating_projection(system, rng, spec.solver)
        except Exception:
            failures += 1
            continue
        feasible += int(outcome.feasible)
        residuals.append(outcome.normalized_residual)
        iterations.append(outcome.iterations)
        measured.append(eta_meas)
    done = spec.trials_per_point - failures
    return PointResult(
        eta=eta,
        n=n,
        trials=spec.trials_per_point,
        feasible_count=feasible,
        feasible_fraction=feasible / spec.trials_per_point,
        mean_normalized_residual=float(np.mean(residuals)) if residuals else math.nan,
        mean_iterations=float(np.mean(iterations)) if iterations else math.nan,
        failures=failures,
        measured_eta=float(np.mean(measured)) if measured else math.nan,
    )


def _point_args(spec: SweepSpec):
    idx = 0
    for eta in spec.eta_grid:
        for n in spec.n_grid:
            yield idx, eta, n
            idx += 1


def _worker(args) -> PointResult:
    spec, idx, eta, n = args
    return _run_point(spec, idx, eta, n)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    return workers


def _spec_provenance(spec: SweepSpec) -> dict:
    spec_dict = {
        "config": _config_as_dict(spec.config),
        "n_grid": list(spec.n_grid),
        "eta_grid": list(spec.eta_grid),
        "trials_per_point": spec.trials_per_point,
        "channel_mode": spec.channel_mode,
        "master_seed": spec.master_seed,
        "solver": dataclasses.asdict(spec.solver),
        "geometry": _geometry_as_dict(spec.geometry) if spec.geometry else None,
    }
    return {**spec_dict, "config_hash": config_hash(spec_dict)}


def feasibility_sweep(spec: SweepSpec, workers: int | None = None) -> SweepResult:
    """Run the full grid. Point order (and every float) is independent of
    ``workers``; parallelism only changes wall time."""
    workers = resolve_workers(workers)
    args = [(spec, idx, eta, n) for idx, eta, n in _point_args(spec)]
    if workers == 1 or len(args) == 1:
        points = [_worker(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_worker, args))
    return SweepResult(points=points, provenance=_spec_provenance(spec))


@dataclass
class QuantileBoundary:
    """Smallest N reaching feasibility fraction >= p, per eta (None if never)."""

    p: float
    entries: list[tuple[float, int | None]]

    def as_dict(self) -> dict:
        return {"p": self.p, "entries": [[e, n] for e, n in self.entries]}


def quantile_boundary(result: SweepResult, p: float) -> QuantileBoundary:
    if not (0.0 < p <= 1.0):
        raise ValueError(f"p must be in (0, 1], got {p}")
    by_eta: dict[float, int | None] = {}
    order: list[float] = []
    for point in result.points:
        if point.eta not in by_eta:
            by_eta[point.eta] = None
            order.append(point.eta)
        current = by_eta[point.eta]
        if point.feasible_fraction >= p and (current is None or point.n < current):
            by_eta[point.eta] = point.n
    return QuantileBoundary(p=p, entries=[(eta, by_eta[eta]) for eta in order])


@dataclass
class RateTrial:
    """Outcome of one end-to-end rate pipeline run."""

    feasible: bool
    w_start: float
    w_optimized: float
    ascent_iterations: int
    dof_null: DofEstimate
    dof_optimized: DofEstimate


def run_rate_trial(
    config: SystemConfig,
    rng: np.random.Generator,
    geometry: GeometryScenario | None = None,
    solver: ApOptions | None = None,
    ascent: AscentOptions | None = None,
    power_grid: tuple[float, float] | None = None,
) -> RateTrial:
    """Channels -> nulling -> rate polish -> DoF probes, one realization.

    DoF is estimated both at the nulling solution and at the rate-optimized
    phases; the two differ when the operating power makes residual
    interference irrelevant to the rate objective.
    """
    if geometry is not None:
        real = sample_geometric(geometry, config, rng)
    else:
        real = sample_channels(config, rng)
    alloc = uniform_power(config)
    system = assemble_nulling_system(real, alloc, config)
    outcome = alternating_projection(system, rng, solver)
    inputs = rate_inputs_from_realization(real, alloc, config)
    w_start = sum_rate(inputs, outcome.v).total
    ascent_result = rcg_maximize(inputs, outcome.v, ascent)
    return RateTrial(
        feasible=outcome.feasible,
        w_start=w_start,
        w_optimized=ascent_result.value,
        ascent_iterations=ascent_result.iterations,
        dof_null=estimate_dof(inputs, outcome.v, power_grid),
        dof_optimized=estimate_dof(inputs, ascent_result.v, power_grid),
    )


@dataclass
class RatePoint:
    """Aggregate rate-pipeline outcome at one (eta, N) grid point."""

    eta: float
    n: int
    trials: int
    feasible_count: int
    mean_sum_rate_start: float
    mean_sum_rate: float
    mean_total_dof: float
    mean_total_dof_optimized: float
    low_confidence_count: int
    failures: int


RATE_COLUMNS = [
    "eta",
    "n",
    "trials",
    "feasible_count",
    "mean_sum_rate_start",
    "mean_sum_rate",
    "mean_total_dof",
    "mean_total_dof_optimized",
    "low_confidence_count",
    "failures",
]


@dataclass
class RateTable:
    points: list[RatePoint]
    provenance: dict

    columns = RATE_COLUMNS

    def to_rows(self) -> list[list]:
        return [[getattr(p, c) for c in self.columns] for p in self.points]

    def to_dict(self) -> dict:
        return {
            "kind": "rate_sweep",
            "provenance": self.provenance,
            "points": [dataclasses.asdict(p) for p in self.points],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RateTable":
        return cls(points=[RatePoint(**p) for p in d["points"]], provenance=d["provenance"])


def rate_sweep(
    spec: SweepSpec,
    ascent: AscentOptions | None = None,
    power_grid: tuple[float, float] | None = None,
    workers: int | None = None,
) -> RateTable:
    """Rate pipeline over the sweep grid.

    The Gaussian surrogate has no desired links, hence no rates; only the
    exact-cascade and geometric modes are accepted.
    """
    if spec.channel_mode == "gaussian-surrogate":
        raise ConfigError("rate_sweep needs desired links; surrogate mode has none")
    workers = resolve_workers(workers)
    args = [(spec, idx, eta, n, ascent, power_grid) for idx, eta, n in _point_args(spec)]
    if workers == 1 or len(args) == 1:
        points = [_rate_worker(a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_rate_worker, args))
    return RateTable(points=points, provenance=_spec_provenance(spec))


def _rate_worker(args) -> RatePoint:
    spec, idx, eta, n, ascent, power_grid = args
    cfg = (
        spec.config.with_updates(N=n)
        if spec.channel_mode == "geometric"
        else spec.config.with_updates(N=n, eta=eta)
    )
    feasible = 0
    failures = 0
    w_start: list[float] = []
    w_opt: list[float] = []
    dof_null: list[float] = []
    dof_opt: list[float] = []
    low_conf = 0
    for t in range(spec.trials_per_point):
        rng = np.random.default_rng(derive_trial_seed(spec.master_seed, idx, t))
        try:
            trial = run_rate_trial(
                cfg, rng,
                geometry=spec.geometry if spec.channel_mode == "geometric" else None,
                solver=spec.solver, ascent=ascent, power_grid=power_grid,
            )
        except Exception:
            failures += 1
            continue
        feasible += int(trial.feasible)
        w_start.append(trial.w_start)
        w_opt.append(trial.w_optimized)
        dof_null.append(trial.dof_null.total)
        dof_opt.append(trial.dof_optimized.total)
        low_conf += int(trial.dof_null.low_confidence or trial.dof_optimized.low_confidence)
    return RatePoint(
        eta=eta,
        n=n,
        trials=spec.trials_per_point,
        feasible_count=feasible,
        mean_sum_rate_start=float(np.mean(w_start)) if w_start else math.nan,
        mean_sum_rate=float(np.mean(w_opt)) if w_opt else math.nan,
        mean_total_dof=float(np.mean(dof_null)) if dof_null else math.nan,
        mean_total_dof_optimized=float(np.mean(dof_opt)) if dof_opt else math.nan,
        low_confidence_count=low_conf,
        failures=failures,
    )


@dataclass
class PlainTable:
    """Minimal column/row container so ad-hoc reports export like sweeps."""

    columns: list
    rows: list
    provenance: dict = field(default_factory=dict)
    kind: str = "table"

    def to_rows(self) -> list[list]:
        return self.rows

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "provenance": self.provenance,
            "columns": self.columns,
            "rows": self.rows,
        }


# --- serialization -----------------------------------------------------------


def export(result, path: str | Path, fmt: str) -> None:
    """Write a result table to ``path`` as ``csv`` or ``json``."""
    path = Path(path)
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(result.columns)
            writer.writerows(result.to_rows())
    elif fmt == "json":
        with open(path, "w") as fh:
            json.dump(result.to_dict(), fh, indent=2)
            fh.write("\n")
    else:
        raise ConfigError(f"unknown format {fmt!r}; use csv or json")


def import_result_json(path: str | Path):
    """Load a previously exported JSON result (sweep or rate table)."""
    with open(path) as fh:
        d = json.load(fh)
    kind = d.get("kind")
    if kind == "feasibility_sweep":
        return SweepResult.from_dict(d)
    if kind == "rate_sweep":
        return RateTable.from_dict(d)
    raise ConfigError(f"unrecognized result kind {kind!r}")


_PLOT_TEMPLATE = '''\
#!/usr/bin/env python3
"""Render {kind} results. Usage: python {name} [results.csv] [out.png]"""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

path = sys.argv[1] if len(sys.argv) > 1 else {csv_path!r}
out = sys.argv[2] if len(sys.argv) > 2 else path.rsplit(".", 1)[0] + ".png"

with open(path) as fh:
    rows = list(csv.DictReader(fh))

y_field = {y_field!r}
series = {{}}
for row in rows:
    series.setdefault(float(row["eta"]), []).append(
        (int(row["n"]), float(row[y_field]))
    )

fig, ax = plt.subplots(figsize=(6, 4))
for eta, pts in sorted(series.items()):
    pts.sort()
    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"eta={{eta:g}}")
ax.set_xlabel("surface elements N")
ax.set_ylabel({y_label!r})
ax.grid(True, alpha=0.3)
ax.legend()
fig.tight_layout()
fig.savefig(out, dpi=150)
print(f"wrote {{out}}")
'''


def emit_plot_script(result, script_path: str | Path, csv_path: str | Path) -> None:
    """Write a standalone matplotlib script for a previously exported CSV."""
    script_path = Path(script_path)
    if "feasible_fraction" in result.columns:
        kind, y_field, y_label = "feasibility", "feasible_fraction", "feasible fraction"
    else:
        kind, y_field, y_label = "rate", "mean_sum_rate", "mean sum rate (bits/s/Hz)"
    script_path.write_text(
        _PLOT_TEMPLATE.format(
            kind=kind,
            name=script_path.name,
            csv_path=str(csv_path),
            y_field=y_field,
            y_label=y_label,
        )
    )


# --- config ingestion ---------------------------------------------------------


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


_CONFIG_KEYS = {
    "G", "M", "K", "N",
    "sigma1", "sigma2", "sigma3", "eta",
    "power_per_user", "noise_variance", "bandwidth", "master_seed",
}
_CONFIG_ALIASES = {
    "sigma1_sq_dbm", "sigma2_sq_dbm", "sigma3_sq_dbm",
    "power_dbm", "noise_psd_dbm_per_hz", "bandwidth_hz",
}
_SWEEP_KEYS = {
    "n_grid", "eta_grid", "trials_per_point", "channel_mode",
    "eps_feas", "max_iters", "restarts", "geometry", "workers",
}
_EXTRA_KEYS = {
    # threshold and validation knobs consumed by the CLI
    "L", "c", "c1", "c2", "c_bar", "m_list", "l_list",
    "check", "trials", "sigma", "rho", "placements", "power_grid",
}
KNOWN_KEYS = _CONFIG_KEYS | _CONFIG_ALIASES | _SWEEP_KEYS | _EXTRA_KEYS


def load_config_file(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise FileNotFoundError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    return data


def apply_overrides(config: dict, sets: list[str]) -> dict:
    """Apply ``key=value`` overrides; values parse as JSON, else raw strings."""
    out = dict(config)
    for item in sets:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def validate_keys(config: dict) -> None:
    unknown = set(config) - KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")


def config_from_dict(d: dict) -> SystemConfig:
    """Build a system config, converting physical-unit aliases to linear."""
    kw = {k: d[k] for k in _CONFIG_KEYS if k in d}
    if "sigma1_sq_dbm" in d:
        kw["sigma1"] = math.sqrt(dbm_to_watts(d["sigma1_sq_dbm"]))
    if "sigma2_sq_dbm" in d:
        kw["sigma2"] = math.sqrt(dbm_to_watts(d["sigma2_sq_dbm"]))
    if "sigma3_sq_dbm" in d:
        kw["sigma3"] = math.sqrt(dbm_to_watts(d["sigma3_sq_dbm"]))
    if "power_dbm" in d:
        kw["power_per_user"] = dbm_to_watts(d["power_dbm"])
    if "bandwidth_hz" in d:
        kw["bandwidth"] = float(d["bandwidth_hz"])
    if "noise_psd_dbm_per_hz" in d:
        bandwidth = kw.get("bandwidth", 1.0)
        kw["noise_variance"] = dbm_to_watts(d["noise_psd_dbm_per_hz"]) * bandwidth
    if "sigma3" in kw and "eta" in kw:
        raise ConfigError("give sigma3 or eta, not both")
    for name in ("G", "M", "K", "N"):
        if name not in kw:
            raise ConfigError(f"config is missing required key {name!r}")
        kw[name] = int(kw[name])
    try:
        return SystemConfig(**kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def geometry_from_dict(d) -> GeometryScenario:
    if d == "two-cell-default" or d == {"preset": "two-cell-default"}:
        return GeometryScenario.two_cell_default()
    if not isinstance(d, dict):
        raise ConfigError("geometry must be an object or the name of a preset")
    kw = dict(d)
    if "t0_db" in kw:
        kw["t0"] = db_to_linear(kw.pop("t0_db"))
    try:
        return GeometryScenario(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad geometry block: {exc}") from exc


def sweep_spec_from_dict(d: dict) -> SweepSpec:
    validate_keys(d)
    config = config_from_dict(d)
    if "n_grid" not in d:
        raise ConfigError("sweep needs an n_grid")
    solver_kw = {k: d[k] for k in ("eps_feas", "max_iters", "restarts") if k in d}
    geometry = geometry_from_dict(d["geometry"]) if "geometry" in d else None
    mode = d.get("channel_mode", "exact-cascade")
    eta_grid = d.get("eta_grid")
    if eta_grid is None:
        eta_grid = [math.nan] if mode == "geometric" else [config.eta]
    try:
        return SweepSpec(
            config=config,
            n_grid=tuple(d["n_grid"]),
            eta_grid=tuple(eta_grid),
            trials_per_point=int(d.get("trials_per_point", 200)),
            channel_mode=mode,
            master_seed=int(d.get("master_seed", 0)),
            solver=ApOptions(**solver_kw),
            geometry=geometry,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _config_as_dict(config: SystemConfig) -> dict:
    return {
        "G": config.G, "M": config.M, "K": config.K, "N": config.N,
        "sigma1": config.sigma1, "sigma2": config.sigma2, "sigma3": config.sigma3,
        "eta": config.eta, "power_per_user": config.power_per_user,
        "noise_variance": config.noise_variance, "bandwidth": config.bandwidth,
        "master_seed": config.master_seed,
    }


def _geometry_as_dict(geometry: GeometryScenario) -> dict:
    return {
        "ris_position": geometry.ris_position.tolist(),
        "bs_positions": geometry.bs_positions.tolist(),
        "user_x_ranges": geometry.user_x_ranges.tolist(),
        "user_y_ranges": geometry.user_y_ranges.tolist(),
        "user_z": geometry.user_z,
        "t0": geometry.t0,
        "alpha_reflect": geometry.alpha_reflect,
        "alpha_direct": geometry.alpha_direct,
    }


def config_hash(d: dict) -> str:
    """Short stable digest of a config dict (canonical JSON, first 12 hex)."""
    canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
    return sha256(canon.encode()).hexdigest()[:12]
