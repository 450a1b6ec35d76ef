"""Command-line front end.

Every subcommand reads a flat JSON config (``--config``), applies ``--set
key=value`` overrides, and optionally writes results with ``--out`` /
``--format``. Exit codes: 0 success, 1 invalid configuration or arguments,
2 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness
from .channel import direct_to_cascade_ratios, sample_user_positions
from .harness import (
    ConfigError,
    PlainTable,
    apply_overrides,
    config_from_dict,
    config_hash,
    export,
    feasibility_sweep,
    geometry_from_dict,
    load_config_file,
    quantile_boundary,
    rate_sweep,
    resolve_workers,
    sweep_spec_from_dict,
    validate_keys,
)
from .nulling import alternating_projection
from .thresholds import (
    ThresholdConfig,
    antenna_collab_feasible,
    rank_evidence,
    threshold_report,
    validate_gaussian_norm,
    validate_pinv_shift_norm,
    validate_sphere_projection_bounds,
    validate_torus_projection_bounds,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="risnull",
        description="Interference-nulling feasibility, thresholds, and rate experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("thresholds", "closed-form element-count thresholds"),
        ("solve", "run the phase solver on one realization"),
        ("sweep", "feasibility sweep over an (eta, N) grid"),
        ("rate", "sum-rate and DoF sweep over the grid"),
        ("geo", "measure the direct-to-cascade ratio of a layout"),
        ("validate", "Monte-Carlo checks of the statistical building blocks"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (value parsed as JSON)")
        p.add_argument("--out", help="write results to this path")
        p.add_argument("--format", choices=["csv", "json"], default="csv",
                       help="output format for --out (default csv)")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--workers", type=int, help="parallel workers (default env or 1)")
    return parser


def _gather_config(args) -> dict:
    config = load_config_file(args.config) if args.config else {}
    config = apply_overrides(config, args.set)
    if args.seed is not None:
        config["master_seed"] = args.seed
    validate_keys(config)
    return config


def _maybe_export(result, args) -> None:
    if args.out:
        export(result, args.out, args.format)
        print(f"wrote {args.out}")


def _threshold_l_values(config: dict) -> list[int]:
    if "l_list" in config:
        return [int(x) for x in config["l_list"]]
    if "m_list" in config:
        g = int(config.get("G", 2))
        return [g * int(m) * (g * int(m) - 1) for m in config["m_list"]]
    if "L" in config:
        return [int(config["L"])]
    if "G" in config and "M" in config:
        g, m = int(config["G"]), int(config["M"])
        return [g * m * (g * m - 1)]
    raise ConfigError("thresholds needs L, l_list, m_list, or G and M")


def cmd_thresholds(args) -> int:
    config = _gather_config(args)
    eta = float(config.get("eta", 0.0))
    knobs = {k: config[k] for k in ("c", "c1", "c2", "c_bar") if k in config}
    reports = [
        threshold_report(ThresholdConfig(L=L, eta=eta, **knobs))
        for L in _threshold_l_values(config)
    ]
    columns = list(reports[0].as_dict().keys())
    table = PlainTable(
        columns=columns,
        rows=[list(r.as_dict().values()) for r in reports],
        provenance={"config_hash": config_hash(config), "eta": eta},
        kind="thresholds",
    )
    print(f"{'L':>5} {'eta':>8} {'necessary':>10} {'evs':>8} {'refined':>8} {'sufficient':>11}")
    for r in reports:
        print(
            f"{r.L:>5} {r.eta:>8.3f} {r.n_necessary_int:>10} {r.n_evs_int:>8} "
            f"{r.n_refined_int:>8} {r.n_sufficient_int:>11}"
        )
    _maybe_export(table, args)
    return EXIT_OK


def cmd_solve(args) -> int:
    config = _gather_config(args)
    if "n_grid" not in config:
        if "N" not in config:
            raise ConfigError("solve needs N (or an n_grid)")
        config = {**config, "n_grid": [int(config["N"])]}
    spec = sweep_spec_from_dict(config)
    rng = np.random.default_rng(spec.master_seed)
    system, eta_meas = harness._build_trial_system(
        spec, spec.n_grid[0], spec.eta_grid[0], rng
    )
    outcome = alternating_projection(system, rng, spec.solver)
    summary = {
        "feasible": outcome.feasible,
        "residual": outcome.residual,
        "normalized_residual": outcome.normalized_residual,
        "iterations": outcome.iterations,
        "restarts_used": outcome.restarts_used,
        "rank_deficient": outcome.rank_deficient,
        "N": system.N,
        "L": system.L,
        "eta": eta_meas,
    }
    print(json.dumps(summary, indent=2))
    if args.out:
        if args.format == "json":
            payload = {
                **summary,
                "v_real": outcome.v.real.tolist(),
                "v_imag": outcome.v.imag.tolist(),
            }
            with open(args.out, "w") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
            print(f"wrote {args.out}")
        else:
            table = PlainTable(columns=list(summary), rows=[list(summary.values())],
                               kind="solve")
            _maybe_export(table, args)
    return EXIT_OK


def cmd_sweep(args) -> int:
    config = _gather_config(args)
    spec = sweep_spec_from_dict(config)
    workers = args.workers if args.workers is not None else config.get("workers")
    result = feasibility_sweep(spec, workers=workers)
    print(f"{'eta':>10} {'N':>6} {'feasible':>9} {'fraction':>9} {'mean iters':>11}")
    for p in result.points:
        print(
            f"{p.eta:>10.4g} {p.n:>6} {p.feasible_count:>9} "
            f"{p.feasible_fraction:>9.3f} {p.mean_iterations:>11.1f}"
        )
    for q in (0.01, 0.5, 0.99):
        boundary = quantile_boundary(result, q)
        entries = ", ".join(
            f"eta={eta:g}: N={'-' if n is None else n}" for eta, n in boundary.entries
        )
        print(f"boundary p={q}: {entries}")
    _maybe_export(result, args)
    if args.out and args.format == "csv":
        script = str(args.out) + ".plot.py"
        harness.emit_plot_script(result, script, args.out)
        print(f"wrote {script}")
    return EXIT_OK


def cmd_rate(args) -> int:
    config = _gather_config(args)
    spec = sweep_spec_from_dict(config)
    workers = args.workers if args.workers is not None else config.get("workers")
    power_grid = tuple(config["power_grid"]) if "power_grid" in config else None
    result = rate_sweep(spec, power_grid=power_grid, workers=workers)
    print(f"{'eta':>10} {'N':>6} {'W start':>9} {'W opt':>9} {'DoF null':>9} {'DoF opt':>9}")
    for p in result.points:
        print(
            f"{p.eta:>10.4g} {p.n:>6} {p.mean_sum_rate_start:>9.3f} "
            f"{p.mean_sum_rate:>9.3f} {p.mean_total_dof:>9.3f} "
            f"{p.mean_total_dof_optimized:>9.3f}"
        )
    _maybe_export(result, args)
    return EXIT_OK


def cmd_geo(args) -> int:
    config = _gather_config(args)
    geometry = geometry_from_dict(config.get("geometry", "two-cell-default"))
    base = {k: config[k] for k in ("G", "M", "K", "N") if k in config}
    base.setdefault("G", geometry.G)
    base.setdefault("M", 1)
    base.setdefault("K", base["M"])
    base.setdefault("N", 1)
    sys_cfg = config_from_dict({**base, "eta": 0.0})
    placements = int(config.get("placements", 10000))
    rng = np.random.default_rng(int(config.get("master_seed", 0)))
    ratios = np.concatenate([
        direct_to_cascade_ratios(
            geometry, sample_user_positions(geometry, sys_cfg, rng)
        ).reshape(-1)
        for _ in range(placements)
    ])
    per_cell = ratios.reshape(placements, sys_cfg.G, sys_cfg.K).mean(axis=(0, 2))
    overall = float(ratios.mean())
    rows = [["mean_eta", overall], ["std_eta", float(ratios.std())]]
    rows += [[f"mean_eta_cell_{g}", float(per_cell[g])] for g in range(sys_cfg.G)]
    if "M" in config and "G" in config:
        L = sys_cfg.L
        report = threshold_report(ThresholdConfig(L=L, eta=overall))
        rows += [
            ["L", L],
            ["n_necessary_int", report.n_necessary_int],
            ["n_refined_int", report.n_refined_int],
            ["n_sufficient_int", report.n_sufficient_int],
        ]
    table = PlainTable(columns=["quantity", "value"], rows=rows,
                       provenance={"config_hash": config_hash(config),
                                   "placements": placements},
                       kind="geometry")
    for name, value in rows:
        print(f"{name:>22}: {value:g}" if isinstance(value, float) else f"{name:>22}: {value}")
    _maybe_export(table, args)
    return EXIT_OK


def cmd_validate(args) -> int:
    config = _gather_config(args)
    check = config.get("check", "all")
    rng = np.random.default_rng(int(config.get("master_seed", 0)))
    trials = config.get("trials")
    rows = []

    def note(name, passed, detail):
        rows.append([name, "PASS" if passed else "FAIL", detail])
        print(f"{name:>15}: {'PASS' if passed else 'FAIL'}  ({detail})")

    if check in ("torus-bounds", "all"):
        r = validate_torus_projection_bounds(
            int(config.get("L", 2)), int(config.get("N", 8)),
            float(config.get("sigma", 1.0)), int(trials or 50), rng)
        note("torus-bounds", r.passed,
             f"min {r.mean_min:.3f} vs >= {r.lower_bound:.3f}, "
             f"max {r.mean_max:.3f} vs <= {r.upper_bound:.3f}")
    if check in ("sphere-bounds", "all"):
        r = validate_sphere_projection_bounds(
            int(config.get("L", 2)), int(config.get("N", 8)),
            float(config.get("sigma", 1.0)), int(trials or 100), rng)
        note("sphere-bounds", r.passed,
             f"min {r.mean_min:.3f} vs >= {r.lower_bound:.3f}, "
             f"max {r.mean_max:.3f} vs <= {r.upper_bound:.3f}")
    if check in ("gaussian-norm", "all"):
        r = validate_gaussian_norm(
            int(config.get("L", 100)), float(config.get("sigma", 1.0)),
            int(trials or 4000), rng)
        note("gaussian-norm", r.passed,
             f"mean {r.mean:.4f} vs sqrt(L)*sigma {r.asymptotic:.4f}")
    if check in ("pinv-norm", "all"):
        r = validate_pinv_shift_norm(
            int(config.get("L", 10)), int(config.get("N", 100)),
            float(config.get("rho", 1.0)), int(trials or 2000), rng)
        note("pinv-norm", r.passed, f"mean {r.mean:.4f} vs <= {r.bound:.4f}")
    if check in ("ranks", "all"):
        cfg = config_from_dict({
            "G": config.get("G", 2), "M": config.get("M", 4),
            "K": config.get("K", 4), "N": config.get("N", 8), "eta": 1.0})
        r = rank_evidence(cfg, int(trials or 100), rng)
        note("ranks", r.passed,
             f"{r.violations} violations in {r.trials} trials, "
             f"expected ({r.expected_desired}, {r.expected_cross})")
    if check in ("antenna", "all"):
        bad = sum(
            antenna_collab_feasible(g, m, k) != (m >= k * g)
            for g in range(1, 9) for m in range(1, 9) for k in range(1, 9)
        )
        note("antenna", bad == 0, f"{bad} mismatches over 512 (G, M, K) triples")
    if not rows:
        raise ConfigError(f"unknown check {check!r}")
    table = PlainTable(columns=["check", "result", "detail"], rows=rows,
                       provenance={"config_hash": config_hash(config)}, kind="validate")
    _maybe_export(table, args)
    return EXIT_OK


_COMMANDS = {
    "thresholds": cmd_thresholds,
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "rate": cmd_rate,
    "geo": cmd_geo,
    "validate": cmd_validate,
}


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.workers is not None:
            resolve_workers(args.workers)
        return _COMMANDS[args.command](args)
    except (ConfigError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
