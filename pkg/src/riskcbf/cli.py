"""Command-line front end: field rasterization, audits, simulation and
feasibility diagnostics, all driven by a single config file.

Exit codes: 0 on success, 2 on config errors, 3 on runtime errors.
Outputs are deterministic for a given config (the probe sampling is
seeded via --seed).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import sys
from pathlib import Path

import numpy as np

from .barrier import control_set_probe, feasibility_margin
from .config import Config, ConfigError, load_config
from .field import (
    FieldGrid,
    discretized_cost_range,
    inclusiveness_audit,
    level_set,
    polylines_to_json,
    rasterize,
    safe_mask,
    versatility_audit,
    _cost_grids,
)
from .risk import ExpectedRisk, spec_label
from .sim import (
    compare_models,
    comparison_to_csv,
    nominal_control,
    obstacle_velocity,
    run,
)


def _select_specs(specs, selector: str | None):
    if selector is None or selector == "all":
        return specs
    if selector.isdigit():
        idx = int(selector)
        if not 1 <= idx <= len(specs):
            raise ConfigError("<cli>", None, f"--spec index {idx} out of range 1..{len(specs)}")
        return [specs[idx - 1]]
    chosen = [s for s in specs if selector in spec_label(s)]
    if not chosen:
        raise ConfigError("<cli>", None, f"--spec {selector!r} matches no configured spec")
    return chosen


def _write_grid(grid: FieldGrid, out: Path, stem: str, fmt: str) -> None:
    if fmt in ("csv", "both"):
        grid.to_csv(out / f"{stem}.csv")
    if fmt in ("json", "both"):
        grid.to_json(out / f"{stem}.json")


def cmd_field(cfg: Config, out: Path, selector, fmt: str, seed: int) -> int:
    params = cfg.field_params()
    barrier = cfg.barrier_config()
    bounds, resolution, source = cfg.grid_geometry()
    specs = _select_specs(cfg.specs(), selector)

    mu, sigma, geom = _cost_grids(params, source, bounds, resolution)
    _write_grid(FieldGrid(*geom, values=mu), out, "c_mu", fmt)
    _write_grid(FieldGrid(*geom, values=sigma), out, "c_sigma", fmt)
    for spec in specs:
        label = spec_label(spec)
        grid = rasterize(spec, params, source, bounds, resolution)
        _write_grid(grid, out, f"risk_{label}", fmt)
        mask = safe_mask(grid, barrier.rho)
        _write_grid(
            FieldGrid(*geom, values=mask.astype(float)), out, f"safe_{label}", fmt
        )
        polylines_to_json(level_set(grid, barrier.rho), out / f"levelset_{label}.json")
        print(f"field: wrote grids for {label}")
    return 0


def cmd_audit(cfg: Config, out: Path, selector, fmt: str, seed: int) -> int:
    params = cfg.field_params()
    barrier = cfg.barrier_config()
    bounds, resolution, source = cfg.grid_geometry()
    c_min, c_max = discretized_cost_range(params, source, bounds, resolution)
    cvar_family, cpt_family = cfg.audit_families(c_min, c_max, barrier.rho)
    er_family = [ExpectedRisk()]

    mu, _, _ = _cost_grids(params, source, bounds, resolution)
    levels = cfg.levels()
    if not levels:
        levels = list(np.linspace(float(mu.min()), float(mu.max()), 8))

    args = (params, source, bounds, resolution, barrier.rho)
    report = {
        "rho": barrier.rho,
        "cost_range": [c_min, c_max],
        "inclusiveness": {
            "cpt_vs_cvar": inclusiveness_audit(cpt_family, cvar_family, *args).to_dict(),
            "cpt_vs_er": inclusiveness_audit(cpt_family, er_family, *args).to_dict(),
            "cvar_vs_er": inclusiveness_audit(cvar_family, er_family, *args).to_dict(),
        },
        "versatility": {
            "er": versatility_audit(er_family, *args, levels).to_dict(),
            "cvar": versatility_audit(cvar_family, *args, levels).to_dict(),
            "cpt": versatility_audit(cpt_family, *args, levels).to_dict(),
        },
    }
    path = out / "audit.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    for pair, rep in report["inclusiveness"].items():
        print(f"audit: {pair}: {rep['verdict']}")
    print(f"audit: report written to {path}")
    return 0


def cmd_simulate(cfg: Config, out: Path, selector, fmt: str, seed: int) -> int:
    specs = _select_specs(cfg.specs(), selector)
    logs = []
    for spec in specs:
        log = run(cfg.scenario(spec))
        logs.append(log)
        if fmt in ("csv", "both"):
            log.to_csv(out / f"sim_{log.label}.csv")
        if fmt in ("json", "both"):
            log.to_json(out / f"sim_{log.label}.json")
        flag = "" if log.feasibility_violations == 0 else f" [feasibility violations: {log.feasibility_violations}]"
        print(
            f"simulate: {log.label}: reached={log.reached_goal} "
            f"min_h={log.min_h:.4g} deviation={log.total_deviation:.4g}{flag}"
        )
    if len(specs) > 1:
        rows = compare_models(cfg.scenario(specs[0]), specs)
        comparison_to_csv(rows, out / "summary.csv")
        print(f"simulate: summary written to {out / 'summary.csv'}")
    return 0


def cmd_feasibility(cfg: Config, out: Path, selector, fmt: str, seed: int) -> int:
    specs = _select_specs(cfg.specs(), selector)
    params = cfg.field_params()
    barrier = cfg.barrier_config()
    settings = cfg.feasibility_settings()

    scenario = cfg.scenario(specs[0])
    free = dataclasses.replace(
        scenario, barrier=dataclasses.replace(scenario.barrier, rho=1e300)
    )
    nominal_log = run(free)
    stride = max(1, len(nominal_log.records) // settings["n_states"])
    sampled = nominal_log.records[::stride][: settings["n_states"]]

    rng = np.random.default_rng(seed)
    u_samples = rng.uniform(-settings["u_max"], settings["u_max"], (settings["n_samples"], 2))
    f = np.zeros(2)
    G = np.eye(2)

    states = []
    tallies = {spec_label(s): {"feasible": 0, "etas": []} for s in specs}
    for rec in sampled:
        if rec.obstacles.shape[0] == 0:
            continue
        point = rec.point
        u_nom = nominal_control(point, scenario.goal, scenario.nominal_gain)
        dists = np.linalg.norm(rec.obstacles - point[None, :], axis=1)
        nearest = int(np.argmin(dists))
        y = rec.obstacles[nearest]
        f_y = obstacle_velocity(
            dataclasses.replace(scenario.obstacles[nearest], position=y)
        )
        margins = {}
        for spec in specs:
            diag = feasibility_margin(spec, params, barrier, point, y, f, G, f_y, u_nom)
            label = spec_label(spec)
            margins[label] = {
                "lhs": diag.lhs,
                "rhs": None if math.isinf(diag.rhs) else diag.rhs,
                "eta": None if math.isinf(diag.eta) else diag.eta,
                "h": diag.h,
                "feasible": diag.feasible,
                "angle_defined": diag.angle_defined,
            }
            tallies[label]["feasible"] += int(diag.feasible)
            if math.isfinite(diag.eta):
                tallies[label]["etas"].append(diag.eta)
        probe = control_set_probe(specs, params, barrier, point, y, f, G, f_y, u_samples)
        er_rows = [i for i, s in enumerate(specs) if isinstance(s, ExpectedRisk)]
        subset_violations = {}
        if er_rows:
            er_feasible = probe.feasible[er_rows[0]]
            for i, s in enumerate(specs):
                subset_violations[spec_label(s)] = int(
                    np.sum(er_feasible & ~probe.feasible[i])
                )
        states.append(
            {
                "t": rec.t,
                "point": point.tolist(),
                "obstacle": y.tolist(),
                "margins": margins,
                "probe_counts": dict(zip(probe.labels, probe.counts)),
                "er_feasible_not_in": subset_violations,
            }
        )

    n_states = max(1, len(states))
    summary = {
        label: {
            "feasible_fraction": tally["feasible"] / n_states,
            "mean_eta": float(np.mean(tally["etas"])) if tally["etas"] else None,
            "min_eta": float(np.min(tally["etas"])) if tally["etas"] else None,
        }
        for label, tally in tallies.items()
    }
    report = {
        "seed": seed,
        "n_samples": settings["n_samples"],
        "u_max": settings["u_max"],
        "states": states,
        "summary": summary,
    }
    path = out / "feasibility.json"
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    for label, row in summary.items():
        print(f"feasibility: {label}: nominal-feasible fraction {row['feasible_fraction']:.3f}")
    print(f"feasibility: report written to {path}")
    return 0


_COMMANDS = {
    "field": cmd_field,
    "audit": cmd_audit,
    "simulate": cmd_simulate,
    "feasibility": cmd_feasibility,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="riskcbf",
        description="Perceived-risk fields, safety audits and safe-control simulation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("field", "rasterize cost and perceived-risk grids, masks and level sets"),
        ("audit", "run inclusiveness and versatility audits"),
        ("simulate", "run closed-loop scenarios per risk spec"),
        ("feasibility", "feasibility margins and control-set probes"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="path to the scenario config file")
        p.add_argument("--out", default="out", help="output directory (created if missing)")
        p.add_argument("--spec", default=None, help="spec selector: label substring or 1-based index")
        p.add_argument("--seed", type=int, default=0, help="seed for sampled probes")
        p.add_argument("--format", choices=("csv", "json", "both"), default="csv")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return _COMMANDS[args.command](cfg, out, args.spec, args.format, args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
