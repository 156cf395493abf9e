"""Command-line entry point: ``relsparse simulate | sweep | replicate | check``.

Exit status: 0 success, 1 computational failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import parse_floats, read_config_file
from .data import load_trajectories, standardize_states, write_trajectories
from .errors import ConfigError, RelSparseError
from .objective import ObjectiveOptions
from .report import (
    emit_diagram,
    lambda_grids_from_rows,
    merge_empirical,
    read_diagram,
    render_rows,
    write_diagram_csv,
    write_empirical_csv,
    write_manifest,
)
from .sim import SimConfig, simulate
from .sweep import DEFAULT_GAMMAS, SweepConfig, empirical_variance, sweep

log = logging.getLogger("relsparse")

SWEEP_DEFAULTS = {
    "gammas": list(DEFAULT_GAMMAS),
    "lambdas": None,
    "delta": 1.0,
    "restarts": 1,
    "seed": 0,
    "center": False,
    "baseline_variance": False,
    "standardize": False,
    "kl_direction": "forward",
    "n_lambda": 40,
    "formats": ["csv", "svg"],
    "threads": None,
}

REPLICATE_DEFAULTS = {
    "replicates": 100,
    "master_seed": 0,
    "threads": None,
    "formats": None,
}


class UsageError(Exception):
    pass


def _resolve(args, defaults, keys=None):
    """defaults < config file < explicit flags."""
    cfg = dict(defaults)
    if getattr(args, "config", None):
        doc = read_config_file(args.config)
        for k, v in doc.items():
            if keys is None or k in keys:
                cfg[k] = v
    for k in list(cfg) + list(keys or ()):
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    return cfg


def _threads(value):
    return int(value) if value else (os.cpu_count() or 1)


def _formats(value):
    if isinstance(value, str):
        value = [v.strip() for v in value.split(",") if v.strip()]
    return list(value)


def cmd_simulate(args) -> int:
    doc = read_config_file(args.config) if args.config else {}
    doc = dict(doc.get("simulation", doc))
    for key in ("n", "T", "K", "seed"):
        v = getattr(args, key, None)
        if v is not None:
            doc[key] = v
    cfg = SimConfig.from_dict(doc)
    data = simulate(cfg)
    write_trajectories(data, args.out)
    print(f"wrote {data.n} trajectories x {data.T_plus_1} steps (K={data.K}) to {args.out}")
    return 0


def _sweep_config(cfg) -> SweepConfig:
    options = ObjectiveOptions(kl_direction=cfg["kl_direction"])
    return SweepConfig(
        delta=float(cfg["delta"]),
        restarts=int(cfg["restarts"]),
        seed=int(cfg["seed"]),
        center=bool(cfg["center"]),
        baseline=bool(cfg["baseline_variance"]),
        n_lambda=int(cfg["n_lambda"]),
        options=options,
    )


def cmd_sweep(args) -> int:
    if args.weight_cap is not None:
        raise UsageError("--weight-cap is exploratory only; the sweep's inference requires uncapped weights")
    cfg = _resolve(args, SWEEP_DEFAULTS, keys=set(SWEEP_DEFAULTS) | {"data", "out"})
    if not cfg.get("data") or not cfg.get("out"):
        raise UsageError("sweep needs --data and --out (flags or config)")
    cfg["gammas"] = parse_floats(cfg["gammas"])
    cfg["lambdas"] = parse_floats(cfg["lambdas"])
    cfg["formats"] = _formats(cfg["formats"])
    cfg["threads"] = _threads(cfg["threads"])

    data = load_trajectories(cfg["data"])
    transform = None
    if cfg["standardize"]:
        data, mean, scale = standardize_states(data)
        transform = {"mean": mean, "scale": scale}
    scfg = _sweep_config(cfg)
    res = sweep(data, cfg["gammas"], cfg["lambdas"], config=scfg, threads=cfg["threads"])

    manifest = {
        "command": "sweep",
        "config": dict(cfg, command="sweep"),
        "version": __version__,
        "seeds": {"sweep": scfg.seed},
        "sweep_config": scfg.to_dict(),
        "standardization": transform,
    }
    files = emit_diagram(res, None, cfg["out"], cfg["formats"], baseline=scfg.baseline, manifest=manifest)
    n_ok = sum(p.ok for p in res.iter_points())
    n_all = len(res.points)
    for g, lam, err in res.failures():
        print(f"gamma={g:g} lambda={lam:g}: {err}", file=sys.stderr)
    print(f"{n_ok}/{n_all} grid points succeeded; wrote {', '.join(str(f) for f in files)}")
    return 0 if n_ok else 1


def cmd_replicate(args) -> int:
    cfg = _resolve(args, REPLICATE_DEFAULTS, keys=set(REPLICATE_DEFAULTS) | {"sim_config", "diagram_dir"})
    if not cfg.get("sim_config") or not cfg.get("diagram_dir"):
        raise UsageError("replicate needs --sim-config and --diagram-dir")
    replicates = int(cfg["replicates"])
    if replicates < 2:
        raise ConfigError("--replicates must be at least 2 (a standard deviation needs two draws)")
    cfg["threads"] = _threads(cfg["threads"])
    out = Path(cfg["diagram_dir"])
    diagram = out / "diagram.csv"
    if not diagram.exists():
        raise ConfigError(f"{diagram} not found; run `relsparse sweep` first")
    manifest_path = out / "manifest.json"
    manifest = json.loads(manifest_path.read_text(encoding="utf-8")) if manifest_path.exists() else {}
    sweep_cfg = dict(SWEEP_DEFAULTS)
    sweep_cfg.update({k: v for k, v in manifest.get("config", {}).items() if k in SWEEP_DEFAULTS})
    formats = _formats(cfg["formats"] if cfg["formats"] is not None else sweep_cfg["formats"])

    sim_doc = read_config_file(cfg["sim_config"])
    sim = SimConfig.from_dict(dict(sim_doc.get("simulation", sim_doc)))
    rows = read_diagram(diagram)
    grids = lambda_grids_from_rows(rows)
    scfg = replace(_sweep_config(sweep_cfg), inference=False, baseline=False)
    emp = empirical_variance(
        sim, sorted(grids), grids, scfg.delta, replicates, int(cfg["master_seed"]), config=scfg, threads=cfg["threads"]
    )
    rows = merge_empirical(rows, emp)
    written = [write_diagram_csv(rows, diagram), write_empirical_csv(emp, out / "empirical.csv")]
    figs = [f for f in formats if f != "csv"]
    if figs:
        written += render_rows(rows, out, figs)

    manifest.pop("outputs", None)
    manifest["replicate"] = {
        "config": dict(cfg, command="replicate"),
        "simulation": sim.to_dict(),
        "replicate_seeds": list(emp.seeds),
        "failures": [{"seed": s, "error": e} for s, e in emp.failures],
        "sd_b": emp.sd_b,
    }
    written.append(write_manifest(out, manifest, written))
    print(f"{replicates - len(emp.failures)}/{replicates} replicates succeeded; merged into {diagram}")
    return 0


def cmd_check(args) -> int:
    import time

    from .checks import format_table, run_checks

    start = time.perf_counter()
    results = run_checks(perturb_gradient=args.perturb_gradient)
    elapsed = time.perf_counter() - start
    print(format_table(results))
    print(f"{sum(r.passed for r in results)}/{len(results)} checks passed in {elapsed:.1f}s")
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="relsparse", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="simulate a trajectory CSV")
    s.add_argument("--config", help="JSON/YAML simulation config")
    s.add_argument("--out", required=True, help="output CSV path")
    s.add_argument("--seed", type=int)
    s.add_argument("--n", type=int)
    s.add_argument("--T", type=int)
    s.add_argument("--K", type=int)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("sweep", help="fit a (gamma, lambda) selection diagram")
    s.add_argument("--config", help="JSON/YAML run config or a previous manifest.json")
    s.add_argument("--data", help="trajectory CSV")
    s.add_argument("--out", help="output directory")
    s.add_argument("--gammas", help="comma-separated gamma grid (default 0.1,1,10)")
    s.add_argument("--lambdas", help="comma-separated lambda grid (default: automatic per gamma)")
    s.add_argument("--n-lambda", dest="n_lambda", type=int, help="automatic grid size (default 40)")
    s.add_argument("--delta", type=float, help="adaptive weight exponent (default 1)")
    s.add_argument("--restarts", type=int, help="extra random starts for the first stage (default 1)")
    s.add_argument("--seed", type=int, help="seed for random restarts")
    s.add_argument("--kl-direction", dest="kl_direction", choices=["forward", "reverse"])
    s.add_argument("--center", action="store_true", default=None, help="center the sandwich middle factor")
    s.add_argument("--baseline-variance", dest="baseline_variance", action="store_true", default=None,
                   help="add an se_baseline column from the full-index sandwich")
    s.add_argument("--standardize", action="store_true", default=None, help="standardize states before fitting")
    s.add_argument("--weight-cap", dest="weight_cap", type=float, help=argparse.SUPPRESS)
    s.add_argument("--formats", help="comma-separated subset of csv,svg,png (default csv,svg)")
    s.add_argument("--threads", type=int, help="worker processes over the gamma grid")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("replicate", help="Monte Carlo empirical SEs merged into diagram.csv")
    s.add_argument("--config", help="JSON/YAML run config")
    s.add_argument("--sim-config", dest="sim_config", help="simulation config for the replicates")
    s.add_argument("--diagram-dir", dest="diagram_dir", help="directory holding diagram.csv from `sweep`")
    s.add_argument("--replicates", type=int)
    s.add_argument("--master-seed", dest="master_seed", type=int)
    s.add_argument("--formats", help="figure formats to re-render (default: those of the sweep)")
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_replicate)

    s = sub.add_parser("check", help="run derivative, prox and endpoint self-checks")
    s.add_argument("--perturb-gradient", dest="perturb_gradient", type=float, default=0.0, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except RelSparseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
