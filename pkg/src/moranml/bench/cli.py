"""Command line interface: ``moranml <command> [options]``.

Commands
--------
generate          simulate a dataset
eigen             compute and export the candidate eigenvectors
select            LASSO eigenvector selection
train             cross-validate and fit a model
explain           full scenario: train, GeoShapley explanation and surface maps
bench             run the accuracy matrix and write summary tables
demo-tree-depth   single-tree depth demo on a smooth and a checkerboard surface
report            print the tables written by ``bench``

Exit status is 0 on success, 1 if any scenario failed and 2 for
configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from ._blas import single_threaded_blas
from .config import ConfigError, ScenarioConfig, load_config, scenario_from_mapping, scenario_value
from .matrix import TABLE_MODELS, run_matrix, table_matrix
from .scenario import run_scenario
from .treedemo import save_depth_demo, tree_depth_demo

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2

_SCENARIO_FLAGS = {
    "geometry": str,
    "rows": int,
    "cols": int,
    "points_file": str,
    "weights": str,
    "spatial_mode": str,
    "selection": str,
    "model": str,
    "folds": int,
    "candidate_L": int,
    "eigen_method": str,
    "noise": str,
    "estimator": str,
    "budget": int,
}


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--seed", type=int, default=d(None), help="master seed (overrides the config)")
    p.add_argument("--out", default=d("out"), help="output root directory (default: out)")
    p.add_argument("--config", default=d(None), help="INI scenario manifest")
    p.add_argument("--threads", type=int, default=d(1), help="worker threads for folds or scenarios")
    p.add_argument("--force", action="store_true", default=d(False), help="recompute cached scenarios")


def _add_scenario_flags(p: argparse.ArgumentParser) -> None:
    for name, kind in _SCENARIO_FLAGS.items():
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=kind, default=None)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="any other scenario key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="moranml", description=__doc__.split("\n")[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("generate", "simulate a dataset"),
        ("eigen", "export candidate eigenvectors"),
        ("select", "LASSO eigenvector selection"),
        ("train", "cross-validate and fit a model"),
        ("explain", "run a full scenario with explanations"),
    ]:
        p = sub.add_parser(name, help=help_)
        _add_globals(p, suppress=True)
        _add_scenario_flags(p)
    p = sub.add_parser("bench", help="run the accuracy matrix")
    _add_globals(p, suppress=True)
    _add_scenario_flags(p)
    p.add_argument("--geometries", default="grid", help="comma list of grid, points")
    p.add_argument("--seeds", default="0,1,2,3,4", help="comma list of seeds")
    p.add_argument("--models", default=",".join(TABLE_MODELS), help="comma list of models")
    p.add_argument("--explain", action="store_true", help="also explain every scenario (slow)")
    p = sub.add_parser("demo-tree-depth", help="single-tree depth demo")
    _add_globals(p, suppress=True)
    p.add_argument("--depths", default="2,4,6,8", help="ascending comma list of depths")
    p = sub.add_parser("report", help="print tables written by bench")
    _add_globals(p, suppress=True)
    return parser


def _base_config(args) -> ScenarioConfig:
    cfg = load_config(args.config)[0] if args.config else ScenarioConfig()
    values = {k: getattr(args, k) for k in _SCENARIO_FLAGS if getattr(args, k, None) is not None}
    for item in getattr(args, "set", []) or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        values[key.strip()] = scenario_value(key.strip(), value)
    if args.seed is not None:
        values["seed"] = args.seed
    # keep the combination valid when only some of the coupled keys are given
    model = values.get("model", cfg.model)
    if model == "linear":
        values.setdefault("spatial_mode", "none")
    elif model in ("esf", "esf_svc"):
        values.setdefault("spatial_mode", "eigenvectors")
    if values.get("spatial_mode", cfg.spatial_mode) != "eigenvectors":
        values.setdefault("selection", "none")
    return scenario_from_mapping(values, base=cfg)


def _print_result(res) -> None:
    line = {"digest": res.digest, "status": res.status, "dir": str(res.out_dir)}
    if res.fold_r2:
        line["mean_r2"] = round(res.mean_r2, 4)
    if res.selected_count is not None:
        line["selected_count"] = res.selected_count
    if res.error:
        line["error"] = res.error
    print(json.dumps(line))


def _cmd_stage(args, stop_after) -> int:
    cfg = _base_config(args)
    if args.command in ("eigen", "select"):
        changes = {"spatial_mode": "eigenvectors"}
        if cfg.model == "linear":
            changes["model"] = "esf_svc"
        if args.command == "select" and cfg.selection == "none":
            changes["selection"] = "bic"
        cfg = cfg.with_(**changes)
    with single_threaded_blas():
        res = run_scenario(cfg, args.out, force=args.force, threads=args.threads, stop_after=stop_after)
    _print_result(res)
    return EXIT_OK if res.status == "ok" else EXIT_FAILED


def _cmd_bench(args) -> int:
    base = _base_config(args)
    if not args.explain:
        base = base.with_(explain=False)
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    models = [m.strip() for m in args.models.split(",") if m.strip()]
    bad = set(models) - set(TABLE_MODELS) - {"esf"}
    if bad:
        raise ConfigError(f"unknown models: {', '.join(sorted(bad))}")
    cfgs = []
    for geometry in [g.strip() for g in args.geometries.split(",") if g.strip()]:
        cfgs += table_matrix(base.with_(geometry=geometry), seeds, models)
    results, summary = run_matrix(cfgs, parallelism=max(1, args.threads), out_root=args.out, force=args.force)
    failed = [r for r in results if r.status != "ok"]
    print(f"{len(results)} scenarios, {len(failed)} failed; summary at {summary}")
    for r in failed:
        print(f"  FAILED {r.digest} [{r.failed_stage}] {r.error}")
    _print_tables(Path(args.out))
    return EXIT_FAILED if failed else EXIT_OK


def _print_tables(out: Path) -> bool:
    tables = sorted(out.glob("table_*.csv")) + sorted(out.glob("counts_*.csv"))
    for t in tables:
        print(f"\n== {t.name} ==")
        rows = [line.split(",") for line in t.read_text(encoding="utf-8").splitlines()]
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        for r in rows:
            print("  ".join(c.rjust(w) for c, w in zip(r, widths)))
    return bool(tables)


def _cmd_demo(args) -> int:
    try:
        depths = [int(d) for d in args.depths.split(",") if d.strip()]
    except ValueError:
        raise ConfigError(f"--depths must be a comma list of integers, got {args.depths!r}") from None
    if depths != sorted(depths) or any(d < 0 for d in depths):
        raise ConfigError("--depths must be ascending non-negative integers")
    seed = 0 if args.seed is None else args.seed
    rows = tree_depth_demo(seed, depths)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "tree_depth.csv"
    save_depth_demo(rows, path)
    print(path.read_text(encoding="utf-8"), end="")
    return EXIT_OK


def _cmd_report(args) -> int:
    out = Path(args.out)
    if not _print_tables(out):
        print(f"no tables under {out}; run 'moranml bench' first", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_stage(args, "dataset")
        if args.command == "eigen":
            return _cmd_stage(args, "eigen")
        if args.command == "select":
            return _cmd_stage(args, "select")
        if args.command == "train":
            return _cmd_stage(args, "train")
        if args.command == "explain":
            return _cmd_stage(args, None)
        if args.command == "bench":
            return _cmd_bench(args)
        if args.command == "demo-tree-depth":
            return _cmd_demo(args)
        if args.command == "report":
            return _cmd_report(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    parser.error(f"unknown command {args.command}")
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
