"""Run many scenarios and assemble accuracy tables.

``summary.csv`` has one row per scenario (fixed header, see
:data:`SUMMARY_HEADER`). ``table_<geometry>.csv`` arranges seed-averaged mean
R^2 with models as rows and weights x selection plus coordinates as columns;
``counts_<geometry>.csv`` holds the matching seed-averaged selected counts.
"""

from __future__ import annotations

import io
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from ._blas import single_threaded_blas
from .config import ScenarioConfig
from .scenario import ScenarioResult, run_scenario

__all__ = [
    "run_matrix",
    "table_matrix",
    "write_summary",
    "write_tables",
    "SUMMARY_HEADER",
    "TABLE_COLUMNS",
    "TABLE_MODELS",
]

SUMMARY_HEADER = (
    "digest,geometry,weights,spatial_mode,selection,model,seed,status,selected_count,mean_r2,fold_r2,failed_stage,error"
)
TABLE_COLUMNS = ("queen_none", "queen_mse_cv", "queen_bic", "exp_none", "exp_mse_cv", "exp_bic", "coords", "nonspatial")
TABLE_MODELS = ("esf_svc", "forest", "gbm", "linear")


def table_matrix(base: ScenarioConfig, seeds=(0, 1, 2, 3, 4), models=TABLE_MODELS) -> list[ScenarioConfig]:
    """Every cell of the accuracy table for ``base.geometry``, for each seed.

    Linear uses no spatial features; ESF-SVC uses each weights x selection
    cell; tree ensembles use those plus coordinates.
    """
    cfgs = []
    for seed in seeds:
        for model in models:
            if model == "linear":
                cfgs.append(base.with_(model=model, seed=seed, spatial_mode="none", selection="none"))
                continue
            for weights in ("queen", "exp"):
                for selection in ("none", "mse_cv", "bic"):
                    cfgs.append(
                        base.with_(model=model, seed=seed, spatial_mode="eigenvectors", weights=weights, selection=selection)
                    )
            if model in ("forest", "gbm"):
                cfgs.append(base.with_(model=model, seed=seed, spatial_mode="coords", selection="none"))
    return cfgs


def _column(cfg: ScenarioConfig) -> str:
    if cfg.spatial_mode == "none":
        return "nonspatial"
    if cfg.spatial_mode == "coords":
        return "coords"
    return f"{cfg.weights}_{cfg.selection}"


def _csv_field(v) -> str:
    s = "" if v is None else str(v)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def write_summary(results: list[ScenarioResult], path) -> None:
    buf = io.StringIO()
    buf.write(SUMMARY_HEADER + "\n")
    for r in results:
        c = r.config
        mean = repr(r.mean_r2) if r.fold_r2 else ""
        folds = " ".join(repr(float(v)) for v in r.fold_r2)
        row = [r.digest, c.geometry, c.weights if c.spatial_mode == "eigenvectors" else "", c.spatial_mode,
               c.selection, c.model, c.seed, r.status, r.selected_count, mean, folds, r.failed_stage, r.error]
        buf.write(",".join(_csv_field(v) for v in row) + "\n")
    Path(path).write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def write_tables(results: list[ScenarioResult], out_dir) -> list[Path]:
    """Seed-averaged tables per geometry; a cell with any failed seed reads ``FAILED``."""
    out_dir = Path(out_dir)
    written = []
    for geometry in sorted({r.config.geometry for r in results}):
        cells: dict[tuple[str, str], list[ScenarioResult]] = {}
        for r in results:
            if r.config.geometry == geometry:
                cells.setdefault((r.config.model, _column(r.config)), []).append(r)
        models = [m for m in TABLE_MODELS if any(k[0] == m for k in cells)]
        models += sorted({k[0] for k in cells} - set(models))
        for kind in ("table", "counts"):
            buf = io.StringIO()
            buf.write("model," + ",".join(TABLE_COLUMNS) + "\n")
            for m in models:
                row = [m]
                for col in TABLE_COLUMNS:
                    rs = cells.get((m, col))
                    if not rs:
                        row.append("NA")
                    elif any(r.status != "ok" for r in rs):
                        row.append("FAILED")
                    elif kind == "table":
                        row.append(f"{np.mean([r.mean_r2 for r in rs]):.4f}")
                    else:
                        counts = [r.selected_count for r in rs if r.selected_count is not None]
                        row.append(f"{np.mean(counts):.1f}" if counts else "NA")
                buf.write(",".join(row) + "\n")
            path = out_dir / f"{kind}_{geometry}.csv"
            path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")
            written.append(path)
    return written


def run_matrix(
    cfgs: list[ScenarioConfig],
    parallelism: int = 1,
    out_root="out",
    force: bool = False,
    summary_name: str = "summary.csv",
) -> tuple[list[ScenarioResult], Path]:
    """Run scenarios on a bounded thread pool, then write the summary and tables.

    BLAS is limited to one thread so results do not depend on
    ``parallelism``; failures are recorded per scenario.
    """
    if not cfgs:
        raise ValueError("no scenarios to run")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    unique = list({c.digest(): c for c in cfgs}.values())
    with single_threaded_blas():
        if parallelism > 1:
            with ThreadPoolExecutor(max_workers=parallelism) as pool:
                done = list(pool.map(lambda c: run_scenario(c, out_root, force=force), unique))
        else:
            done = [run_scenario(c, out_root, force=force) for c in unique]
    by_digest = {r.digest: r for r in done}
    results = [by_digest[c.digest()] for c in cfgs]
    summary = out_root / summary_name
    write_summary(results, summary)
    write_tables(results, out_root)
    return results, summary
