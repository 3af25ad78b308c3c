"""Run one scenario end to end and write its artifacts.

Stages: geometry, dataset, eigen, select, cv, fit, explain, report. Output
goes to ``<out_root>/<config digest>/``::

    config.ini      the resolved configuration
    points.csv      locations (and adjacency, if any)
    dataset.csv     simulated data with the true coefficient surfaces
    eigen.csv       candidate eigenvectors (eigenvector scenarios)
    selection.csv   selected eigenvector indices (eigenvector scenarios)
    model.json      the model refit on all rows
    explain.csv     GeoShapley components and smoothed coefficients
    surfaces/*.svg  maps of true and recovered surfaces
    result.json     everything above summarised; deterministic for a seed
    timing.json     wall-clock seconds per stage (not deterministic)

A directory holding ``result.json`` is reused unless ``force`` is set.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..eigenmoran import EigenBasis, moran_eigen_full, nystrom_basis, save_basis
from ..geometry import PointSet, load_points, make_grid, mst_max_edge, pairwise_distances, save_points
from ..geoshapley import PlayerPartition, explain_exact, explain_sampled, sample_background, save_explanation, svc_smooth
from ..lasso_select import SelectedSubset, save_subset, select_eigenvectors
from ..regressors import ModelSpec, cross_validate, dump_model, select_hp
from ..synthgen import SyntheticDataset, generate_dataset, save_dataset
from ..weights import exponential_weights, queen_weights
from ._blas import single_threaded_blas
from .config import ScenarioConfig
from .heatmap import render_heatmap

__all__ = ["ScenarioResult", "StageError", "run_scenario", "builtin_points", "build_points", "FULL_EIGEN_LIMIT"]

FULL_EIGEN_LIMIT = 4000
RESULT_FORMAT = "moranml-result/1"


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: BaseException):
        self.stage = stage
        self.cause = exc
        super().__init__(f"stage '{stage}' failed: {type(exc).__name__}: {exc}")


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    digest: str
    status: str
    out_dir: Path
    selected_count: int | None = None
    block_counts: dict = field(default_factory=dict)
    fold_r2: tuple = ()
    chosen_hp: tuple = ()
    full_hp: dict = field(default_factory=dict)
    explanation: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    wall_time: float = 0.0
    error: str = ""
    failed_stage: str = ""
    cached: bool = False

    @property
    def mean_r2(self) -> float:
        return float(np.mean(self.fold_r2)) if self.fold_r2 else float("nan")

    def to_json(self) -> dict:
        """The deterministic part of the result (no timings, no absolute paths)."""
        return {
            "format": RESULT_FORMAT,
            "digest": self.digest,
            "config": self.config.canonical(),
            "status": self.status,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "selected_count": self.selected_count,
            "block_counts": self.block_counts,
            "fold_r2": list(self.fold_r2),
            "mean_r2": self.mean_r2 if self.fold_r2 else None,
            "chosen_hp": list(self.chosen_hp),
            "full_hp": self.full_hp,
            "explanation": self.explanation,
            "artifacts": self.artifacts,
        }

    @classmethod
    def from_json(cls, blob: dict, cfg: ScenarioConfig, out_dir: Path, wall_time: float = 0.0) -> "ScenarioResult":
        return cls(
            config=cfg,
            digest=blob["digest"],
            status=blob["status"],
            out_dir=out_dir,
            selected_count=blob["selected_count"],
            block_counts=blob["block_counts"],
            fold_r2=tuple(blob["fold_r2"]),
            chosen_hp=tuple(blob["chosen_hp"]),
            full_hp=blob["full_hp"],
            explanation=blob["explanation"],
            artifacts=blob["artifacts"],
            wall_time=wall_time,
            error=blob["error"],
            failed_stage=blob["failed_stage"],
            cached=True,
        )


def builtin_points() -> PointSet:
    """The irregular 3109-point fixture with contiguity pairs."""
    with resources.as_file(resources.files("moranml") / "data" / "counties.csv") as p:
        return load_points(p)


def build_points(cfg: ScenarioConfig) -> PointSet:
    if cfg.geometry == "grid":
        return make_grid(cfg.rows, cfg.cols, cfg.spacing)
    if cfg.points_file:
        return load_points(cfg.points_file)
    return builtin_points()


def _write_json(path: Path, blob) -> None:
    path.write_text(json.dumps(blob, sort_keys=True, indent=1, allow_nan=True) + "\n", encoding="utf-8", newline="\n")


def _eigen_basis(cfg: ScenarioConfig, ps: PointSet) -> EigenBasis:
    L = min(cfg.candidate_L, ps.n - 1)
    method = cfg.eigen_method
    if method == "auto":
        method = "full" if ps.n <= FULL_EIGEN_LIMIT or cfg.weights == "queen" else "nystrom"
    if method == "nystrom":
        if cfg.weights != "exp":
            raise ValueError("the Nystrom approximation is available for exponential weights only")
        basis, _, _ = nystrom_basis(ps, L=L, m=max(cfg.nystrom_m, L), seed=cfg.seed)
        return basis
    if cfg.weights == "queen":
        w = queen_weights(ps)
    else:
        d = pairwise_distances(ps)
        w = exponential_weights(d, mst_max_edge(d))
    return moran_eigen_full(w, L)


def _features(cfg, ds: SyntheticDataset, basis, sel: SelectedSubset | None):
    """Model input matrix, the eigen columns used, and per-coefficient subsets for ESF-SVC."""
    x = ds.features()
    if cfg.spatial_mode == "none":
        return x, None, ()
    if cfg.spatial_mode == "coords":
        return np.hstack([x, ds.points.coords]), None, ()
    used = list(sel.indices) if sel is not None else list(range(basis.L))
    E = basis.vectors[:, used]
    pos = {l: k for k, l in enumerate(used)}
    K = x.shape[1]
    if cfg.svc_subsets == "per_k" and sel is not None and sel.per_block:
        blocks = ["intercept"] + [f"x{k + 1}" for k in range(K)]
        subsets = tuple(tuple(pos[l] for l in sel.per_block.get(b, ())) for b in blocks)
    else:
        subsets = (tuple(range(len(used))),) * (K + 1)
    return np.hstack([x, E]), used, subsets


def _explanation_metrics(expl, ds: SyntheticDataset) -> dict:
    out = {"additivity_error": expl.additivity_error(), "phi0": expl.phi0}
    p = expl.phi_j.shape[1]
    x = ds.features()
    truth = [ds.beta1, ds.beta2]
    for j in range(p):
        slope = np.polyfit(x[:, j], expl.phi_j[:, j], 1)
        quad = np.polyfit(x[:, j], expl.phi_j[:, j], 2)
        out[f"phi_x{j + 1}_linear_slope"] = float(slope[0])
        out[f"phi_x{j + 1}_quadratic_coef"] = float(quad[0])
        if expl.svc is not None and j < len(truth) and np.ptp(expl.svc[:, j]) > 0:
            out[f"svc_x{j + 1}_corr_true"] = float(np.corrcoef(expl.svc[:, j], truth[j])[0, 1])
    return out


def run_scenario(
    cfg: ScenarioConfig,
    out_root="out",
    force: bool = False,
    threads: int = 1,
    stop_after: str | None = None,
    raise_errors: bool = False,
) -> ScenarioResult:
    """Execute the pipeline for ``cfg``.

    Any stage failure is caught and recorded in the result (``status =
    "failed"``) unless ``raise_errors`` is set, in which case a
    :class:`StageError` naming the stage propagates. ``stop_after`` ends the
    run after the named stage (used by the single-stage CLI commands).
    ``threads`` runs the outer CV folds concurrently; BLAS stays on one
    thread throughout so outputs do not depend on it.
    """
    with single_threaded_blas():
        return _run(cfg, out_root, force, threads, stop_after, raise_errors)


def _run(cfg, out_root, force, threads, stop_after, raise_errors) -> ScenarioResult:
    digest = cfg.digest()
    out_dir = Path(out_root) / digest
    result_path = out_dir / "result.json"
    if result_path.exists() and not force and stop_after is None:
        blob = json.loads(result_path.read_text(encoding="utf-8"))
        if blob.get("format") == RESULT_FORMAT and blob.get("status") == "ok":
            return ScenarioResult.from_json(blob, cfg, out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.ini").write_text(cfg.to_ini(), encoding="utf-8", newline="\n")
    res = ScenarioResult(cfg, digest, "ok", out_dir)
    timing: dict[str, float] = {}
    t_start = time.perf_counter()
    state: dict = {}

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            value = fn()
        except Exception as exc:  # noqa: BLE001 - recorded per scenario
            raise StageError(name, exc) from exc
        timing[name] = time.perf_counter() - t0
        return value

    try:
        ps = stage("geometry", lambda: build_points(cfg))
        save_points(ps, out_dir / "points.csv")
        res.artifacts["points"] = "points.csv"
        ds = stage("dataset", lambda: generate_dataset(ps, cfg.seed, noise=cfg.noise))
        save_dataset(ds, out_dir / "dataset.csv")
        res.artifacts["dataset"] = "dataset.csv"
        if stop_after == "dataset":
            return _finish(res, timing, t_start, stop_after)

        basis = sel = None
        if cfg.spatial_mode == "eigenvectors":
            basis = stage("eigen", lambda: _eigen_basis(cfg, ps))
            save_basis(basis, out_dir / "eigen.csv", ids=ps.ids)
            res.artifacts["eigen"] = "eigen.csv"
            if stop_after == "eigen":
                return _finish(res, timing, t_start, stop_after)
            if cfg.selection != "none":
                sel = stage(
                    "select",
                    lambda: select_eigenvectors(
                        basis.vectors, ds.y, cfg.selection, features=ds.features(),
                        design=cfg.selection_design, folds=cfg.folds, seed=cfg.seed,
                    ),
                )
                save_subset(sel, out_dir / "selection.csv")
                res.artifacts["selection"] = "selection.csv"
                res.selected_count = sel.count
                res.block_counts = {b: len(v) for b, v in sel.per_block.items()}
            else:
                res.selected_count = basis.L
        if stop_after in ("eigen", "select"):
            return _finish(res, timing, t_start, stop_after)

        X, used, subsets = _features(cfg, ds, basis, sel)
        K = ds.features().shape[1]
        spec = ModelSpec(cfg.model, dict(cfg.hp), n_nonspatial=K, subsets=subsets, seed=cfg.seed)
        grid = dict(cfg.grid) or None
        cv = stage(
            "cv",
            lambda: cross_validate(spec, X, ds.y, k=cfg.folds, grid=grid, seed=cfg.seed,
                                   inner_k=cfg.inner_folds, threads=threads),
        )
        res.fold_r2 = cv.fold_r2
        res.chosen_hp = cv.chosen_hp

        def fit_all():
            hp = select_hp(spec, X, ds.y, grid, cfg.inner_folds, cfg.seed)
            return hp, spec.build(hp).fit(X, ds.y)

        hp, model = stage("fit", fit_all)
        res.full_hp = hp
        dump_model(model, out_dir / "model.json")
        res.artifacts["model"] = "model.json"
        if stop_after in ("cv", "fit", "train"):
            return _finish(res, timing, t_start, stop_after)

        if cfg.explain:
            def explain():
                part = PlayerPartition(tuple(range(K, X.shape[1])), tuple(range(K)), X.shape[1])
                bg = sample_background(X, cfg.background, cfg.seed)
                if cfg.estimator == "exact":
                    expl = explain_exact(model, X, bg, part)
                else:
                    expl = explain_sampled(model, X, bg, part, cfg.budget, cfg.seed)
                if part.has_geo:
                    expl.svc = np.column_stack(
                        [svc_smooth(expl.phi_geo_j[:, j], X[:, j], ps.coords, cfg.bandwidth) for j in range(K)]
                    )
                return expl

            expl = stage("explain", explain)
            save_explanation(expl, ps.ids, out_dir / "explain.csv")
            res.artifacts["explain"] = "explain.csv"
            res.explanation = _explanation_metrics(expl, ds)

            def surfaces():
                sdir = out_dir / "surfaces"
                maps = {"beta1_true": ds.beta1, "beta2_true": ds.beta2, "phi_geo": expl.phi_geo}
                if expl.svc is not None:
                    maps.update({f"svc_x{j + 1}": expl.svc[:, j] for j in range(K)})
                for name, vals in maps.items():
                    render_heatmap(vals, ps, sdir / f"{name}.svg", title=name)
                return sorted(f"surfaces/{name}.svg" for name in maps)

            res.artifacts["surfaces"] = stage("report", surfaces)
    except StageError as err:
        res.status = "failed"
        res.failed_stage = err.stage
        res.error = str(err)
        if raise_errors:
            _finish(res, timing, t_start, stop_after)
            raise
    return _finish(res, timing, t_start, stop_after)


def _finish(res: ScenarioResult, timing: dict, t_start: float, stop_after) -> ScenarioResult:
    res.wall_time = time.perf_counter() - t_start
    blob = res.to_json()
    if stop_after is not None:
        blob["stopped_after"] = stop_after
        name = f"result-{stop_after}.json"
    else:
        name = "result.json"
    _write_json(res.out_dir / name, blob)
    timing["total"] = res.wall_time
    _write_json(res.out_dir / "timing.json", {k: round(v, 6) for k, v in timing.items()})
    return res
