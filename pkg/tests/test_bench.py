import json
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from moranml.bench import (
    SUMMARY_HEADER,
    ConfigError,
    ScenarioConfig,
    StageError,
    diverging_color,
    parse_config,
    render_heatmap,
    run_matrix,
    run_scenario,
    table_matrix,
    tree_depth_demo,
)
from moranml.bench.treedemo import DEMO_HEADER, save_depth_demo
from moranml.geometry import PointSet, make_grid
from moranml.synthgen import generate_dataset

SMALL = dict(rows=12, cols=12, folds=3, inner_folds=2, background=20, candidate_L=40)
FAST_GBM = {"n_estimators": 20, "max_depth": 3, "learning_rate": 0.2, "min_samples_leaf": 3, "subsample": 0.8}


def small(**kw):
    base = dict(SMALL)
    base.update(kw)
    if base.get("model", "gbm") == "gbm":
        base.setdefault("hp", FAST_GBM)
        base.setdefault("grid", {})
    return ScenarioConfig(**base)


class TestConfig:
    def test_defaults_valid(self):
        cfg = ScenarioConfig()
        assert cfg.model == "gbm" and cfg.candidate_L == 200
        assert cfg.grid == {"n_estimators": [100, 200, 400]}

    @pytest.mark.parametrize(
        "kw",
        [
            {"spatial_mode": "coords", "selection": "bic"},
            {"model": "esf_svc", "spatial_mode": "coords"},
            {"model": "linear", "spatial_mode": "coords"},
            {"weights": "rook"},
            {"estimator": "sampled", "budget": 4},
            {"folds": 1},
            {"bandwidth": -2.0},
        ],
    )
    def test_invariants(self, kw):
        with pytest.raises(ConfigError):
            ScenarioConfig(**kw)

    def test_ini_round_trip(self):
        cfg = small(spatial_mode="eigenvectors", weights="queen", selection="mse_cv", seed=9, bandwidth=2.5)
        back, _ = parse_config(cfg.to_ini())
        assert back == cfg and back.digest() == cfg.digest()

    def test_digest_tracks_content(self):
        assert small(seed=1).digest() != small(seed=2).digest()
        assert small(seed=1).digest() == small(seed=1).digest()

    def test_schema_required(self):
        with pytest.raises(ConfigError, match="schema"):
            parse_config("[scenario]\nmodel = gbm\n")
        with pytest.raises(ConfigError, match="unsupported schema"):
            parse_config("[moranml]\nschema = 99\n")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown"):
            parse_config("[moranml]\nschema = 1\n[scenario]\ncolour = red\n")

    def test_model_switch_resets_defaults(self):
        cfg = ScenarioConfig().with_(model="forest")
        assert cfg.hp["n_estimators"] == 100 and cfg.grid == {}


class TestHeatmap:
    def _fills(self, path, tag):
        root = ET.parse(path).getroot()
        ns = "{http://www.w3.org/2000/svg}"
        cells = root.find(f"{ns}g[@id='cells']")
        return [el.get("fill") for el in cells.iter(f"{ns}{tag}")], root

    @staticmethod
    def _signed_level(fill):
        r, g, b = (int(v) for v in re.findall(r"\d+", fill))
        # red channel falls for negatives, blue for positives
        return (r - 255) if r < 255 else (255 - b)

    def test_colour_rank_matches_value_rank(self, tmp_path):
        ps = make_grid(20, 20)
        beta1 = generate_dataset(ps, 0).beta1
        fills, _ = self._fills(render_heatmap(beta1, ps, tmp_path / "b.svg"), "rect")
        assert len(fills) == ps.n
        levels = np.array([self._signed_level(f) for f in fills])
        order = np.argsort(beta1)
        assert np.all(np.diff(levels[order]) >= 0)

    def test_constant_field(self, tmp_path):
        ps = make_grid(3, 3)
        path = render_heatmap(np.full(9, 2.5), ps, tmp_path / "c.svg")
        fills, _ = self._fills(path, "rect")
        assert len(set(fills)) == 1
        text = path.read_text()
        assert "min=2.5" in text and "max=2.5" in text

    def test_single_point_circle(self, tmp_path):
        ps = PointSet(np.array([[3.0, 4.0]]), ("only",))
        fills, root = self._fills(render_heatmap([1.0], ps, tmp_path / "one.svg"), "circle")
        assert len(fills) == 1 and root.tag.endswith("svg")

    def test_rejects_nonfinite(self, tmp_path):
        with pytest.raises(ValueError):
            render_heatmap([np.nan, 1.0], np.eye(2), tmp_path / "x.svg")

    def test_palette_anchored_at_zero(self):
        assert diverging_color(0.0) == (255, 255, 255)
        assert diverging_color(1.0) == (255, 0, 0)
        assert diverging_color(-1.0) == (0, 0, 255)


class TestTreeDemo:
    def test_depth_curve(self):
        rows = tree_depth_demo(0, (2, 4, 6, 8))
        r2 = [r.r2_smooth for r in rows]
        assert all(b > a for a, b in zip(r2, r2[1:]))
        assert r2[-1] > 0.9
        assert rows[-1].r2_mixed_vs_checkerboard < 0.2

    def test_depth_zero_is_mean(self):
        assert tree_depth_demo(1, (0,), rows=10, cols=10)[0].r2_smooth == pytest.approx(0.0, abs=1e-12)

    def test_depths_must_ascend(self):
        with pytest.raises(ValueError):
            tree_depth_demo(0, (4, 2))

    def test_csv(self, tmp_path):
        save_depth_demo(tree_depth_demo(0, (1, 2), rows=10, cols=10), tmp_path / "d.csv")
        lines = (tmp_path / "d.csv").read_text().splitlines()
        assert lines[0] == DEMO_HEADER and len(lines) == 3


class TestScenario:
    def test_artifacts_and_determinism(self, tmp_path):
        cfg = small(spatial_mode="eigenvectors", weights="exp", selection="bic", seed=3)
        a = run_scenario(cfg, tmp_path / "a")
        b = run_scenario(cfg, tmp_path / "b", threads=3)
        assert a.status == "ok", a.error
        for name in ("dataset.csv", "selection.csv", "eigen.csv", "explain.csv", "model.json", "result.json"):
            assert (a.out_dir / name).read_bytes() == (b.out_dir / name).read_bytes(), name
        blob = json.loads((a.out_dir / "result.json").read_text())
        assert blob["mean_r2"] == pytest.approx(np.mean(blob["fold_r2"]))
        assert blob["selected_count"] <= cfg.candidate_L
        assert sorted(p.name for p in (a.out_dir / "surfaces").iterdir()) == [
            "beta1_true.svg", "beta2_true.svg", "phi_geo.svg", "svc_x1.svg", "svc_x2.svg"]
        assert blob["explanation"]["additivity_error"] < 1e-6

    def test_cache_hit_and_force(self, tmp_path):
        cfg = small(model="linear", spatial_mode="none")
        first = run_scenario(cfg, tmp_path)
        again = run_scenario(cfg, tmp_path)
        assert again.cached and again.fold_r2 == first.fold_r2
        assert not run_scenario(cfg, tmp_path, force=True).cached

    def test_stage_failure_is_recorded(self, tmp_path):
        cfg = small(spatial_mode="eigenvectors", weights="queen", eigen_method="nystrom")
        res = run_scenario(cfg, tmp_path)
        assert res.status == "failed" and res.failed_stage == "eigen"
        with pytest.raises(StageError, match="eigen"):
            run_scenario(cfg, tmp_path, raise_errors=True)

    def test_stop_after_dataset(self, tmp_path):
        res = run_scenario(small(), tmp_path, stop_after="dataset")
        assert (res.out_dir / "result-dataset.json").exists()
        assert not (res.out_dir / "result.json").exists()

    def test_sampled_estimator_and_irregular_points(self, tmp_path):
        pts = tmp_path / "pts.csv"
        ps = make_grid(9, 9)
        jitter = np.random.default_rng(0).uniform(-0.2, 0.2, size=ps.coords.shape)
        lines = ["id,x,y"] + [f"p{i},{float(x)!r},{float(y)!r}" for i, (x, y) in enumerate(ps.coords + jitter)]
        pts.write_text("\n".join(lines) + "\n")
        cfg = small(geometry="points", points_file=str(pts), estimator="sampled", budget=8)
        res = run_scenario(cfg, tmp_path / "out")
        assert res.status == "ok", res.error
        assert res.explanation["additivity_error"] < 1e-8


class TestMatrix:
    def test_table_matrix_shape(self):
        cfgs = table_matrix(ScenarioConfig(), seeds=(0,))
        assert len(cfgs) == 6 + 7 + 7 + 1
        assert len({c.digest() for c in cfgs}) == len(cfgs)

    def test_parallelism_invariance_and_tables(self, tmp_path):
        base = small(explain=False)
        cfgs = table_matrix(base, seeds=(0,), models=("linear", "gbm"))
        cfgs = [c.with_(hp=FAST_GBM, grid={}) if c.model == "gbm" else c for c in cfgs]
        _, s1 = run_matrix(cfgs, parallelism=1, out_root=tmp_path / "p1")
        _, s8 = run_matrix(cfgs, parallelism=8, out_root=tmp_path / "p8")
        assert s1.read_bytes() == s8.read_bytes()
        assert (tmp_path / "p1" / "table_grid.csv").read_bytes() == (tmp_path / "p8" / "table_grid.csv").read_bytes()
        lines = s1.read_text().splitlines()
        assert lines[0] == SUMMARY_HEADER and len(lines) == 1 + len(cfgs)
        table = (tmp_path / "p1" / "table_grid.csv").read_text().splitlines()
        assert table[0].split(",")[1:] == [
            "queen_none", "queen_mse_cv", "queen_bic", "exp_none", "exp_mse_cv", "exp_bic", "coords", "nonspatial"]
        assert re.match(r"linear(,NA){7},-?\d\.\d{4}$", table[2])

    def test_single_config_summary(self, tmp_path):
        _, s = run_matrix([small(model="linear", spatial_mode="none")], out_root=tmp_path)
        assert len(s.read_text().splitlines()) == 2

    def test_failed_cells_marked(self, tmp_path):
        bad = small(spatial_mode="eigenvectors", weights="queen", eigen_method="nystrom", explain=False)
        results, _ = run_matrix([bad], out_root=tmp_path)
        assert results[0].status == "failed"
        assert "FAILED" in (tmp_path / "table_grid.csv").read_text()

    def test_golden_header(self):
        assert SUMMARY_HEADER == (
            "digest,geometry,weights,spatial_mode,selection,model,seed,status,"
            "selected_count,mean_r2,fold_r2,failed_stage,error"
        )

    def test_needs_configs(self):
        with pytest.raises(ValueError):
            run_matrix([])
