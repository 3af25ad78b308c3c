import json

import pytest

from moranml.bench.cli import build_parser, main

FAST = ["--rows", "10", "--cols", "10", "--set", "folds=3", "--set", "inner_folds=2", "--set", "candidate_L=30"]


def test_generate_writes_dataset(tmp_path, capsys):
    assert main(["generate", "--out", str(tmp_path), "--seed", "4", *FAST]) == 0
    line = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert line["status"] == "ok"
    assert (tmp_path / line["digest"] / "dataset.csv").exists()


def test_global_flags_before_or_after_subcommand(tmp_path):
    a = build_parser().parse_args(["--seed", "3", "--out", str(tmp_path), "generate"])
    b = build_parser().parse_args(["generate", "--seed", "3", "--out", str(tmp_path)])
    assert (a.seed, a.out) == (b.seed, b.out) == (3, str(tmp_path))


def test_select_then_train(tmp_path, capsys):
    assert main(["select", "--out", str(tmp_path), *FAST]) == 0
    sel = json.loads(capsys.readouterr().out.strip())
    assert sel["selected_count"] >= 0
    args = ["train", "--out", str(tmp_path), "--model", "linear", *FAST]
    assert main(args) == 0
    assert "mean_r2" in json.loads(capsys.readouterr().out.strip())


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["train", "--out", str(tmp_path), "--model", "esf_svc", "--spatial-mode", "coords"]) == 2
    assert "spatial_mode" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["generate", "--config", str(tmp_path / "nope.ini")]) == 2


def test_config_file(tmp_path, capsys):
    ini = tmp_path / "s.ini"
    ini.write_text("[moranml]\nschema = 1\n[scenario]\nrows = 8\ncols = 8\nmodel = linear\nspatial_mode = none\nfolds = 3\n")
    assert main(["train", "--config", str(ini), "--out", str(tmp_path / "o")]) == 0
    assert json.loads(capsys.readouterr().out.strip())["status"] == "ok"


def test_scenario_failure_exit_code(tmp_path):
    args = ["eigen", "--out", str(tmp_path), "--weights", "queen", "--set", "eigen_method=nystrom", *FAST]
    assert main(args) == 1


def test_demo_tree_depth(tmp_path, capsys):
    assert main(["demo-tree-depth", "--out", str(tmp_path), "--depths", "1,2"]) == 0
    assert capsys.readouterr().out.startswith("depth,r2_smooth")
    assert main(["demo-tree-depth", "--out", str(tmp_path), "--depths", "4,2"]) == 2


def test_report_without_tables(tmp_path):
    assert main(["report", "--out", str(tmp_path)]) == 1


def test_bench_and_report(tmp_path, capsys):
    args = ["bench", "--out", str(tmp_path), "--geometries", "grid", "--seeds", "0", "--models", "linear", *FAST]
    assert main(args) == 0
    assert (tmp_path / "summary.csv").exists()
    capsys.readouterr()
    assert main(["report", "--out", str(tmp_path)]) == 0
    assert "table_grid.csv" in capsys.readouterr().out


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
