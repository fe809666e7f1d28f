import csv
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from gdsp.cli import COMMANDS, EXIT_DATA, EXIT_OK, EXIT_USAGE, build_parser, main
from gdsp.data import SignalMatrix, load_wide_csv, write_wide_csv
from gdsp.evaluation import rse
from gdsp.graph import read_edge_list


def _synth(out, *extra):
    assert main(["synth", "--out", str(out), *extra]) == EXIT_OK
    return out / "signals.csv", out / "graph.txt", out / "truth.json"


@pytest.fixture(scope="module")
def bench_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    return _synth(out, "--nodes", "12", "--days", "240", "--seed", "7")


# --- synth -------------------------------------------------------------------

def test_synth_is_reproducible(tmp_path):
    a = _synth(tmp_path / "a", "--nodes", "10", "--days", "300", "--seed", "7")
    b = _synth(tmp_path / "b", "--nodes", "10", "--days", "300", "--seed", "7")
    for x, y in zip(a, b):
        assert x.read_bytes() == y.read_bytes()


def test_synth_files_load_back(tmp_path):
    sig, graph, truth = _synth(tmp_path)
    sm, g = load_wide_csv(sig), read_edge_list(graph)
    assert sm.values.shape == (10, 300)
    assert tuple(g.labels) == sm.node_ids
    t = json.loads(truth.read_text())
    assert t["theta"] == [0.9, -0.08, 0.02]
    assert np.asarray(t["filter_matrix"]).shape == (10, 10)


def test_synth_rejects_bad_theta(tmp_path):
    assert main(["synth", "--out", str(tmp_path), "--theta", "1,2"]) == EXIT_USAGE


# --- learn -------------------------------------------------------------------

def test_learn_noise_free_reaches_tiny_loss(tmp_path):
    # global scaling commutes with the filter, so the problem stays realizable
    sig, graph, _ = _synth(tmp_path, "--days", "60", "--noise", "0")
    model = tmp_path / "m.json"
    rc = main(["learn", "--data", str(sig), "--edges", str(graph), "--normalization", "global",
               "--epsilon", "1e-12", "--out", str(model), "--trace", str(tmp_path / "t.csv")])
    assert rc == EXIT_OK
    m = json.loads(model.read_text())
    assert m["loss_trace"][-1] <= 1e-6 * m["loss_trace"][0]
    np.testing.assert_allclose(m["theta"], [0.9, -0.08, 0.02], atol=1e-3)
    assert len((tmp_path / "t.csv").read_text().splitlines()) == 1 + m["iterations"]


def test_learn_least_squares_has_no_trace(tmp_path, bench_data):
    sig, graph, _ = bench_data
    model = tmp_path / "m.json"
    assert main(["learn", "--data", str(sig), "--edges", str(graph), "--method", "gsp-ls",
                 "--out", str(model)]) == EXIT_OK
    m = json.loads(model.read_text())
    assert "loss_trace" not in m and len(m["theta"]) == 3
    assert {"method", "node_ids", "scales", "filter_matrix"} <= set(m)


def test_learn_lev_stores_mixture(tmp_path, bench_data):
    sig, graph, _ = bench_data
    model = tmp_path / "m.json"
    assert main(["learn", "--data", str(sig), "--edges", str(graph), "--method", "gsp-lev",
                 "--out", str(model)]) == EXIT_OK
    m = json.loads(model.read_text())
    assert sum(m["weights"]) == pytest.approx(1.0) and m["alpha"] > 0 and m["gamma"] > 0


def test_learn_unknown_method_is_usage_error(tmp_path, bench_data, capsys):
    sig, graph, _ = bench_data
    rc = main(["learn", "--data", str(sig), "--edges", str(graph), "--method", "nope",
               "--out", str(tmp_path / "m.json")])
    assert rc == EXIT_USAGE
    assert "nope" in capsys.readouterr().err


def test_learn_missing_input_is_data_error(tmp_path, capsys):
    rc = main(["learn", "--data", str(tmp_path / "none.csv"), "--edges", str(tmp_path / "g"),
               "--out", str(tmp_path / "m.json")])
    assert rc == EXIT_DATA
    assert "none.csv" in capsys.readouterr().err


# --- predict -----------------------------------------------------------------

def _identity_model(path, ids):
    n = len(ids)
    path.write_text(json.dumps({"method": "identity", "node_ids": ids, "scales": [2.0] * n,
                                "filter_matrix": np.eye(n).tolist()}))


def test_predict_identity_model(tmp_path):
    sm = SignalMatrix([[1.5, 2.0], [3.0, -4.0]], ["a", "b"], ["2021-01-01", "2021-01-02"])
    write_wide_csv(sm, tmp_path / "x.csv")
    _identity_model(tmp_path / "m.json", ["a", "b"])
    assert main(["predict", "--model", str(tmp_path / "m.json"), "--input",
                 str(tmp_path / "x.csv"), "--out", str(tmp_path / "y.csv")]) == EXIT_OK
    assert (tmp_path / "y.csv").read_text() == (tmp_path / "x.csv").read_text()


def test_predict_reorders_rows_and_writes_stdout(tmp_path, capsys):
    sm = SignalMatrix([[1.0], [2.0]], ["b", "a"], ["2021-01-01"])
    write_wide_csv(sm, tmp_path / "x.csv")
    _identity_model(tmp_path / "m.json", ["a", "b"])
    assert main(["predict", "--model", str(tmp_path / "m.json"), "--input",
                 str(tmp_path / "x.csv")]) == EXIT_OK
    assert capsys.readouterr().out == "node,2021-01-01\na,2.0\nb,1.0\n"


def test_predict_with_ground_truth_model(tmp_path):
    sig, _, truth = _synth(tmp_path, "--noise", "0", "--days", "60")
    sm = load_wide_csv(sig)
    write_wide_csv(sm.cols(0, 30), tmp_path / "in.csv")
    assert main(["predict", "--model", str(truth), "--input", str(tmp_path / "in.csv"),
                 "--out", str(tmp_path / "pred.csv")]) == EXIT_OK
    pred = load_wide_csv(tmp_path / "pred.csv").values
    actual = sm.values[:, 30:60]
    assert rse(pred, actual, actual) <= 1e-4


def test_predict_node_mismatch_names_node(tmp_path, capsys):
    sm = SignalMatrix([[1.0], [2.0]], ["a", "c"], ["2021-01-01"])
    write_wide_csv(sm, tmp_path / "x.csv")
    _identity_model(tmp_path / "m.json", ["a", "b"])
    rc = main(["predict", "--model", str(tmp_path / "m.json"), "--input", str(tmp_path / "x.csv")])
    assert rc == EXIT_DATA
    assert "'b'" in capsys.readouterr().err


# --- bench -------------------------------------------------------------------

def _bench(data, out, *extra):
    sig, graph, _ = data
    return main(["bench", "--data", str(sig), "--edges", str(graph), "--out", str(out),
                 "--methods", "gds-cop,gsp-ls", "--repeats", "1", "--max-iters", "1000",
                 *extra])


def _summary(out):
    rows = json.loads((out / "report.json").read_text())["summary"]
    return {(r["method"], r["window_size"], r["stress"]): r for r in rows}


def test_bench_shuffling_leaves_gds_cop_unchanged(tmp_path, bench_data):
    assert _bench(bench_data, tmp_path, "--stress", "none,shuffling") == EXIT_OK
    s = _summary(tmp_path)
    assert s[("gds-cop", 30, "shuffling")]["arse_mean"] == s[("gds-cop", 30, "none")]["arse_mean"]
    assert s[("gsp-ls", 30, "shuffling")]["arse_mean"] > s[("gsp-ls", 30, "none")]["arse_mean"]


def test_bench_window_grid_and_std(tmp_path, bench_data):
    assert _bench(bench_data, tmp_path, "--window-sizes", "10,20,30") == EXIT_OK
    rows = list(csv.DictReader((tmp_path / "arse_vs_window.csv").open()))
    for m in ("gds-cop", "gsp-ls"):
        assert [r["window_size"] for r in rows if r["method"] == m] == ["10", "20", "30"]
    assert all(float(r["arse_std"]) == 0.0 for r in rows)


def test_bench_is_byte_reproducible(tmp_path, bench_data):
    assert _bench(bench_data, tmp_path / "a", "--stress", "masking") == EXIT_OK
    assert _bench(bench_data, tmp_path / "b", "--stress", "masking") == EXIT_OK
    for name in ("report.json", "arse_vs_window.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_bench_failed_cell_exit_code(tmp_path, bench_data, capsys):
    rc = _bench(bench_data, tmp_path, "--window-sizes", "30,200")
    assert rc == 3
    assert "cells failed" in capsys.readouterr().err
    assert (tmp_path / "report.json").exists()


# --- configuration and help --------------------------------------------------

def test_config_file_with_flag_override(tmp_path, bench_data):
    sig, graph, _ = bench_data
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"data": str(sig), "edges": str(graph), "methods": "gsp-ls",
                               "window_sizes": [20, 30], "repeats": 1}))
    assert main(["bench", "--config", str(cfg), "--window-sizes", "30",
                 "--out", str(tmp_path / "o")]) == EXIT_OK
    assert list(_summary(tmp_path / "o")) == [("gsp-ls", 30, "none")]


def test_config_unknown_key_is_usage_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"windows": 3}))
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_USAGE
    assert "windows" in capsys.readouterr().err


def test_bad_flag_value_is_usage_error(tmp_path):
    assert main(["synth", "--nodes", "many", "--out", str(tmp_path)]) == EXIT_USAGE


@pytest.mark.parametrize("command", list(COMMANDS))
def test_help_documents_every_flag(command):
    parser = build_parser()
    sub = parser._subparsers._group_actions[0].choices[command]
    text = sub.format_help()
    for opt in COMMANDS[command][0]:
        assert opt.flag in text


def test_module_entry_point_and_no_color(tmp_path):
    env = dict(os.environ, NO_COLOR="1")
    res = subprocess.run([sys.executable, "-m", "gdsp", "predict", "--model", "missing.json",
                          "--input", "missing.csv"], capture_output=True, text=True,
                         env=env, cwd=tmp_path)
    assert res.returncode == EXIT_DATA
    assert "\x1b[" not in res.stderr and "missing.json" in res.stderr
    res = subprocess.run([sys.executable, "-m", "gdsp"], capture_output=True, text=True)
    assert res.returncode == EXIT_USAGE
