import csv
import json

import numpy as np
import pytest

from pipinn import cli, training as tr
from pipinn.errors import NotPositiveDefinite
from pipinn.problems import load_dataset, read_grid

SMALL_NET = {"hidden_layers": 2, "nodes": 5}


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert cli.run(["gen", "poisson", "8", "--seed", "3", "--out", str(root / "ds")]) == 0
    cfg = write(root / "train.json", {"dataset": "ds", "kind": ["mlp", "hydra", "pil"], "K": 2,
                                      "train": {"steps": 6, "batch_instances": 2}, "net": SMALL_NET})
    assert cli.run(["train", "--config", cfg, "--out", str(root / "tr"), "--threads", "1"]) == 0
    return root


def models(root):
    return [f"tr/models/{k}-K2-seed0.bin" for k in ("mlp", "hydra", "pil")]


# -- gen --------------------------------------------------------------------

def test_gen_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.run(["gen", "poisson", "100", "--seed", "7", "--out", str(tmp_path / d)]) == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a == b and len(a) == 102


def test_gen_family_passes_self_convergence(tmp_path):
    assert cli.run(["gen", "burgers-family", "10", "--out", str(tmp_path / "f")]) == 0
    ds = load_dataset(tmp_path / "f")
    assert len(ds) == 10 and all(np.all(np.isfinite(i.reference)) for i in ds.instances)


def test_gen_rejects_zero_count(tmp_path, capsys):
    assert cli.run(["gen", "poisson", "0", "--out", str(tmp_path)]) == cli.EXIT_CONFIG
    assert "count" in capsys.readouterr().err


def test_gen_from_config_and_env_output(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "envout"))
    cfg = write(tmp_path / "g.json", {"problem": "burgers-sine", "count": 2, "seed": 1})
    assert cli.run(["gen", "--config", cfg]) == 0
    assert load_dataset(tmp_path / "envout").name == "burgers-sine"
    assert json.loads((tmp_path / "envout" / "gen_config.json").read_text())["seed"] == 1


# -- train ------------------------------------------------------------------

def test_train_outputs(workspace):
    out = workspace / "tr"
    assert json.loads((out / "train_config.json").read_text())["K"] == 2
    summary = read_rows(out / "train_summary.csv")
    assert [r["kind"] for r in summary] == ["mlp", "hydra", "pil"]
    for k in ("mlp", "hydra", "pil"):
        m = tr.load_trained(out / "models" / f"{k}-K2-seed0.bin")
        assert m.kind == k and len(m.seen_ids) == 2
        assert len(read_rows(out / "traces" / f"{k}-K2-seed0.csv")) == 6


def test_train_is_deterministic(workspace, tmp_path):
    cfg = workspace / "train.json"
    assert cli.run(["train", "--config", str(cfg), "--out", str(tmp_path / "again"), "--threads", "1"]) == 0
    a = tree_bytes(workspace / "tr")
    b = tree_bytes(tmp_path / "again")
    a.pop("timings.csv"), b.pop("timings.csv")
    assert a == b


def test_invalid_kind_names_field(tmp_path, workspace, capsys):
    cfg = write(tmp_path / "t.json", {"dataset": str(workspace / "ds"), "kind": "resnet", "K": 2,
                                      "train": {"steps": 1, "bogus": 2}})
    assert cli.run(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    err = capsys.readouterr().err
    assert "kind[0]" in err and "train.bogus" in err


def test_bad_values_report_field_path(tmp_path, workspace, capsys):
    cfg = write(tmp_path / "t.json", {"dataset": str(workspace / "ds"), "kind": "hydra", "K": 2,
                                      "train": {"lr": -1.0}})
    assert cli.run(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG
    assert "train.lr" in capsys.readouterr().err
    cfg = write(tmp_path / "k.json", {"dataset": str(workspace / "ds"), "kind": "hydra", "K": 8})
    assert cli.run(["train", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_CONFIG


def test_resume_is_reproducible(workspace, tmp_path):
    base = {"dataset": str(workspace / "ds"), "kind": "hydra", "K": 2, "train": {"steps": 4},
            "resume": str(workspace / "tr/models/hydra-K2-seed0.bin")}
    traces = []
    for d in ("r1", "r2"):
        assert cli.run(["train", "--config", write(tmp_path / f"{d}.json", base), "--out", str(tmp_path / d)]) == 0
        traces.append((tmp_path / d / "traces" / "hydra-K2-seed0.csv").read_bytes())
    assert traces[0] == traces[1]
    first = read_rows(workspace / "tr/traces/hydra-K2-seed0.csv")
    resumed = read_rows(tmp_path / "r1/traces/hydra-K2-seed0.csv")
    assert float(resumed[0]["loss"]) < float(first[0]["loss"])


# -- eval -------------------------------------------------------------------

def test_eval_rows_and_grids(workspace, tmp_path):
    cfg = write(workspace / "eval.json", {"dataset": "ds", "models": models(workspace),
                                          "adapt": {"lambda_pi": 1e-8}})
    out = tmp_path / "ev"
    assert cli.run(["eval", "--config", cfg, "--out", str(out), "--emit-grids", "--threads", "1"]) == 0
    rows = read_rows(out / "results.csv")
    assert list(rows[0]) == cli.RESULT_COLUMNS
    # unseen rows: 6 instances x (mlp, mlp_pi2, hydra_pi2, pil)
    assert len(rows) == 6 * 4 and {r["split"] for r in rows} == {"unseen"}
    assert len(read_rows(out / "timings.csv")) == len(rows)
    index = json.loads((out / "grids" / "manifest.json").read_text())
    assert len(index["grids"]) == len(rows)
    ds = load_dataset(workspace / "ds")
    for entry, row in zip(index["grids"], rows):
        g = read_grid(out / entry["file"], tuple(index["grid_shape"]))
        assert tr.rel_l2(g, ds.instances[entry["id"]].reference) == float(row["rel_l2"])
        assert (out / entry["file"]).read_bytes() == g.astype("<f8").tobytes()


def test_eval_seen_hydra_matches_training_fit(workspace, tmp_path):
    cfg = write(tmp_path / "e.json", {"dataset": str(workspace / "ds"), "models": [str(workspace / models(workspace)[1])],
                                      "split": "seen", "methods": ["hydra"]})
    assert cli.run(["eval", "--config", cfg, "--out", str(tmp_path / "ev")]) == 0
    rows = read_rows(tmp_path / "ev" / "results.csv")
    model = tr.load_trained(workspace / models(workspace)[1])
    direct = tr.eval_seen_hydra(model, load_dataset(workspace / "ds"))
    assert [float(r["rel_l2"]) for r in rows] == [d.rel_l2 for d in direct]


def test_eval_is_deterministic(workspace, tmp_path):
    cfg = write(tmp_path / "e.json", {"dataset": str(workspace / "ds"),
                                      "models": [str(workspace / m) for m in models(workspace)],
                                      "grid_search": True, "lambda_pde_grid": [1.0, 10.0],
                                      "lambda_pi_grid": [1e-8, 1e-6]})
    for d in ("a", "b"):
        assert cli.run(["eval", "--config", cfg, "--out", str(tmp_path / d), "--threads", "1", "--emit-grids"]) == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    a.pop("timings.csv"), b.pop("timings.csv")
    assert a == b


def test_numerical_failure_exit_code(workspace, tmp_path, monkeypatch):
    def boom(*a, **k):
        raise NotPositiveDefinite("pivot 3 is not positive")
    monkeypatch.setattr(tr, "adapt_instance", boom)
    cfg = write(tmp_path / "e.json", {"dataset": str(workspace / "ds"), "models": [str(workspace / models(workspace)[2])]})
    assert cli.run(["eval", "--config", cfg, "--out", str(tmp_path / "ev")]) == cli.EXIT_NUMERIC


def test_missing_files_exit_code(tmp_path, workspace):
    assert cli.run(["train", "--config", str(tmp_path / "none.json")]) == cli.EXIT_IO
    cfg = write(tmp_path / "e.json", {"dataset": "missing", "models": ["m.bin"]})
    assert cli.run(["eval", "--config", cfg, "--out", str(tmp_path / "o")]) == cli.EXIT_IO


def test_usage_errors(tmp_path):
    assert cli.run(["frobnicate"]) == cli.EXIT_CONFIG
    (tmp_path / "bad.json").write_text("{not json")
    assert cli.run(["train", "--config", str(tmp_path / "bad.json")]) == cli.EXIT_CONFIG
    assert cli.run(["train", "--config", write(tmp_path / "v.json", {"version": 9})]) == cli.EXIT_CONFIG


# -- gridsearch and bench ---------------------------------------------------

def test_gridsearch_command(workspace, tmp_path):
    cfg = write(tmp_path / "g.json", {"dataset": str(workspace / "ds"), "model": str(workspace / models(workspace)[1]),
                                      "lambda_pde_grid": [1.0, 10.0], "lambda_pi_grid": [0.0, 1e-6]})
    assert cli.run(["gridsearch", "--config", cfg, "--out", str(tmp_path / "g")]) == 0
    best = json.loads((tmp_path / "g" / "gridsearch.json").read_text())
    scores = read_rows(tmp_path / "g" / "gridsearch_scores.csv")
    assert len(scores) == 4
    assert best["mean_rel_l2"] == min(float(r["mean_rel_l2"]) for r in scores)


def test_bench_reports_ratio(workspace, tmp_path):
    cfg = write(tmp_path / "b.json", {"dataset": str(workspace / "ds"), "model": str(workspace / models(workspace)[1]),
                                      "mlp_model": str(workspace / models(workspace)[0]),
                                      "single_pinn": {"train": {"steps": 20}, "net": SMALL_NET, "eval_every": 5}})
    assert cli.run(["bench", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "1"]) == 0
    rep = json.loads((tmp_path / "b" / "bench.json").read_text())
    assert len(rep["adapt_ms"]) == 5
    assert rep["adapt_ms_median"] == pytest.approx(float(np.median(rep["adapt_ms"])))
    assert rep["speedup"] == pytest.approx(rep["single_pinn_seconds"] / (rep["adapt_ms_median"] / 1e3))
    assert rep["target_rel_l2"] == rep["mlp_rel_l2"] and rep["grid_points"] == 201


def test_bench_rejects_mlp_model(workspace, tmp_path):
    cfg = write(tmp_path / "b.json", {"dataset": str(workspace / "ds"), "model": str(workspace / models(workspace)[0])})
    assert cli.run(["bench", "--config", cfg, "--out", str(tmp_path / "b")]) == cli.EXIT_CONFIG
