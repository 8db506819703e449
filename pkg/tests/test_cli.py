import csv
import json
from pathlib import Path

import pytest

from gantsc import cli
from gantsc.config import ConfigError, load_config

ROOT = Path(__file__).resolve().parents[1]
DATA = {"benchmark": {"n": 900, "d": 3, "seed": 1}, "fractions": [0.4, 0.2, 0.4], "split_seed": 1}


def run(tmp, command, cfg, out, seed=None, capsys=None):
    path = tmp / f"{out}.json"
    path.write_text(json.dumps(cfg))
    argv = [command, "--config", str(path), "--out", str(tmp / out)]
    if seed is not None:
        argv += ["--seed", str(seed)]
    return cli.main(argv)


def manifest(tmp, out):
    return json.loads((tmp / out / "manifest.json").read_text())


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Workspace with a forest teacher, an MLP teacher and a small GAN."""
    tmp = tmp_path_factory.mktemp("cli")
    assert run(tmp, "train-teacher", {"data": DATA, "teacher": {"n_trees": 10}}, "forest") == 0
    assert run(tmp, "train-teacher", {"data": DATA, "teacher": {"kind": "mlp", "hidden": [16], "epochs": 3}},
               "mlp") == 0
    gan = {"noise_dim": 4, "hidden": [8], "epochs": 4, "checkpoint_stride": 2}
    assert run(tmp, "train-gan", {"data": DATA, "gan": gan, "degrade_epochs": 2}, "gan") == 0
    return tmp


def test_train_teacher_outputs(ws):
    rep = json.loads((ws / "forest" / "report.json").read_text())
    assert rep["kind"] == "forest" and 0.5 < rep["accuracy"] <= 1 and rep["model"]["trees"] == 10
    m = manifest(ws, "forest")
    assert set(m["outputs"]) == {"teacher.gtsc", "report.json"} and m["command"] == "train-teacher"
    lines = (ws / "mlp" / "metrics.jsonl").read_text().splitlines()
    assert [json.loads(x)["epoch"] for x in lines] == [1, 2, 3]
    rows = list(csv.DictReader(open(ws / "mlp" / "curves.csv")))
    assert len(rows) == 3 and "test_accuracy" in rows[0]


def test_train_gan_outputs(ws):
    rep = json.loads((ws / "gan" / "report.json").read_text())
    assert rep["checkpoints"] == [0, 2, 4] and rep["degraded"]["extra_epochs"] == 2
    assert {"gan.gtsc", "gan_degraded.gtsc", "metrics.jsonl", "gan_log.csv"} <= set(manifest(ws, "gan")["outputs"])


def test_generate_and_munge(ws):
    assert run(ws, "generate", {"gan": str(ws / "gan" / "gan.gtsc"), "m": 100, "epoch": 2}, "gen") == 0
    rows = list(csv.reader(open(ws / "gen" / "synthetic.csv")))
    assert len(rows) == 101 and len(rows[0]) == 3
    assert str(ws / "gan" / "gan.gtsc") in manifest(ws, "gen")["inputs"]
    assert run(ws, "munge", {"data": DATA, "munge": {"multiplier": 2}}, "munge") == 0
    assert json.loads((ws / "munge" / "report.json").read_text())["rows"] == 2 * 360


def test_compress_forest_and_mlp(ws):
    cfg = {"data": DATA, "teacher": str(ws / "forest" / "teacher.gtsc"), "gan": str(ws / "gan" / "gan.gtsc"),
           "source": {"kind": "pooled", "ratio": 2}, "student": {"n_trees": 1}}
    assert run(ws, "compress", cfg, "cf") == 0
    rep = json.loads((ws / "cf" / "report.json").read_text())
    assert rep["provenance"] == {"gan": 720, "real": 360} and rep["model"]["trees"] == 1
    cfg = {"data": DATA, "teacher": str(ws / "mlp" / "teacher.gtsc"), "gan": str(ws / "gan" / "gan.gtsc"),
           "student": {"kind": "mlp", "hidden": [4]}, "p_fake": 0.5, "epochs": 2}
    assert run(ws, "compress", cfg, "cm") == 0
    curves = [json.loads(x) for x in (ws / "cm" / "metrics.jsonl").read_text().splitlines()]
    assert len(curves) == 2 and all(0.3 < c["fake_fraction"] < 0.7 for c in curves)


def test_sweep_and_list_p_fake(ws):
    base = {"data": DATA, "teacher": str(ws / "mlp" / "teacher.gtsc"), "gan": str(ws / "gan" / "gan.gtsc"),
            "student": {"kind": "mlp", "hidden": [4]}, "epochs": 1}
    assert run(ws, "sweep", {**base, "p_fake": [0.0, 0.5, 1.0], "seeds": [0, 1]}, "sw") == 0
    summary = json.loads((ws / "sw" / "summary.json").read_text())
    assert [g["p_fake"] for g in summary["grid"]] == [0.0, 0.5, 1.0]
    best = max(g["validation_accuracy"] for g in summary["grid"])
    assert summary["best_validation_accuracy"] == best
    assert (ws / "sw" / "p_fake_0.50" / "report.json").exists()
    assert run(ws, "compress", {**base, "p_fake": [0.0, 1.0]}, "swc") == 0
    assert json.loads((ws / "swc" / "summary.json").read_text())["grid"][1]["p_fake"] == 1.0


def test_score_triple(ws):
    cfg = {"data": DATA, "teacher": str(ws / "forest" / "teacher.gtsc"), "classifier": str(ws / "mlp" / "teacher.gtsc"),
           "replicates": 2, "student": {"kind": "forest"},
           "datasets": {"real": {"kind": "real"}, "gan": {"kind": "gan", "path": str(ws / "gan" / "gan.gtsc")},
                        "munge": {"kind": "csv", "path": str(ws / "munge" / "munge.csv")}}}
    assert run(ws, "score", cfg, "score") == 0
    real = json.loads((ws / "score" / "score_real.json").read_text())
    assert real["score"] == 1.0 and real["confidence"]["score"] >= 1.0
    table = json.loads((ws / "score" / "comparison.json").read_text())
    assert sorted(r["dataset"] for r in table["datasets"]) == ["gan", "munge", "real"]


def test_benchmark_reports_speedup_and_sizes(ws):
    t = str(ws / "forest" / "teacher.gtsc")
    cfg = {"data": DATA, "teacher": t, "student": str(ws / "cf" / "student.gtsc"), "n_queries": 3000, "repeats": 3}
    assert run(ws, "benchmark", cfg, "bench") == 0
    rep = json.loads((ws / "bench" / "benchmark.json").read_text())
    assert {"teacher", "student", "speedup", "size_ratio", "n_queries"} <= set(rep)
    assert rep["size_ratio"] > 1
    assert manifest(ws, "bench")["timing_outputs"] == ["benchmark.json"]


def test_reruns_are_byte_identical(ws):
    cfg = {"data": DATA, "teacher": {"n_trees": 4}}
    assert run(ws, "train-teacher", cfg, "r1", seed=3) == 0
    assert run(ws, "train-teacher", cfg, "r2", seed=3) == 0
    assert manifest(ws, "r1")["outputs"] == manifest(ws, "r2")["outputs"]
    assert manifest(ws, "r1")["seed"] == 3


def _err(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


def test_unknown_key_is_rejected_before_any_output(tmp_path, capsys):
    assert run(tmp_path, "train-teacher", {"data": DATA, "teachr": {}}, "bad") == 2
    err = _err(capsys)
    assert err["error"] == "ConfigError" and "teachr" in err["message"] and err["command"] == "train-teacher"
    assert not (tmp_path / "bad").exists()
    assert run(tmp_path, "train-teacher", {"data": {**DATA, "benchmark": {"dims": 3}}}, "bad2") == 2
    assert "dims" in _err(capsys)["message"]


def test_runtime_errors_are_structured(ws, tmp_path, capsys):
    other = {"benchmark": {"n": 300, "d": 5}, "fractions": [0.5, 0.5]}
    cfg = {"data": other, "teacher": str(ws / "forest" / "teacher.gtsc"), "source": {"kind": "real"}}
    assert run(tmp_path, "compress", cfg, "mismatch") == 1
    assert "features" in _err(capsys)["message"]
    assert cli.main(["generate", "--config", str(tmp_path / "missing.json")]) == 2
    assert _err(capsys)["error"] == "ConfigError"
    assert cli.main(["frobnicate"]) == 2
    assert _err(capsys)["error"] == "UsageError"


RECIPES = ["fig1a_curves", "fig1c_pfake", "fig1e_quality", "fig2e_throughput", "table2_scores"]


@pytest.mark.parametrize("recipe", RECIPES)
def test_example_configs_satisfy_the_schema(recipe):
    steps = json.loads((ROOT / "configs" / recipe / "steps.json").read_text())
    assert steps
    for command, name, _ in steps:
        cls, _ = cli.COMMANDS[command]
        load_config(cls, ROOT / "configs" / recipe / name)


def test_load_config_errors(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(cli.COMMANDS["sweep"][0], p)
    p.write_text("[]")
    with pytest.raises(ConfigError):
        load_config(cli.COMMANDS["sweep"][0], p)
