import json

import pytest

from t2g.cli import main
from t2g.features import FeatureMatrix
from t2g.pipeline import importance_table, load_bundle


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("simulate", "--scenario", "cross_basic", "--horizon", 7200, "--seed", 3,
               "-o", d / "tg.csv", "--manifest", d / "run.json") == 0
    assert run("featurize", "--telegrams", d / "tg.csv", "--catalog", d / "tg.catalog.json",
               "--signal", "S1", "-o", d / "m.csv", "--manifest", d / "run.json") == 0
    return d


def test_simulate_outputs(workdir):
    assert (workdir / "tg.cycles.csv").read_text().startswith("signal_id,n,start_k,red_s,green_s")
    m = FeatureMatrix.from_csv(workdir / "m.csv")
    assert m.schema.target_signal == "S1" and len(m) > 50


def test_usage_errors(workdir, capsys):
    assert run("train", "--model", "rf", "--matrix", workdir / "m.csv", "-o", workdir / "x.json") == 1
    assert "requires --seed" in capsys.readouterr().err
    assert run("frobnicate") == 1
    assert run("simulate", "--scenario", "cross_basic", "--bogus") == 1
    assert run("train", "--model", "svm", "--matrix", workdir / "m.csv", "-o", workdir / "x.json") == 1
    assert run("--help") == 0


def test_data_errors(workdir):
    assert run("train", "--model", "lr", "--matrix", workdir / "nope.csv", "-o", workdir / "x.json") == 2
    bad = workdir / "bad.csv"
    bad.write_text("1,D1,7\n")
    assert run("ingest", "--telegrams", bad, "--catalog", workdir / "tg.catalog.json", "-o", workdir / "c.csv") == 2


def test_pipeline_commands(workdir):
    d = workdir
    assert run("rfe", "--matrix", d / "m.csv", "--n-keep", 10, "--step", 5, "--seed", 0, "-o", d / "sel.json") == 0
    sel = json.loads((d / "sel.json").read_text())
    assert len(sel["features"]) == 10
    assert run("tune", "--matrix", d / "m.csv", "--model", "rf", "--select", d / "sel.json", "--trials", 2,
               "--k", 3, "--seed", 0, "-o", d / "trials.csv") == 0
    assert (d / "trials.csv").read_text().startswith("trial,params_json,fold_losses,mean_mae,mean_mse")
    assert run("train", "--model", "rf", "--matrix", d / "m.csv", "--select", d / "sel.json",
               "--params", d / "trials.best.json", "--seed", 1, "-o", d / "rf.json") == 0
    assert run("train", "--model", "naive", "--matrix", d / "m.csv", "-o", d / "naive.json") == 0
    for k in ("rf", "naive"):
        assert run("evaluate", "--model", d / f"{k}.json", "--matrix", d / "m.csv", "-o", d / f"r_{k}.csv",
                   "--series", d / f"s_{k}.csv") == 0
    assert run("importance", "--model", d / "rf.json", "-o", d / "imp.csv") == 0
    assert run("report", d / "r_rf.csv", d / "r_naive.csv", "-o", d / "report.csv") == 0
    lines = (d / "report.csv").read_text().splitlines()
    assert len(lines) == 3 and lines[1].startswith("S1,naive")
    assert len(importance_table(load_bundle(d / "rf.json"))) == 10
    assert run("importance", "--model", d / "naive.json", "-o", d / "imp2.csv") == 2


def test_manifest_hash_mismatch(workdir):
    d = workdir
    manifest = json.loads((d / "run.json").read_text())
    assert str(d / "m.csv") in manifest["artifacts"]
    text = (d / "m.csv").read_text()
    try:
        (d / "m.csv").write_text(text + "\n")
        assert run("train", "--model", "lr", "--matrix", d / "m.csv", "-o", d / "lr.json",
                   "--manifest", d / "run.json") == 2
    finally:
        (d / "m.csv").write_text(text)
    assert run("train", "--model", "lr", "--matrix", d / "m.csv", "-o", d / "lr.json",
               "--manifest", d / "run.json") == 0


def test_evaluate_rejects_other_signal(workdir):
    d = workdir
    assert run("featurize", "--telegrams", d / "tg.csv", "--catalog", d / "tg.catalog.json",
               "--signal", "S3", "-o", d / "m3.csv") == 0
    assert run("train", "--model", "naive", "--matrix", d / "m.csv", "-o", d / "n1.json") == 0
    assert run("evaluate", "--model", d / "n1.json", "--matrix", d / "m3.csv", "-o", d / "r.csv") == 2
