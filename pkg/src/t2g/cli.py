"""Command-line front end: simulate, ingest, featurize, rfe, tune, train, evaluate, importance, report.

Exit codes: 0 success, 1 usage error, 2 data error (missing input,
malformed file, hash mismatch, incompatible schema).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .evaluation import (REPORT_FIELDS, read_report_csv, report_row, split_chronological, write_report_csv,
                         write_series_csv)
from .features import FeatureMatrix, build_dataset, schema_path
from .forest import ForestParams, rf_fit
from .lstm import LstmParams, SequenceDataset, lstm_fit, make_sequences
from .pipeline import (evaluate_bundle, importance_table, load_bundle, save_bundle, select_features,
                       train_model)
from .selection import (LSTM_SPACE, RF_SPACE, SearchSpace, kfold_cv, random_search, rf_ranker,
                        write_trial_log)
from .simulator import load_scenario, simulate, write_cycles_csv
from .telegrams import DeviceCatalog, TelegramParseError, Window, clean, rasterize, read_log, write_log


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunManifest:
    """JSON record of a pipeline run: commands, seeds and artifact hashes.

    Artifacts are keyed by the path as given on the command line. Any
    artifact read by a later command must still hash to the recorded value.
    """

    def __init__(self, path):
        self.path = Path(path)
        if self.path.exists():
            self.data = json.loads(self.path.read_text())
        else:
            self.data = {"tool_version": __version__, "steps": [], "artifacts": {}}

    def check(self, paths) -> None:
        for p in paths:
            rec = self.data["artifacts"].get(str(p))
            if rec is None:
                continue
            if not Path(p).exists():
                raise DataError(f"manifest artifact missing: {p}")
            if sha256_file(p) != rec:
                raise DataError(f"hash mismatch for {p}: file changed since it was recorded")

    def record(self, command: str, args: dict, inputs, outputs) -> None:
        for p in outputs:
            self.data["artifacts"][str(p)] = sha256_file(p)
        self.data["steps"].append({
            "command": command,
            "args": args,
            "inputs": [str(p) for p in inputs],
            "outputs": [str(p) for p in outputs],
        })
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")


def _need(path) -> Path:
    p = Path(path)
    if not p.exists():
        raise DataError(f"input not found: {p}")
    return p


def _load_matrix(path) -> FeatureMatrix:
    _need(path)
    _need(schema_path(path))
    return FeatureMatrix.from_csv(path)


def _load_json(path) -> dict:
    return json.loads(_need(path).read_text())


# ---------------------------------------------------------------- commands

def cmd_simulate(a):
    config = load_scenario(a.scenario)
    run = simulate(config, a.horizon, a.seed)
    out = Path(a.output)
    truth = Path(a.truth) if a.truth else out.with_name(out.stem + ".cycles.csv")
    catalog = Path(a.catalog_out) if a.catalog_out else out.with_name(out.stem + ".catalog.json")
    write_log(out, run.telegrams)
    write_cycles_csv(truth, run.ground_truth_cycles)
    config.catalog.save(catalog)
    print(f"{len(run.telegrams)} telegrams, {len(run.ground_truth_cycles)} cycles -> {out}")
    return [], [out, truth, catalog]


def cmd_ingest(a):
    catalog = DeviceCatalog.load(_need(a.catalog))
    tel = read_log(_need(a.telegrams))
    kept = clean(tel, catalog)
    write_log(a.output, kept)
    print(f"{len(tel)} telegrams read, {len(kept)} kept -> {a.output}")
    return [a.telegrams, a.catalog], [Path(a.output)]


def cmd_featurize(a):
    catalog = DeviceCatalog.load(_need(a.catalog))
    tel = clean(read_log(_need(a.telegrams)), catalog)
    if not tel:
        raise DataError("no telegrams after cleaning")
    start = a.start if a.start is not None else tel[0].timestamp
    end = a.end if a.end is not None else tel[-1].timestamp
    series = rasterize(tel, catalog, Window(start, end))
    m = build_dataset(a.signal, series, catalog, a.p_threshold, a.utc_offset)
    m.to_csv(a.output)
    print(f"{len(m)} rows x {len(m.names)} features for {a.signal} -> {a.output}")
    return [a.telegrams, a.catalog], [Path(a.output), schema_path(a.output)]


def cmd_rfe(a):
    m = _load_matrix(a.matrix)
    n_keep = a.n_keep if a.n_keep else (len(m.names) + 1) // 2
    ranker = "ols" if a.ranker == "ols" else rf_ranker(ForestParams(n_estimators=a.ranker_trees,
                                                                    max_depth=a.ranker_depth))
    names = select_features(m, n_keep, ranker, a.step, a.seed, a.train_frac)
    Path(a.output).write_text(json.dumps({"target_signal": m.schema.target_signal,
                                          "schema_digest": m.schema.digest(),
                                          "features": names}, indent=2) + "\n")
    print(f"kept {len(names)} of {len(m.names)} features -> {a.output}")
    return [a.matrix], [Path(a.output)]


def _selected(a, m: FeatureMatrix):
    if not a.select:
        return None
    sel = _load_json(a.select)
    if sel.get("schema_digest") != m.schema.digest():
        raise DataError(f"{a.select} was made for a different feature schema")
    return sel["features"]


def cmd_tune(a):
    m = _load_matrix(a.matrix)
    names = _selected(a, m)
    train, _ = split_chronological(m, a.train_frac)
    sub = train.select(names) if names else train
    if a.space:
        space = SearchSpace.load(_need(a.space))
    else:
        space = RF_SPACE if a.model == "rf" else LSTM_SPACE
    if a.model == "rf":
        def make(params):
            fp = ForestParams(**{**params, "seed": a.seed})
            return lambda Xt, yt, Xv: rf_fit(Xt, yt, fp).predict(Xv)
        fit_eval = lambda params: kfold_cv(sub.X, sub.y, a.k, make(params))
    else:
        def fit_eval(params):
            lp = LstmParams(**{**params, "seed": a.seed, "lag": a.lag, "epochs": a.epochs})
            ds = make_sequences(sub, lp.lag)
            W = ds.windows.reshape(len(ds), -1)

            def fp(Xt, yt, Xv):
                L, D = ds.windows.shape[1:]
                tr = SequenceDataset(Xt.reshape(-1, L, D), yt, np.arange(len(yt)))
                return lstm_fit(tr, lp).predict(Xv.reshape(-1, L, D))
            return kfold_cv(W, ds.targets, a.k, fp)
    best, trials = random_search(space, a.trials, a.k, a.seed, fit_eval)
    out = Path(a.output)
    write_trial_log(out, trials)
    best_path = out.with_name(out.stem + ".best.json")
    best_path.write_text(json.dumps({"model": a.model, "trial": best.trial, "params": best.params,
                                     "mean_mae": best.mean_mae}, indent=2, sort_keys=True) + "\n")
    space_path = out.with_name(out.stem + ".space.json")
    space.save(space_path)
    print(f"best trial {best.trial}: mean MAE {best.mean_mae:.4f} params {best.params}")
    return [a.matrix], [out, best_path, space_path]


def cmd_train(a):
    m = _load_matrix(a.matrix)
    names = _selected(a, m)
    params = {}
    if a.params:
        p = _load_json(a.params)
        params = p.get("params", p)
    if a.model == "lstm" and a.lag is not None:
        params["lag"] = a.lag
    bundle = train_model(a.model, m, names, params, a.seed, a.train_frac)
    save_bundle(bundle, a.output)
    print(f"trained {a.model} on {bundle['n_train']} rows, {len(bundle['feature_names'])} features -> {a.output}")
    return [a.matrix], [Path(a.output)]


def cmd_evaluate(a):
    m = _load_matrix(a.matrix)
    bundle = load_bundle(_need(a.model))
    report, base, test, pred = evaluate_bundle(bundle, m)
    rows = [report_row(m.schema.target_signal, bundle["kind"], report)]
    write_report_csv(a.output, rows)
    outputs = [Path(a.output)]
    if a.series:
        write_series_csv(a.series, test.cycle_index, test.y, pred)
        outputs.append(Path(a.series))
    print(f"{bundle['kind']}: MAE {report.mae_s:.3f} RMSE {report.rmse_s:.3f} "
          f"EH {report.eh_pct:.2f} NM {report.nm_pct:.2f} (naive MAE {base.mae_s:.3f})")
    return [a.matrix, a.model], outputs


def cmd_importance(a):
    bundle = load_bundle(_need(a.model))
    table = importance_table(bundle)
    with open(a.output, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rank", "feature", "importance"])
        for r, (name, v) in enumerate(table, 1):
            w.writerow([r, name, f"{v:.6f}"])
    for r, (name, v) in enumerate(table[: a.top], 1):
        print(f"{r:3d} {name:12s} {v:.4f}")
    return [a.model], [Path(a.output)]


def cmd_report(a):
    rows = []
    for p in a.inputs:
        rows.extend(read_report_csv(_need(p)))
    for r in rows:
        missing = [k for k in REPORT_FIELDS if k not in r]
        if missing:
            raise DataError(f"report row missing fields {missing}")
    rows.sort(key=lambda r: (r["signal"], r["model"]))
    with open(a.output, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=REPORT_FIELDS, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    print(f"{len(rows)} rows -> {a.output}")
    return list(a.inputs), [Path(a.output)]


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="t2g", description="Time-to-green prediction pipeline")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--manifest", help="run manifest JSON to check inputs against and append to")
        return sp

    s = add("simulate", cmd_simulate, "simulate an actuated intersection and write its telegram log")
    s.add_argument("--scenario", required=True, help="shipped scenario name or JSON config path")
    s.add_argument("--horizon", type=int, required=True, help="simulated seconds")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("-o", "--output", required=True, help="telegram log CSV")
    s.add_argument("--truth", help="ground-truth cycles CSV (default <stem>.cycles.csv)")
    s.add_argument("--catalog-out", help="device catalog JSON (default <stem>.catalog.json)")

    s = add("ingest", cmd_ingest, "parse and clean a telegram log")
    s.add_argument("--telegrams", required=True)
    s.add_argument("--catalog", required=True)
    s.add_argument("-o", "--output", required=True)

    s = add("featurize", cmd_featurize, "build the per-cycle feature matrix of one signal")
    s.add_argument("--telegrams", required=True)
    s.add_argument("--catalog", required=True)
    s.add_argument("--signal", required=True)
    s.add_argument("--p-threshold", type=int, default=5, help="queue/congestion run length p in seconds")
    s.add_argument("--utc-offset", type=int, default=0, help="fixed offset for clock features, seconds")
    s.add_argument("--start", type=int, help="window start (epoch s); default first telegram")
    s.add_argument("--end", type=int, help="window end (epoch s); default last telegram")
    s.add_argument("-o", "--output", required=True)

    s = add("rfe", cmd_rfe, "recursive feature elimination on the train split")
    s.add_argument("--matrix", required=True)
    s.add_argument("--n-keep", type=int, help="features to keep (default half)")
    s.add_argument("--ranker", choices=("rf", "ols"), default="rf")
    s.add_argument("--ranker-trees", type=int, default=30)
    s.add_argument("--ranker-depth", type=int, default=8)
    s.add_argument("--step", type=int, default=1)
    s.add_argument("--train-frac", type=float, default=0.7)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("-o", "--output", required=True, help="selection JSON")

    s = add("tune", cmd_tune, "random hyperparameter search with chronological k-fold CV")
    s.add_argument("--matrix", required=True)
    s.add_argument("--model", choices=("rf", "lstm"), required=True)
    s.add_argument("--select", help="selection JSON from rfe")
    s.add_argument("--space", help="search space JSON (default: the built-in space)")
    s.add_argument("--trials", type=int, default=10)
    s.add_argument("--k", type=int, default=5)
    s.add_argument("--lag", type=int, default=7)
    s.add_argument("--epochs", type=int, default=100)
    s.add_argument("--train-frac", type=float, default=0.7)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("-o", "--output", required=True, help="trial log CSV")

    s = add("train", cmd_train, "fit a model on the train split")
    s.add_argument("--model", choices=("naive", "lr", "rf", "lstm"), required=True)
    s.add_argument("--matrix", required=True)
    s.add_argument("--select", help="selection JSON from rfe")
    s.add_argument("--params", help="hyperparameter JSON (e.g. the .best.json from tune)")
    s.add_argument("--lag", type=int, help="LSTM time lag")
    s.add_argument("--train-frac", type=float, default=0.7)
    s.add_argument("--seed", type=int, help="required for rf and lstm")
    s.add_argument("-o", "--output", required=True, help="model JSON")

    s = add("evaluate", cmd_evaluate, "score a model on the test split against naive")
    s.add_argument("--model", required=True)
    s.add_argument("--matrix", required=True)
    s.add_argument("--series", help="plot-ready CSV of (cycle, truth, prediction)")
    s.add_argument("-o", "--output", required=True, help="report CSV")

    s = add("importance", cmd_importance, "rank features of a random forest model")
    s.add_argument("--model", required=True)
    s.add_argument("--top", type=int, default=10)
    s.add_argument("-o", "--output", required=True)

    s = add("report", cmd_report, "merge report CSVs into one table")
    s.add_argument("inputs", nargs="+")
    s.add_argument("-o", "--output", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
        if a.command == "train" and a.model in ("rf", "lstm") and a.seed is None:
            parser.error(f"train --model {a.model} requires --seed")
    except UsageError as e:
        print(f"t2g: error: {e}", file=sys.stderr)
        return 1
    except SystemExit as e:  # --help / --version
        return int(e.code or 0)
    try:
        manifest = RunManifest(a.manifest) if a.manifest else None
        declared = [v for v in (getattr(a, k, None) for k in ("telegrams", "catalog", "matrix", "select", "params")) if v]
        if a.command in ("evaluate", "importance"):
            declared.append(a.model)
        declared += list(getattr(a, "inputs", None) or [])
        if manifest:
            manifest.check(declared)
        inputs, outputs = a.func(a)
        if manifest:
            args = {k: v for k, v in vars(a).items() if k not in ("func", "manifest")}
            manifest.record(a.command, args, inputs, outputs)
    except (DataError, TelegramParseError, ValueError, KeyError, OSError) as e:
        print(f"t2g: data error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
