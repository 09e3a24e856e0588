"""Batch command-line front end.

Every command writes its outputs and a ``manifest.json`` into ``--out``.
Exit codes: 0 success, 2 usage or input error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    Dataset,
    EncodingConfig,
    consolidate_answers,
    encode_features,
    filter_by_duration,
    interpolate,
    parse_survey_csv,
    split,
    write_survey_csv,
)
from .device import ReputationTables
from .errors import ContractError, DataError, ModelLoadError, TrainingError, TrustDomainError
from .evaluation import (
    ExperimentConfig,
    ablate_by_perspective,
    confidence_curve,
    evaluate,
    fit_partitions,
    timing_benchmark,
    write_report_csv,
    write_report_json,
)
from .model import TrustLevel, assess_batch, attribute_significance, load_model, save_model
from .service import AggregationMode, write_ledgers_jsonl
from .simulator import ConfigError, SimConfig, emit_dataset, generate_population, run_all_episodes

log = logging.getLogger("iottrust")

USAGE_ERRORS = (ValueError, OSError, DataError, ModelLoadError, ContractError, ConfigError,
                TrustDomainError)


class UsageError(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("config", "top level must be a JSON object")
    return doc


def _experiment_config(args) -> ExperimentConfig:
    doc = _load_config(args.config)
    try:
        cfg = ExperimentConfig.from_dict(doc)
    except TypeError as exc:
        raise ConfigError("config", str(exc)) from None
    tc = cfg.train
    if getattr(args, "epochs", None) is not None:
        tc = replace(tc, max_epochs=args.epochs)
    if getattr(args, "tau", None) is not None:
        tc = replace(tc, tau=args.tau)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
        tc = replace(tc, seed=args.seed)
    if getattr(args, "split", None) is not None:
        cfg = replace(cfg, train_fraction=args.split)
    if getattr(args, "interpolate", None) is not None:
        cfg = replace(cfg, interpolation_factor=args.interpolate)
    return replace(cfg, train=tc)


def _write_manifest(args, out: Path, started, **extra):
    manifest = {
        "command": args.command,
        "config": args.config,
        "seed": args.seed,
        "mode": args.mode,
        "inputs": {k: v for k, v in vars(args).items()
                   if k in ("dataset", "survey", "tables", "model", "csv") and v},
        "outputs": sorted(p.name for p in out.iterdir() if p.name != "manifest.json"),
        "tool_version": __version__,
        "wall_time_s": round(time.perf_counter() - started, 3),
    }
    manifest.update(extra)
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def cmd_simulate(args, out):
    doc = _load_config(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.mode is not None:
        doc["mode"] = args.mode
    cfg = SimConfig.from_dict(doc)
    scenario = generate_population(cfg)
    run_all_episodes(scenario)
    ds = emit_dataset(scenario, cfg)
    ds.to_csv(out / "dataset.csv")
    scenario.save(out / "scenario.json")
    scenario.tables.to_csv(out / "reputation_table.csv")
    write_ledgers_jsonl(scenario.ledgers.values(), out / "ledgers.jsonl")
    args.seed = cfg.seed
    return {"n_samples": len(ds), "level_counts": np.bincount(ds.levels, minlength=5).tolist()}


def cmd_ingest(args, out):
    doc = _load_config(args.config)
    enc = EncodingConfig(**{k: tuple(v) if isinstance(v, list) else v
                            for k, v in doc.get("encoding", {}).items()})
    if args.mode is not None:
        enc = replace(enc, mode=AggregationMode(args.mode))
    tables = ReputationTables.from_csv(args.tables)
    responses, rejects = parse_survey_csv(args.survey)
    rows = [(rej.line, rej.reason) for rej in rejects]
    samples = []
    for r in responses:
        try:
            samples.append(encode_features(r, tables, enc))
        except DataError as exc:
            rows.append((r.survey_id, str(exc)))
    Dataset.from_samples(samples).to_csv(out / "dataset.csv")
    with open(out / "rejects.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "reason"])
        w.writerows(rows)
    return {"n_samples": len(samples), "n_rejected": len(rows)}


def cmd_filter(args, out):
    responses, rejects = parse_survey_csv(args.survey)
    kept, too_fast_or_slow = filter_by_duration(responses)
    accepted, flagged = consolidate_answers(kept, seed=args.seed or 0, group_size=args.group_size)
    write_survey_csv(accepted, out / "accepted.csv")
    write_survey_csv(too_fast_or_slow, out / "rejected_duration.csv")
    with open(out / "flagged.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["survey_id"])
        w.writerows([sid] for sid in flagged)
    return {"n_parsed": len(responses), "n_malformed": len(rejects),
            "n_duration_rejected": len(too_fast_or_slow),
            "n_accepted": len(accepted), "n_flagged": len(flagged)}


def cmd_interpolate(args, out):
    ds = Dataset.from_csv(args.dataset)
    big = interpolate(ds, args.factor, seed=args.seed or 0)
    big.to_csv(out / "dataset.csv")
    return {"n_in": len(ds), "n_out": len(big)}


def cmd_train(args, out):
    ds = Dataset.from_csv(args.dataset)
    cfg = _experiment_config(args)
    if args.split is not None:
        train_set, test_set = split(ds, cfg.train_fraction, cfg.seed)
        test_set.to_csv(out / "test.csv")
    else:
        train_set, test_set = ds, ds.subset([])
    train_set.to_csv(out / "train.csv")
    n_train = len(train_set)
    train_set = interpolate(train_set, cfg.interpolation_factor, cfg.seed)
    f = fit_partitions(train_set, test_set, cfg)
    net = f.net
    net.metadata["mode"] = args.mode or AggregationMode.PAPER_VERBATIM.value
    save_model(net, out / "model.json")
    with open(out / "loss_history.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "cost"])
        for i, c in enumerate(f.result.loss_history, 1):
            w.writerow([i, repr(c)])
    return {"n_train": n_train, "n_test": len(test_set), "n_train_fitted": len(train_set),
            "tau": cfg.train.tau, "epochs": f.result.epochs,
            "final_cost": f.result.final_cost, "converged": f.result.converged,
            "experiment": cfg.to_dict()}


def _read_feature_rows(path, n_inputs):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if rows and not _is_numeric(rows[0]):
        rows = rows[1:]
    return np.array([[float(v) for v in r[:n_inputs]] for r in rows if r]).reshape(-1, n_inputs)


def _is_numeric(row):
    try:
        [float(v) for v in row]
        return True
    except ValueError:
        return False


def cmd_assess(args, out):
    net = load_model(args.model)
    if args.features is not None:
        X = np.array([[float(v) for v in args.features.split(",")]])
    elif args.csv is not None:
        X = _read_feature_rows(args.csv, net.n_inputs)
    else:
        raise UsageError("give --features or --csv")
    if X.shape[1] != net.n_inputs:
        raise ContractError(f"model takes {net.n_inputs} features, got {X.shape[1]}")
    levels, conf, probs = assess_batch(net, X)
    lines = [
        f"{TrustLevel(l).name} {c:.4f} " + " ".join(f"{p:.4f}" for p in row)
        for l, c, row in zip(levels, conf, probs)
    ]
    print("\n".join(lines))
    return None


def cmd_significance(args, out):
    net = load_model(args.model)
    ds = Dataset.from_csv(args.dataset)
    names = net.metadata.get("feature_names", ds.feature_names)
    report = attribute_significance(net, ds.X, names)
    with open(out / "significance.json", "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")
    with open(out / "significance.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["attribute", *(l.name for l in TrustLevel), "max"])
        for name, row in zip(report.attribute_names, report.per_level):
            w.writerow([name, *(repr(float(v)) for v in row), repr(float(row.max()))])
    return {"perspectives": report.per_perspective}


def cmd_evaluate(args, out):
    net = load_model(args.model)
    ds = Dataset.from_csv(args.dataset)
    rep = evaluate(net, ds)
    write_report_csv({"model": rep}, out / "metrics.csv")
    write_report_json({"model": rep}, out / "metrics.json")
    return {"macro_accuracy": rep.macro_accuracy}


def cmd_ablate(args, out):
    ds = Dataset.from_csv(args.dataset)
    cfg = _experiment_config(args)
    reports = ablate_by_perspective(ds, cfg)
    write_report_csv(reports, out / "ablation.csv")
    write_report_json(reports, out / "ablation.json")
    return {"experiment": cfg.to_dict()}


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def cmd_benchmark(args, out):
    ds = Dataset.from_csv(args.dataset)
    cfg = _experiment_config(args)
    res = timing_benchmark(ds, cfg, _int_list(args.epoch_points))
    with open(out / "timing.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epochs", "seconds"])
        w.writerows(res.points)
    with open(out / "timing.json", "w") as fh:
        json.dump(res.to_dict(), fh, indent=2)
        fh.write("\n")
    return {"r_squared": res.r_squared}


def cmd_confidence(args, out):
    ds = Dataset.from_csv(args.dataset)
    cfg = _experiment_config(args)
    curve = confidence_curve(ds, cfg, _int_list(args.checkpoints))
    with open(out / "confidence.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "mean_confidence"])
        w.writerows((e, repr(c)) for e, c in curve)
    return {}


COMMANDS = {
    "simulate": cmd_simulate, "ingest": cmd_ingest, "filter": cmd_filter,
    "interpolate": cmd_interpolate, "train": cmd_train, "assess": cmd_assess,
    "significance": cmd_significance, "evaluate": cmd_evaluate, "ablate": cmd_ablate,
    "benchmark": cmd_benchmark, "confidence": cmd_confidence,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON configuration file")
    common.add_argument("--seed", type=int, help="root seed (overrides config)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--mode", choices=[m.value for m in AggregationMode],
                        help="reliability aggregation mode")

    parser = argparse.ArgumentParser(prog="iottrust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("simulate", parents=[common], help="generate a synthetic scenario and dataset")

    p = sub.add_parser("ingest", parents=[common], help="encode survey answers into features")
    p.add_argument("--survey", required=True)
    p.add_argument("--tables", required=True, help="property reputation table CSV")

    p = sub.add_parser("filter", parents=[common], help="apply duration and agreement filters")
    p.add_argument("--survey", required=True)
    p.add_argument("--group-size", type=int, default=10)

    p = sub.add_parser("interpolate", parents=[common], help="expand a dataset by interpolation")
    p.add_argument("--dataset", required=True)
    p.add_argument("--factor", type=int, default=10)

    for name, helptext in (("train", "train a trust model"), ("ablate", "per-perspective ablation"),
                           ("benchmark", "training time vs epochs"),
                           ("confidence", "mean confidence vs epochs")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--dataset", required=True)
        p.add_argument("--epochs", type=int)
        p.add_argument("--tau", type=float)
        p.add_argument("--split", type=float, help="train fraction, e.g. 0.7")
        p.add_argument("--interpolate", type=int, help="interpolation factor for the train part")
        if name == "benchmark":
            p.add_argument("--epoch-points", default="10,50,100,200,500")
        if name == "confidence":
            p.add_argument("--checkpoints", default="10,50,100,200,500")

    p = sub.add_parser("assess", parents=[common], help="assess feature vectors")
    p.add_argument("--model", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--features", help="comma-separated feature values")
    g.add_argument("--csv", help="CSV of feature rows")

    for name in ("significance", "evaluate"):
        p = sub.add_parser(name, parents=[common], help=f"{name} report for a model")
        p.add_argument("--model", required=True)
        p.add_argument("--dataset", required=True)
    return parser


def main(argv=None):
    level = os.environ.get("IOTTRUST_LOG", "error").upper()
    logging.basicConfig(level=getattr(logging, level, logging.ERROR),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    out = Path(args.out)
    try:
        if args.command != "assess":
            out.mkdir(parents=True, exist_ok=True)
        extra = COMMANDS[args.command](args, out)
    except TrainingError as exc:
        print(f"iottrust {args.command}: {exc}", file=sys.stderr)
        return 3
    except (UsageError, *USAGE_ERRORS) as exc:
        print(f"iottrust {args.command}: {exc}", file=sys.stderr)
        return 2
    if extra is not None:
        _write_manifest(args, out, started, **extra)
    return 0


if __name__ == "__main__":
    sys.exit(main())
