"""Metrics and experiment suites for trained trust models."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import stats

from .dataset import Dataset, interpolate, split
from .model import (
    N_LEVELS,
    NetworkParameters,
    TrainConfig,
    TrainResult,
    TrustLevel,
    assess_batch,
    build_network,
    forward,
    train,
)

log = logging.getLogger(__name__)


class ConfusionMatrix:
    """Counts with rows = actual level and columns = detected level."""

    def __init__(self, counts):
        self.counts = np.asarray(counts, dtype=np.int64)
        if self.counts.shape != (N_LEVELS, N_LEVELS) or self.counts.min() < 0:
            raise ValueError(f"need a non-negative {N_LEVELS}x{N_LEVELS} matrix")

    @classmethod
    def from_labels(cls, actual, detected):
        counts = np.zeros((N_LEVELS, N_LEVELS), dtype=np.int64)
        np.add.at(counts, (np.asarray(actual, int), np.asarray(detected, int)), 1)
        return cls(counts)

    @property
    def total(self):
        return int(self.counts.sum())

    def correct(self, l):
        return int(self.counts[l, l])

    def detected(self, l):
        return int(self.counts[:, l].sum())

    def actual(self, l):
        return int(self.counts[l].sum())

    def correct_not(self, l):
        """Samples neither actually ``l`` nor detected as ``l``."""
        return self.total - self.actual(l) - self.detected(l) + self.correct(l)


def confusion(net: NetworkParameters, test_set: Dataset) -> ConfusionMatrix:
    levels, _, _ = assess_batch(net, test_set.X)
    return ConfusionMatrix.from_labels(test_set.levels, levels)


def _ratio(num, den):
    return num / den if den else 0.0


def precision_level(cm: ConfusionMatrix, l) -> float:
    return _ratio(cm.correct(l), cm.detected(l))


def recall_level(cm: ConfusionMatrix, l) -> float:
    return _ratio(cm.correct(l), cm.actual(l))


def accuracy_level(cm: ConfusionMatrix, l) -> float:
    return _ratio(cm.correct(l) + cm.correct_not(l), cm.total)


@dataclass
class MetricsReport:
    """Per-level and macro-averaged precision, recall and accuracy.

    ``undefined`` names the metrics whose denominator was zero; they are
    reported as 0.
    """

    precision: list
    recall: list
    accuracy: list
    n_samples: int
    fraction_correct: float
    undefined: list = field(default_factory=list)
    averaging: str = "macro"

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix):
        undefined = []
        for l in range(N_LEVELS):
            name = TrustLevel(l).name
            if cm.detected(l) == 0:
                undefined.append(f"precision:{name}")
            if cm.actual(l) == 0:
                undefined.append(f"recall:{name}")
        return cls(
            precision=[precision_level(cm, l) for l in range(N_LEVELS)],
            recall=[recall_level(cm, l) for l in range(N_LEVELS)],
            accuracy=[accuracy_level(cm, l) for l in range(N_LEVELS)],
            n_samples=cm.total,
            fraction_correct=_ratio(int(np.trace(cm.counts)), cm.total),
            undefined=undefined,
        )

    @property
    def macro_precision(self):
        return float(np.mean(self.precision))

    @property
    def macro_recall(self):
        return float(np.mean(self.recall))

    @property
    def macro_accuracy(self):
        return float(np.mean(self.accuracy))

    def to_dict(self):
        d = asdict(self)
        d.update(macro_precision=self.macro_precision, macro_recall=self.macro_recall,
                 macro_accuracy=self.macro_accuracy)
        return d

    def rows(self):
        for l in range(N_LEVELS):
            yield TrustLevel(l).name, self.precision[l], self.recall[l], self.accuracy[l]
        yield "macro", self.macro_precision, self.macro_recall, self.macro_accuracy


def evaluate(net: NetworkParameters, test_set: Dataset) -> MetricsReport:
    return MetricsReport.from_confusion(confusion(net, test_set))


def write_report_csv(reports: dict, path):
    """One row per (report, level) with precision, recall and accuracy."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["report", "level", "precision", "recall", "accuracy"])
        for name, rep in reports.items():
            for row in rep.rows():
                w.writerow([name, row[0], *(repr(float(v)) for v in row[1:])])


def write_report_json(reports: dict, path, **extra):
    doc = {name: rep.to_dict() for name, rep in reports.items()}
    doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass
class ExperimentConfig:
    """Network shape, training settings and data handling for an experiment.

    The training partition is interpolated by ``interpolation_factor``;
    with ``interpolate_before_split`` the whole dataset is expanded first.
    """

    hidden: tuple = (32, 32)
    train: TrainConfig = field(default_factory=TrainConfig)
    train_fraction: float = 0.7
    seed: int = 0
    interpolation_factor: int = 1
    interpolate_before_split: bool = False

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        tc = TrainConfig(**d.pop("train", {}))
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(train=tc, **d)

    def to_dict(self):
        return asdict(self)


@dataclass
class Fit:
    result: TrainResult
    train_set: Dataset
    test_set: Dataset

    @property
    def net(self):
        return self.result.net


def prepare(ds: Dataset, cfg: ExperimentConfig):
    """Split (and optionally interpolate) ``ds`` into train and test partitions."""
    if cfg.interpolate_before_split:
        ds = interpolate(ds, cfg.interpolation_factor, cfg.seed)
        return split(ds, cfg.train_fraction, cfg.seed)
    train_set, test_set = split(ds, cfg.train_fraction, cfg.seed)
    return interpolate(train_set, cfg.interpolation_factor, cfg.seed), test_set


def fit_partitions(train_set: Dataset, test_set: Dataset, cfg: ExperimentConfig,
                   callback=None, train_cfg=None) -> Fit:
    sizes = [train_set.X.shape[1], *cfg.hidden, N_LEVELS]
    net = build_network(sizes, seed=cfg.seed,
                        metadata={"feature_names": list(train_set.feature_names)})
    result = train(net, train_set.X, train_set.levels, train_cfg or cfg.train, callback)
    return Fit(result, train_set, test_set)


def fit(ds: Dataset, cfg: ExperimentConfig, callback=None) -> Fit:
    train_set, test_set = prepare(ds, cfg)
    return fit_partitions(train_set, test_set, cfg, callback)


def ablate_by_perspective(ds: Dataset, cfg: ExperimentConfig) -> dict:
    """Retrain on each perspective's attributes alone and on all of them.

    Every model sees the same train/test partition. Returns reports keyed
    by perspective name plus ``"full"``.
    """
    train_set, test_set = prepare(ds, cfg)
    reports = {}
    for p in ds.perspectives:
        cols = ds.columns(p)
        if not cols:
            log.warning("perspective %s has no attributes, skipped", p)
            continue
        f = fit_partitions(train_set.select(cols), test_set.select(cols), cfg)
        reports[p] = evaluate(f.net, f.test_set)
    f = fit_partitions(train_set, test_set, cfg)
    reports["full"] = evaluate(f.net, f.test_set)
    return reports


def mean_confidence(net: NetworkParameters, X) -> float:
    return float(forward(net, X).max(axis=1).mean())


def confidence_curve(ds: Dataset, cfg: ExperimentConfig, checkpoints) -> list:
    """Mean test-set confidence after each checkpoint epoch of one training run.

    Checkpoint 0 measures the untrained network. If training converges
    before a checkpoint, later checkpoints report the converged model.
    """
    checkpoints = [int(c) for c in checkpoints]
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise ValueError("checkpoints must be strictly increasing")
    train_set, test_set = prepare(ds, cfg)
    wanted = set(checkpoints)
    seen = {}

    def record(epoch, net):
        if epoch in wanted:
            seen[epoch] = mean_confidence(net, test_set.X)

    if 0 in wanted:
        sizes = [train_set.X.shape[1], *cfg.hidden, N_LEVELS]
        seen[0] = mean_confidence(build_network(sizes, seed=cfg.seed), test_set.X)
    tc = replace(cfg.train, max_epochs=max(max(checkpoints), 1))
    f = fit_partitions(train_set, test_set, cfg, record, tc)
    final = mean_confidence(f.net, test_set.X)
    return [(c, seen.get(c, final)) for c in checkpoints]


@dataclass
class TimingResult:
    points: list
    slope: float
    intercept: float
    r_squared: float

    def to_dict(self):
        return asdict(self)


def timing_benchmark(ds: Dataset, cfg: ExperimentConfig, epochs) -> TimingResult:
    """Wall time of training a fresh model for each epoch count, with a linear fit.

    The cost threshold is disabled so every run trains for exactly the
    requested number of epochs.
    """
    epochs = [int(e) for e in epochs]
    if len(epochs) < 3:
        raise ValueError("need at least 3 epoch counts")
    train_set, test_set = prepare(ds, cfg)
    points = []
    for e in epochs:
        tc = replace(cfg.train, max_epochs=e, tau=0.0)
        t0 = time.perf_counter()
        fit_partitions(train_set, test_set, cfg, train_cfg=tc)
        points.append((e, time.perf_counter() - t0))
    x, y = np.array(points).T
    fitres = stats.linregress(x, y)
    return TimingResult(points, float(fitres.slope), float(fitres.intercept),
                        float(fitres.rvalue ** 2))
