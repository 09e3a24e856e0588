"""Survey ingestion, answer-quality filters, feature encoding and augmentation."""

from __future__ import annotations

import csv
import hashlib
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .device import DeviceDescriptor, ReputationTables, device_reputation_weighted
from .errors import AugmentationError, DataError, EncodingError, SchemaError, TrustDomainError
from .model import N_LEVELS, TrustLevel, perspective_of
from .owner import (
    OwnerConfig,
    SocialProfile,
    common_friends_factor,
    common_friends_factor_localized,
    face_to_face,
    relationship_factor,
)
from .service import AggregationMode, ReliabilityLedger, service_reliability

SURVEY_COLUMNS = (
    "survey_id", "worker_id", "social_relation", "owner_reputation", "device_brand",
    "device_model", "device_os", "concurrent_consumers", "carrier_reputation",
    "rating", "duration_s",
)

FEATURE_NAMES = (
    "owner.relationship",
    "owner.common_friends",
    "owner.reputation",
    "device.reputation",
    "device.carrier_reputation",
    "service.reliability",
    "service.concurrent_consumers",
)

NO_RELATION = ("", "none", "stranger")

MIN_DURATION_S = 60.0
MAX_DURATION_S = 300.0


@dataclass(frozen=True)
class SurveyResponse:
    survey_id: str
    worker_id: str
    social_relation: str
    owner_reputation: float
    device_brand: str
    device_model: str
    device_os: str
    concurrent_consumers: int
    carrier_reputation: str
    rating: int
    duration_s: float

    def __post_init__(self):
        if not (1 <= self.rating <= 10):
            raise TrustDomainError(f"rating {self.rating} outside [1, 10]")

    def as_row(self):
        return [getattr(self, c) for c in SURVEY_COLUMNS]


@dataclass(frozen=True)
class Reject:
    line: int
    reason: str


def _parse_row(row):
    return SurveyResponse(
        survey_id=row["survey_id"],
        worker_id=row["worker_id"],
        social_relation=row["social_relation"].strip(),
        owner_reputation=float(row["owner_reputation"]),
        device_brand=row["device_brand"],
        device_model=row["device_model"],
        device_os=row["device_os"],
        concurrent_consumers=int(row["concurrent_consumers"]),
        carrier_reputation=row["carrier_reputation"],
        rating=int(row["rating"]),
        duration_s=float(row["duration_s"]),
    )


def parse_survey_csv(path):
    """Read survey answers.

    Returns
    -------
    responses : list of SurveyResponse
    rejects : list of Reject
        Malformed rows with their line number in the file (header is line 1).
    """
    responses, rejects = [], []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(SURVEY_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise SchemaError(f"survey file missing columns {sorted(missing)}")
        for line, row in enumerate(reader, start=2):
            try:
                responses.append(_parse_row(row))
            except (ValueError, TypeError) as exc:
                rejects.append(Reject(line, str(exc)))
    return responses, rejects


def write_survey_csv(responses, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SURVEY_COLUMNS)
        for r in responses:
            w.writerow(r.as_row())


def filter_by_duration(responses, lo=MIN_DURATION_S, hi=MAX_DURATION_S):
    """Split responses into those answered within ``[lo, hi]`` seconds and the rest."""
    kept, rejected = [], []
    for r in responses:
        (kept if lo <= r.duration_s <= hi else rejected).append(r)
    return kept, rejected


def consolidate_answers(responses, seed=0, group_size=10, max_deviation=2.0):
    """Keep one answer per survey when its workers roughly agree.

    Responses are grouped by ``survey_id``. A survey is flagged for
    re-survey if any rating deviates from the group mean by more than
    ``max_deviation``; otherwise one of its responses is picked at random.

    Returns
    -------
    accepted : list of SurveyResponse
    flagged : list of str
        Survey ids whose answers disagree.
    """
    groups: "OrderedDict[str, list]" = OrderedDict()
    for r in responses:
        groups.setdefault(r.survey_id, []).append(r)
    wrong = [sid for sid, g in groups.items() if len(g) != group_size]
    if wrong:
        raise DataError(f"surveys without exactly {group_size} responses: {wrong}")

    rng = np.random.default_rng(seed)
    accepted, flagged = [], []
    for sid in sorted(groups):
        g = groups[sid]
        ratings = np.array([r.rating for r in g], dtype=float)
        if np.any(np.abs(ratings - ratings.mean()) > max_deviation):
            flagged.append(sid)
        else:
            accepted.append(g[int(rng.integers(len(g)))])
    return accepted, flagged


def map_rating_to_level(rating) -> TrustLevel:
    """Bin a 1-10 rating into five levels of width two."""
    if int(rating) != rating or not (1 <= rating <= 10):
        raise TrustDomainError(f"rating {rating} outside 1..10")
    return TrustLevel((int(rating) - 1) // 2)


def levels_from_ratings(ratings) -> np.ndarray:
    r = np.asarray(ratings, dtype=int)
    if r.size and (r.min() < 1 or r.max() > 10):
        raise TrustDomainError("ratings must lie in 1..10")
    return (r - 1) // 2


def level_rating_bounds(level):
    lo = 2 * int(level) + 1
    return lo, lo + 1


@dataclass
class EncodingConfig:
    """How survey answers and observations become features.

    ``relation_types`` lists relation names from weakest to strongest; a
    name's position (1-based) is its strength, so ``K`` equals its length.
    """

    relation_types: tuple = ("colleague", "friend", "family")
    mu1: float = 0.5
    mu2: float = 0.5
    max_concurrent_consumers: int = 10
    mode: AggregationMode = AggregationMode.PAPER_VERBATIM

    @property
    def owner(self) -> OwnerConfig:
        return OwnerConfig(len(self.relation_types), self.mu1, self.mu2)

    def strength(self, relation: str) -> int:
        """Relation strength, 0 for no relation."""
        if relation.lower() in NO_RELATION:
            return 0
        try:
            return self.relation_types.index(relation) + 1
        except ValueError:
            raise EncodingError("social_relation", f"unknown relation type {relation!r}") from None


@dataclass
class SocialContext:
    """Social profiles of the provider and consumer behind one response."""

    provider: SocialProfile
    consumer: SocialProfile
    localities: Optional[Mapping] = None


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    rating: int
    level: TrustLevel


def encode_features(response: SurveyResponse, tables: ReputationTables,
                    cfg: EncodingConfig = EncodingConfig(),
                    social: Optional[SocialContext] = None,
                    ledger: Optional[ReliabilityLedger] = None) -> Sample:
    """Turn one response into a feature vector in ``[0, 1]^7``.

    Feature order follows :data:`FEATURE_NAMES`. The relationship factor
    is damped by the face-to-face factor and the common-friends factor is
    computed when ``social`` provides profiles (with localities where
    available); without profiles there is no common-friend evidence and
    that feature is 0. Reliability is 0.5 for a service nobody observed.
    """
    owner_cfg = cfg.owner
    strn = cfg.strength(response.social_relation)
    rel = relationship_factor(strn, owner_cfg.K) if strn else 0.0
    cf = 0.0
    if social is not None:
        lp, lc = social.provider.locality, social.consumer.locality
        if rel and lp is not None and lc is not None:
            rel *= face_to_face(lp, lc)
        if social.localities is not None:
            cf = common_friends_factor_localized(social.provider, social.consumer,
                                                 owner_cfg, social.localities)
        else:
            cf = common_friends_factor(social.provider, social.consumer, owner_cfg)

    if not (0.0 <= response.owner_reputation <= 1.0):
        raise EncodingError("owner_reputation", f"{response.owner_reputation} outside [0, 1]")

    props = [tables.lookup("manufacturer", response.device_brand),
             tables.lookup("model", response.device_model),
             tables.lookup("operating_system", response.device_os)]
    try:
        device_rep = device_reputation_weighted(DeviceDescriptor(response.device_brand, props))
    except TrustDomainError as exc:
        raise EncodingError("device", str(exc)) from None
    carrier = tables.lookup("carrier", response.carrier_reputation).reputation
    if carrier is None:
        raise EncodingError("carrier_reputation", "carrier has no reputation")

    reliability = service_reliability(ledger, cfg.mode) if ledger is not None else 0.5
    if response.concurrent_consumers < 0:
        raise EncodingError("concurrent_consumers", "must be non-negative")
    consumers = min(response.concurrent_consumers / cfg.max_concurrent_consumers, 1.0)

    x = np.array([rel, cf, response.owner_reputation, device_rep, carrier,
                  reliability, consumers], dtype=float)
    return Sample(x, response.rating, map_rating_to_level(response.rating))


@dataclass
class Dataset:
    """Feature matrix with ratings, grouped into perspectives by name prefix."""

    X: np.ndarray
    ratings: np.ndarray
    feature_names: list = field(default_factory=lambda: list(FEATURE_NAMES))
    provenance: Optional[np.ndarray] = None

    def __post_init__(self):
        self.feature_names = list(self.feature_names)
        self.X = np.asarray(self.X, dtype=float).reshape(len(self.X), -1 if len(self.X) else
                                                         len(self.feature_names))
        self.ratings = np.asarray(self.ratings, dtype=int)
        if self.provenance is None:
            self.provenance = np.full(len(self.X), "original", dtype=object)
        self.provenance = np.asarray(self.provenance, dtype=object)
        if not (len(self.X) == len(self.ratings) == len(self.provenance)):
            raise DataError("features, ratings and provenance differ in length")
        if len(self.X) and self.X.shape[1] != len(self.feature_names):
            raise DataError(f"{self.X.shape[1]} feature columns for {len(self.feature_names)} names")
        levels_from_ratings(self.ratings)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], feature_names=FEATURE_NAMES):
        if samples:
            X = np.stack([s.features for s in samples])
        else:
            X = np.empty((0, len(feature_names)))
        return cls(X, [s.rating for s in samples], feature_names)

    def __len__(self):
        return len(self.X)

    @property
    def levels(self) -> np.ndarray:
        return levels_from_ratings(self.ratings)

    def samples(self):
        for x, r in zip(self.X, self.ratings):
            yield Sample(x, int(r), map_rating_to_level(int(r)))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.ratings[idx], self.feature_names, self.provenance[idx])

    @property
    def perspectives(self) -> list:
        out = []
        for n in self.feature_names:
            p = perspective_of(n)
            if p not in out:
                out.append(p)
        return out

    def columns(self, perspective) -> list:
        return [i for i, n in enumerate(self.feature_names) if perspective_of(n) == perspective]

    def select(self, columns) -> "Dataset":
        columns = list(columns)
        return Dataset(self.X[:, columns], self.ratings,
                       [self.feature_names[i] for i in columns], self.provenance)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(",".join(self.feature_names).encode())
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(self.ratings.astype(np.int64).tobytes())
        return h.hexdigest()[:16]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([*self.feature_names, "rating", "level", "provenance"])
            for x, r, lvl, prov in zip(self.X, self.ratings, self.levels, self.provenance):
                w.writerow([*(repr(float(v)) for v in x), int(r), TrustLevel(lvl).name, prov])

    @classmethod
    def from_csv(cls, path) -> "Dataset":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path} is empty") from None
            if header[-3:] != ["rating", "level", "provenance"]:
                raise SchemaError(f"{path}: expected trailing rating,level,provenance columns")
            names = header[:-3]
            rows = list(reader)
        try:
            X = np.array([[float(v) for v in row[:-3]] for row in rows]).reshape(len(rows), len(names))
            ratings = [int(row[-3]) for row in rows]
        except ValueError as exc:
            raise SchemaError(f"{path}: {exc}") from None
        return cls(X, ratings, names, [row[-1] for row in rows])


def concat(a: Dataset, b: Dataset) -> Dataset:
    if a.feature_names != b.feature_names:
        raise DataError("datasets have different features")
    return Dataset(np.vstack([a.X, b.X]), np.concatenate([a.ratings, b.ratings]),
                   a.feature_names, np.concatenate([a.provenance, b.provenance]))


def interpolate(ds: Dataset, factor: int, seed=0) -> Dataset:
    """Grow ``ds`` to ``factor`` times its size by same-level linear interpolation.

    Each synthetic sample blends two distinct samples of the same trust
    level with a uniform weight in (0, 1); the rating is blended likewise
    and rounded back into the level's rating bin.
    """
    if int(factor) != factor or factor < 1:
        raise TrustDomainError(f"factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    if factor == 1:
        return ds
    levels = ds.levels
    members = {lvl: np.flatnonzero(levels == lvl) for lvl in np.unique(levels)}
    for lvl, m in members.items():
        if len(m) < 2:
            raise AugmentationError(f"level {TrustLevel(lvl).name} has {len(m)} sample(s), need 2")

    rng = np.random.default_rng(seed)
    n_new = (factor - 1) * len(ds)
    first = rng.integers(len(ds), size=n_new)
    second = np.empty(n_new, dtype=int)
    # position of every sample inside its level group
    pos = np.empty(len(ds), dtype=int)
    for m in members.values():
        pos[m] = np.arange(len(m))
    for lvl, m in members.items():
        sel = np.flatnonzero(levels[first] == lvl)
        r = rng.integers(len(m) - 1, size=len(sel))
        r += r >= pos[first[sel]]  # skip the first parent itself
        second[sel] = m[r]
    lam = rng.uniform(np.nextafter(0.0, 1.0), 1.0, size=n_new)

    X = (1.0 - lam)[:, None] * ds.X[first] + lam[:, None] * ds.X[second]
    raw = (1.0 - lam) * ds.ratings[first] + lam * ds.ratings[second]
    lo = 2 * levels[first] + 1
    ratings = np.clip(np.rint(raw).astype(int), lo, lo + 1)
    synth = Dataset(X, ratings, ds.feature_names, np.full(n_new, "interpolated", dtype=object))
    return concat(ds, synth)


def split_indices(levels, train_fraction, seed=0):
    """Stratified train/test indices.

    Per-level train counts are allocated by largest remainder so the total
    equals ``round(train_fraction * n)`` and every level is within one
    sample of its exact share.
    """
    if not (0.0 < train_fraction < 1.0):
        raise TrustDomainError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    levels = np.asarray(levels)
    n = len(levels)
    if n == 0:
        raise TrustDomainError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    strata = [np.flatnonzero(levels == lvl) for lvl in range(N_LEVELS)]
    exact = np.array([train_fraction * len(s) for s in strata])
    counts = np.floor(exact).astype(int)
    short = int(round(train_fraction * n)) - counts.sum()
    order = np.argsort(-(exact - counts), kind="stable")
    counts[order[:short]] += 1
    train, test = [], []
    for s, k in zip(strata, counts):
        perm = rng.permutation(s)
        train.append(perm[:k])
        test.append(perm[k:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def split(ds: Dataset, train_fraction=0.7, seed=0):
    train_idx, test_idx = split_indices(ds.levels, train_fraction, seed)
    return ds.subset(train_idx), ds.subset(test_idx)
