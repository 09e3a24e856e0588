"""Synthetic crowdsourced IoT environments.

Generates a population of users with social ties and localities, a device
catalog with property reputations, one compute service per user with a
claim vector and a hidden honesty level, and consumption episodes that
fill reliability ledgers. Provider/consumer pairs are then encoded exactly
like survey answers and labeled by a latent linear rule with adjacent-level
noise.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dataset import (
    FEATURE_NAMES,
    Dataset,
    EncodingConfig,
    SocialContext,
    SurveyResponse,
    encode_features,
)
from .device import DeviceDescriptor, ReputationTables
from .errors import ContractError
from .model import perspective_of
from .owner import Locality, SocialProfile, normalize_coordinates
from .service import AggregationMode, ClaimVector, ReliabilityLedger, consumption_step

DEVICE_KINDS = ("manufacturer", "model", "operating_system", "carrier")


class ConfigError(ValueError):
    def __init__(self, field_name, message):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class SimConfig:
    seed: int = 0
    n_users: int = 200
    relation_types: tuple = ("colleague", "friend", "family")
    friendship_density: float = 0.05
    friend_pair_fraction: float = 0.5
    lon_range: tuple = (150.6, 151.4)
    lat_range: tuple = (-34.1, -33.6)
    catalog_sizes: dict = field(default_factory=lambda: {
        "manufacturer": 8, "model": 24, "operating_system": 5, "carrier": 4})
    reputation_beta: tuple = (2.0, 2.0)
    popularity_lognormal: tuple = (4.0, 1.0)
    owner_reputation_beta: tuple = (2.0, 2.0)
    honesty_beta: tuple = (2.0, 2.0)
    fulfillment_noise: float = 0.05
    max_consumers: int = 10
    steps: int = 6
    step_seconds: float = 600.0
    gamma: float = 0.5
    n_samples: int = 5000
    label_weights: dict = field(default_factory=dict)
    label_noise: float = 0.1
    score_quantiles: tuple = (0.01, 0.99)
    mode: str = AggregationMode.PAPER_VERBATIM.value

    def __post_init__(self):
        for name in ("friendship_density", "friend_pair_fraction", "label_noise", "gamma"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ConfigError(name, f"must lie in [0, 1], got {v}")
        for name in ("n_users", "steps", "n_samples", "max_consumers"):
            if int(getattr(self, name)) < (0 if name == "max_consumers" else 1):
                raise ConfigError(name, "must be positive")
        if self.n_users < 2:
            raise ConfigError("n_users", "need at least two users")
        if not self.relation_types:
            raise ConfigError("relation_types", "need at least one relation type")
        for kind in DEVICE_KINDS:
            if self.catalog_sizes.get(kind, 0) < 1:
                raise ConfigError("catalog_sizes", f"no values for {kind}")
        lo, hi = self.score_quantiles
        if not (0.0 <= lo < hi <= 1.0):
            raise ConfigError("score_quantiles", "need 0 <= lo < hi <= 1")
        if any(w < 0 for w in self.label_weights.values()):
            raise ConfigError("label_weights", "weights must be non-negative")
        AggregationMode(self.mode)

    @classmethod
    def from_dict(cls, d, require_seed=True):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(sorted(unknown)[0], "unknown field")
        if require_seed and "seed" not in d:
            raise ConfigError("seed", "missing")
        kw = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
        try:
            return cls(**kw)
        except TypeError as exc:
            raise ConfigError("config", str(exc)) from None

    def to_dict(self):
        return asdict(self)

    @property
    def encoding(self) -> EncodingConfig:
        return EncodingConfig(relation_types=tuple(self.relation_types),
                              max_concurrent_consumers=max(self.max_consumers, 1),
                              mode=AggregationMode(self.mode))


@dataclass
class Service:
    provider: str
    device_id: str
    claims: ClaimVector
    honesty: float


@dataclass
class LatentRule:
    """Linear score over features, stretched between two bounds into ratings 1-10."""

    weights: np.ndarray
    lo: float
    hi: float

    def score(self, X):
        return np.asarray(X, dtype=float) @ self.weights / self.weights.sum()

    def ratings(self, X):
        z = (self.score(X) - self.lo) / (self.hi - self.lo)
        return np.clip(1 + np.floor(10 * z).astype(int), 1, 10)

    def to_dict(self):
        return {"weights": self.weights.tolist(), "lo": self.lo, "hi": self.hi}


def rule_weights(label_weights, feature_names=FEATURE_NAMES):
    """Per-feature weights; keys are feature names or perspective names, default 1."""
    w = np.array([label_weights.get(n, label_weights.get(perspective_of(n), 1.0))
                  for n in feature_names], dtype=float)
    if w.sum() <= 0:
        raise ConfigError("label_weights", "all weights are zero")
    return w


@dataclass
class Scenario:
    cfg: SimConfig
    profiles: dict
    tables: ReputationTables
    devices: dict
    device_values: dict
    owner_reputation: dict
    services: dict
    ledgers: dict = field(default_factory=dict)
    label_rule: LatentRule = None

    @property
    def localities(self):
        return {u: p.locality for u, p in self.profiles.items()}

    def to_dict(self):
        return {
            "config": self.cfg.to_dict(),
            "users": [
                {"user_id": u, "x": p.locality.x, "y": p.locality.y,
                 "friendships": dict(sorted(p.friendships.items())),
                 "owner_reputation": self.owner_reputation[u],
                 "device_id": f"d-{u}"}
                for u, p in self.profiles.items()
            ],
            "reputation_table": [list(r) for r in self.tables.rows()],
            "devices": self.device_values,
            "services": [
                {"service_id": sid, "provider": s.provider, "device_id": s.device_id,
                 "claims": [[c.name, c.value, c.unit] for c in s.claims.entries],
                 "honesty": s.honesty}
                for sid, s in self.services.items()
            ],
            "ledgers": [rec for sid in sorted(self.ledgers) for rec in self.ledgers[sid].records()],
            "label_rule": self.label_rule.to_dict() if self.label_rule else None,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)
            fh.write("\n")


def generate_population(cfg: SimConfig) -> Scenario:
    """Draw users, friendships, localities, devices and services from ``cfg.seed``."""
    rng = np.random.default_rng([cfg.seed, 0])
    n = cfg.n_users
    K = len(cfg.relation_types)
    users = [f"u{i:04d}" for i in range(n)]

    raw_x = rng.uniform(*cfg.lon_range, size=n)
    raw_y = rng.uniform(*cfg.lat_range, size=n)
    xs, ys = normalize_coordinates(raw_x, raw_y)

    friends = {u: {} for u in users}
    iu, ju = np.triu_indices(n, k=1)
    linked = rng.random(len(iu)) < cfg.friendship_density
    strengths = rng.integers(1, K + 1, size=len(iu))
    for i, j, s in zip(iu[linked], ju[linked], strengths[linked]):
        friends[users[i]][users[j]] = int(s)
        friends[users[j]][users[i]] = int(s)
    profiles = {u: SocialProfile(u, friends[u], Locality(float(x), float(y)), K=K)
                for u, x, y in zip(users, xs, ys)}

    tables = ReputationTables()
    for kind in DEVICE_KINDS:
        size = cfg.catalog_sizes[kind]
        reps = rng.beta(*cfg.reputation_beta, size=size)
        pops = 1 + np.floor(rng.lognormal(*cfg.popularity_lognormal, size=size)).astype(int)
        for k in range(size):
            tables.add(kind, f"{kind}-{k}", float(reps[k]), int(pops[k]))

    devices, device_values, owner_rep, services = {}, {}, {}, {}
    owner_draws = rng.beta(*cfg.owner_reputation_beta, size=n)
    honesty = rng.beta(*cfg.honesty_beta, size=n)
    for i, u in enumerate(users):
        did = f"d-{u}"
        values = {kind: f"{kind}-{rng.integers(cfg.catalog_sizes[kind])}" for kind in DEVICE_KINDS}
        device_values[did] = values
        devices[did] = DeviceDescriptor(did, tuple(tables.lookup(k, v) for k, v in values.items()))
        owner_rep[u] = float(owner_draws[i])
        claims = ClaimVector.of(cores=int(rng.integers(1, 9)), ram_gb=int(rng.integers(1, 9)),
                                hours=int(rng.integers(1, 6)))
        services[f"s-{u}"] = Service(u, did, claims, float(honesty[i]))
    return Scenario(cfg, profiles, tables, devices, device_values, owner_rep, services)


def run_episode(scenario: Scenario, service_id, consumer_ids, steps, gamma,
                rng=None, noise=None, start=0.0, step_seconds=None) -> ReliabilityLedger:
    """Let consumers observe a service for ``steps`` time steps.

    Consumer ``j`` joins at a random step and from then on receives
    ``claims * clip(honesty + noise, 0, 1)`` at every step. The service's
    ledger in ``scenario`` is replaced by the updated one, which is returned.
    """
    if service_id not in scenario.services:
        raise ContractError(f"unknown service {service_id!r}")
    unknown = [c for c in consumer_ids if c not in scenario.profiles]
    if unknown:
        raise ContractError(f"unknown consumers {unknown}")
    if steps < 1:
        raise ContractError("steps must be >= 1")
    rng = rng if rng is not None else np.random.default_rng([scenario.cfg.seed, 1])
    noise = scenario.cfg.fulfillment_noise if noise is None else noise
    dt = scenario.cfg.step_seconds if step_seconds is None else step_seconds
    svc = scenario.services[service_id]
    claimed = svc.claims.values
    ledger = scenario.ledgers.get(service_id, ReliabilityLedger(service_id))
    joins = rng.integers(0, steps, size=len(consumer_ids))
    for cid, first in zip(consumer_ids, joins):
        since = start + first * dt
        for s in range(int(first), steps):
            t = start + (s + 1) * dt
            if cid in ledger and t <= ledger[cid].last_update:
                continue  # returning consumer: only later observations count
            eps = rng.normal(0.0, noise, size=len(claimed)) if noise > 0 else 0.0
            actual = claimed * np.clip(svc.honesty + eps, 0.0, 1.0)
            ledger = consumption_step(ledger, cid, svc.claims, actual, t, gamma, since=since)
    scenario.ledgers[service_id] = ledger
    return ledger


def run_all_episodes(scenario: Scenario):
    """One episode per service with a random number of random consumers."""
    cfg = scenario.cfg
    rng = np.random.default_rng([cfg.seed, 2])
    users = list(scenario.profiles)
    for sid, svc in scenario.services.items():
        k = int(rng.integers(0, cfg.max_consumers + 1))
        if k == 0:
            continue
        others = [u for u in users if u != svc.provider]
        chosen = [others[i] for i in sorted(rng.choice(len(others), size=min(k, len(others)),
                                                       replace=False))]
        run_episode(scenario, sid, chosen, cfg.steps, cfg.gamma, rng=rng)


def _pairs(scenario: Scenario, rng):
    cfg = scenario.cfg
    users = list(scenario.profiles)
    for _ in range(cfg.n_samples):
        p = users[int(rng.integers(len(users)))]
        fr = sorted(scenario.profiles[p].friendships)
        if fr and rng.random() < cfg.friend_pair_fraction:
            c = fr[int(rng.integers(len(fr)))]
        else:
            c = users[int(rng.integers(len(users) - 1))]
            if c == p:
                c = users[-1]
        yield p, c


def emit_dataset(scenario: Scenario, cfg: SimConfig = None) -> Dataset:
    """Encode ``cfg.n_samples`` provider/consumer pairs and label them.

    Labels come from :class:`LatentRule` (stored on ``scenario.label_rule``)
    whose bounds are the configured quantiles of the emitted scores; a
    ``label_noise`` fraction is then moved to an adjacent level.
    """
    cfg = cfg or scenario.cfg
    enc = cfg.encoding
    rng = np.random.default_rng([cfg.seed, 3])
    localities = scenario.localities
    rows = []
    for i, (p, c) in enumerate(_pairs(scenario, rng)):
        sid = f"s-{p}"
        values = scenario.device_values[scenario.services[sid].device_id]
        strn = scenario.profiles[p].friendships.get(c, 0)
        ledger = scenario.ledgers.get(sid, ReliabilityLedger(sid))
        resp = SurveyResponse(
            survey_id=f"sim-{i:06d}", worker_id=c,
            social_relation=enc.relation_types[strn - 1] if strn else "none",
            owner_reputation=scenario.owner_reputation[p],
            device_brand=values["manufacturer"], device_model=values["model"],
            device_os=values["operating_system"], concurrent_consumers=len(ledger),
            carrier_reputation=values["carrier"], rating=1, duration_s=0.0)
        social = SocialContext(scenario.profiles[p], scenario.profiles[c], localities)
        rows.append(encode_features(resp, scenario.tables, enc, social, ledger).features)
    X = np.stack(rows)

    w = rule_weights(cfg.label_weights)
    scores = X @ w / w.sum()
    lo, hi = np.quantile(scores, cfg.score_quantiles)
    if hi <= lo:
        lo, hi = float(scores.min()), float(scores.min()) + 1.0
    rule = LatentRule(w, float(lo), float(hi))
    scenario.label_rule = rule
    ratings = rule.ratings(X)

    flip = rng.random(len(X)) < cfg.label_noise
    direction = np.where(rng.random(len(X)) < 0.5, -1, 1)
    levels = (ratings - 1) // 2
    direction[levels == 0] = 1
    direction[levels == 4] = -1
    ratings = np.where(flip, ratings + 2 * direction, ratings)
    return Dataset(X, ratings, FEATURE_NAMES)


def simulate(cfg: SimConfig):
    """Generate a scenario, run its episodes and emit the labeled dataset."""
    scenario = generate_population(cfg)
    run_all_episodes(scenario)
    return scenario, emit_dataset(scenario, cfg)
