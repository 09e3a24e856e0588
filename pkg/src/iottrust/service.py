"""Service-perspective trust attribute: dynamic reliability.

Consumers compare a provider's broadcast claims with what they actually
receive, fold the per-step reliability vectors into an accumulated vector,
and new consumers aggregate the accumulated vectors of current consumers,
weighted by how long each has been consuming.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import ContractError, DataError, TrustDomainError

DEFAULT_RELIABILITY = 0.5


class AggregationMode(str, enum.Enum):
    PAPER_VERBATIM = "paper_verbatim"
    DURATION_NORMALIZED = "duration_normalized"


class NoObserversError(LookupError):
    """The ledger holds no consumer observations."""


@dataclass(frozen=True)
class Claim:
    name: str
    value: float
    unit: str = ""


@dataclass(frozen=True)
class ClaimVector:
    """Ordered claims a provider broadcasts, e.g. cores, RAM and hours."""

    entries: tuple[Claim, ...]

    def __post_init__(self):
        entries = tuple(e if isinstance(e, Claim) else Claim(*e) for e in self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise TrustDomainError("claim vector is empty")
        for e in entries:
            if not e.value > 0:
                raise TrustDomainError(f"claim {e.name!r} must be positive, got {e.value}")

    @classmethod
    def of(cls, **claims):
        return cls(tuple(Claim(k, float(v)) for k, v in claims.items()))

    @property
    def names(self):
        return tuple(e.name for e in self.entries)

    @property
    def values(self):
        return np.array([e.value for e in self.entries], dtype=float)

    def scaled(self, factors) -> "ClaimVector":
        """Claims with each value multiplied by the matching factor."""
        factors = np.broadcast_to(np.asarray(factors, dtype=float), (len(self.entries),))
        return ClaimVector(tuple(Claim(e.name, e.value * f, e.unit)
                                 for e, f in zip(self.entries, factors)))

    def __len__(self):
        return len(self.entries)


def reliability_vector(broadcast: ClaimVector, actual) -> np.ndarray:
    """Per-claim fulfillment ``1 - (claimed - actual) / claimed`` clamped to [0, 1].

    ``actual`` is either a :class:`ClaimVector` with the same claim names
    in the same order, or a plain sequence of observed magnitudes.
    """
    if isinstance(actual, ClaimVector):
        if actual.names != broadcast.names:
            raise ContractError(f"claim mismatch: {broadcast.names} vs {actual.names}")
        observed = actual.values
    else:
        observed = np.asarray(actual, dtype=float)
        if observed.shape != (len(broadcast),):
            raise ContractError(f"expected {len(broadcast)} observed values, got {observed.shape}")
    claimed = broadcast.values
    raw = 1.0 - (claimed - observed) / claimed
    return np.clip(raw, 0.0, 1.0)


def accumulate(acc, fresh, gamma: float) -> np.ndarray:
    """Exponentially weighted fold ``gamma * acc + (1 - gamma) * fresh``."""
    if not (0.0 <= gamma <= 1.0):
        raise TrustDomainError(f"gamma must lie in [0, 1], got {gamma}")
    acc = np.asarray(acc, dtype=float)
    fresh = np.asarray(fresh, dtype=float)
    if acc.shape != fresh.shape:
        raise ContractError(f"arity mismatch: {acc.shape} vs {fresh.shape}")
    return gamma * acc + (1.0 - gamma) * fresh


@dataclass(frozen=True)
class LedgerEntry:
    accumulated: np.ndarray
    t_spent: float
    last_update: float


@dataclass(frozen=True)
class ReliabilityLedger:
    """Accumulated reliability of one service as seen by each consumer.

    The ledger is immutable; :func:`consumption_step` returns an updated copy.
    """

    service_id: str = ""
    entries: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, consumer_id):
        return consumer_id in self.entries

    def __getitem__(self, consumer_id) -> LedgerEntry:
        return self.entries[consumer_id]

    def consumers(self):
        return sorted(self.entries)

    def subset(self, consumer_ids: Iterable[str]) -> "ReliabilityLedger":
        return replace(self, entries={c: self.entries[c] for c in consumer_ids})

    def records(self):
        for cid in self.consumers():
            e = self.entries[cid]
            yield {
                "service_id": self.service_id,
                "consumer_id": cid,
                "accumulated": [float(v) for v in e.accumulated],
                "t_spent_s": float(e.t_spent),
                "last_update_unix": float(e.last_update),
            }


def consumption_step(ledger: ReliabilityLedger, consumer_id, broadcast: ClaimVector,
                     actual, t: float, gamma: float, since: float = 0.0) -> ReliabilityLedger:
    """Record one observation of ``consumer_id`` at time ``t``.

    The first observation of a consumer seeds its accumulated vector with
    the fresh reliability vector and counts time from ``since``; later ones
    fold the fresh vector in with weight ``1 - gamma``.
    """
    fresh = reliability_vector(broadcast, actual)
    prev = ledger.entries.get(consumer_id)
    if prev is None:
        if not t > since:
            raise ContractError(f"consumer {consumer_id!r}: time {t} not after start {since}")
        if not (0.0 <= gamma <= 1.0):
            raise TrustDomainError(f"gamma must lie in [0, 1], got {gamma}")
        entry = LedgerEntry(fresh, float(t - since), float(t))
    else:
        if not t > prev.last_update:
            raise ContractError(
                f"consumer {consumer_id!r}: time {t} not after last update {prev.last_update}")
        entry = LedgerEntry(accumulate(prev.accumulated, fresh, gamma),
                            prev.t_spent + (t - prev.last_update), float(t))
    return replace(ledger, entries={**ledger.entries, consumer_id: entry})


def overall_reliability(ledger: ReliabilityLedger,
                        mode=AggregationMode.PAPER_VERBATIM) -> np.ndarray:
    """Duration-weighted aggregate of all consumers' accumulated vectors.

    In ``paper_verbatim`` mode the weighted sum is divided by the longest
    consumption duration and clamped to [0, 1]; ``duration_normalized``
    divides by the total duration instead.
    """
    mode = AggregationMode(mode)
    if not ledger.entries:
        raise NoObserversError(f"service {ledger.service_id!r} has no observers")
    entries = [ledger.entries[c] for c in ledger.consumers()]
    arity = {e.accumulated.shape for e in entries}
    if len(arity) != 1:
        raise ContractError(f"accumulated vectors differ in arity: {arity}")
    t = np.array([e.t_spent for e in entries])
    rv = np.stack([e.accumulated for e in entries])
    weighted = (t[:, None] * rv).sum(axis=0)
    if mode is AggregationMode.PAPER_VERBATIM:
        return np.clip(weighted / t.max(), 0.0, 1.0)
    return weighted / t.sum()


def service_reliability(ledger: ReliabilityLedger,
                        mode=AggregationMode.PAPER_VERBATIM) -> float:
    """Mean of the overall reliability vector; 0.5 when nobody has observed yet."""
    try:
        rv_all = overall_reliability(ledger, mode)
    except NoObserversError:
        return DEFAULT_RELIABILITY
    return float(np.mean(rv_all))


def write_ledgers_jsonl(ledgers: Iterable[ReliabilityLedger], path):
    with open(path, "w") as fh:
        for ledger in ledgers:
            for rec in ledger.records():
                fh.write(json.dumps(rec) + "\n")


def read_ledgers_jsonl(path) -> dict:
    """Read line-oriented ledger records back into ``service_id -> ledger``."""
    ledgers: dict[str, dict] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                entry = LedgerEntry(np.asarray(rec["accumulated"], dtype=float),
                                    float(rec["t_spent_s"]), float(rec["last_update_unix"]))
                ledgers.setdefault(rec["service_id"], {})[rec["consumer_id"]] = entry
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad ledger record ({exc})") from None
    return {sid: ReliabilityLedger(sid, entries) for sid, entries in ledgers.items()}


def ledger_from_vectors(observations: Sequence[tuple[float, Sequence[float]]],
                        service_id="") -> ReliabilityLedger:
    """Build a ledger from ``(t_spent, accumulated)`` pairs; consumer ids are positional."""
    return ReliabilityLedger(service_id, {
        f"c{i}": LedgerEntry(np.asarray(rv, dtype=float), float(t), float(t))
        for i, (t, rv) in enumerate(observations)
    })
