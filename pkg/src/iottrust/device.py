"""Device-perspective trust attribute: reputation aggregated over properties."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional

from .errors import EncodingError, SchemaError, TrustDomainError

PROPERTY_KINDS = ("manufacturer", "operating_system", "model", "device_type", "carrier")


@dataclass(frozen=True)
class DeviceProperty:
    """One property of a device with its reputation and popularity.

    ``reputation`` may be ``None`` when no reputation data exists; such a
    property is ignored by the aggregations.
    """

    kind: str
    reputation: Optional[float]
    popularity: int = 1
    name: Optional[str] = None

    def __post_init__(self):
        if self.reputation is not None and not (0.0 <= self.reputation <= 1.0):
            raise TrustDomainError(f"{self.kind} reputation {self.reputation} outside [0, 1]")
        if self.popularity < 1:
            raise TrustDomainError(f"{self.kind} popularity must be >= 1, got {self.popularity}")


@dataclass(frozen=True)
class DeviceDescriptor:
    device_id: str
    properties: tuple[DeviceProperty, ...]
    kinds: tuple[str, ...] = PROPERTY_KINDS

    def __post_init__(self):
        object.__setattr__(self, "properties", tuple(self.properties))
        if not self.properties:
            raise TrustDomainError(f"device {self.device_id!r} has no properties")
        seen = set()
        for p in self.properties:
            if p.kind not in self.kinds:
                raise TrustDomainError(f"unknown property kind {p.kind!r}")
            if p.kind in seen:
                raise TrustDomainError(f"duplicate property kind {p.kind!r}")
            seen.add(p.kind)


def _rated(d: DeviceDescriptor):
    rated = [p for p in d.properties if p.reputation is not None]
    if not rated:
        raise TrustDomainError(f"device {d.device_id!r} has no property with a reputation")
    return rated


def device_reputation_uniform(d: DeviceDescriptor) -> float:
    """Mean reputation of the device's properties."""
    rated = _rated(d)
    return sum(p.reputation for p in rated) / len(rated)


def device_reputation_weighted(d: DeviceDescriptor) -> float:
    """Popularity-weighted mean reputation of the device's properties.

    Properties used by more devices weigh more, e.g. a widely deployed
    operating system outweighs a niche manufacturer.
    """
    rated = _rated(d)
    total = sum(p.popularity for p in rated)
    return sum(p.reputation * p.popularity for p in rated) / total


class ReputationTables:
    """Reputation and popularity lookup for named property values."""

    def __init__(self, entries: Iterable[tuple[str, str, float, int]] = ()):
        self._table: dict[tuple[str, str], DeviceProperty] = {}
        for kind, name, rep, pop in entries:
            self.add(kind, name, rep, pop)

    def add(self, kind, name, reputation, popularity):
        self._table[(kind, name)] = DeviceProperty(kind, reputation, int(popularity), name)

    def lookup(self, kind, name) -> DeviceProperty:
        try:
            return self._table[(kind, name)]
        except KeyError:
            raise EncodingError(kind, f"no reputation entry for {name!r}") from None

    def names(self, kind):
        return sorted(n for k, n in self._table if k == kind)

    def rows(self):
        for (kind, name), p in sorted(self._table.items()):
            yield kind, name, p.reputation, p.popularity

    def __len__(self):
        return len(self._table)

    @classmethod
    def from_csv(cls, path):
        """Load a ``kind, value_name, reputation, popularity`` table."""
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            cols = {"kind", "value_name", "reputation", "popularity"}
            missing = cols - set(reader.fieldnames or [])
            if missing:
                raise SchemaError(f"reputation table missing columns {sorted(missing)}")
            return cls((r["kind"], r["value_name"], float(r["reputation"]), int(r["popularity"]))
                       for r in reader)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kind", "value_name", "reputation", "popularity"])
            for row in self.rows():
                w.writerow([row[0], row[1], repr(row[2]), row[3]])
