"""Owner-perspective trust attributes.

The owner of a device contributes to the trust of the services it provides
through two attributes: the social relation between provider and consumer,
and the friends they have in common. Both can be damped by a face-to-face
factor derived from the users' localities.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from .errors import DataError, SchemaError, TrustDomainError

LOCALITY_MIN = 0.01
LOCALITY_MAX = 1.0


@dataclass(frozen=True)
class Locality:
    """Normalized spatial coordinates of a user."""

    x: float
    y: float
    label: Optional[str] = None

    def __post_init__(self):
        for name, v in (("x", self.x), ("y", self.y)):
            if not (LOCALITY_MIN <= v <= LOCALITY_MAX):
                raise TrustDomainError(
                    f"locality {name}={v} outside [{LOCALITY_MIN}, {LOCALITY_MAX}]"
                )


@dataclass(frozen=True)
class OwnerConfig:
    K: int = 3
    mu1: float = 0.5
    mu2: float = 0.5

    def __post_init__(self):
        if self.K < 1:
            raise TrustDomainError(f"K must be >= 1, got {self.K}")
        if not (0.0 <= self.mu1 <= 1.0 and 0.0 <= self.mu2 <= 1.0):
            raise TrustDomainError("mu1 and mu2 must lie in [0, 1]")
        if abs(self.mu1 + self.mu2 - 1.0) > 1e-12:
            raise TrustDomainError(f"mu1 + mu2 must be 1, got {self.mu1 + self.mu2}")


@dataclass(frozen=True)
class SocialProfile:
    """A user's typed friendships and locality.

    ``friendships`` maps friend id to an integer relation strength in
    ``[1, K]`` where ``K`` is the number of relation types.
    """

    user_id: str
    friendships: Mapping[str, int] = field(default_factory=dict)
    locality: Optional[Locality] = None
    K: int = 3

    def __post_init__(self):
        if self.user_id in self.friendships:
            raise TrustDomainError(f"user {self.user_id!r} cannot befriend itself")
        for fid, s in self.friendships.items():
            if int(s) != s or not (1 <= s <= self.K):
                raise TrustDomainError(
                    f"strength {s} for {self.user_id!r}->{fid!r} outside [1, {self.K}]"
                )


def normalize_coordinates(raw_x, raw_y):
    """Min-max normalize raw coordinates into ``[0.01, 1.0]``.

    Parameters
    ----------
    raw_x, raw_y : array_like
        Raw coordinates (e.g. longitude and latitude) of the same length.

    Returns
    -------
    x, y : ndarray
        Normalized coordinates. An axis with no spread maps to 1.0.
    """
    out = []
    for raw in (raw_x, raw_y):
        a = np.asarray(raw, dtype=float)
        lo, hi = (a.min(), a.max()) if a.size else (0.0, 0.0)
        if hi > lo:
            scaled = LOCALITY_MIN + (a - lo) * (LOCALITY_MAX - LOCALITY_MIN) / (hi - lo)
            out.append(np.clip(scaled, LOCALITY_MIN, LOCALITY_MAX))
        else:
            out.append(np.full(a.shape, LOCALITY_MAX))
    return out[0], out[1]


def relationship_factor(strn, K):
    """Strength of the provider-consumer relation scaled into (0, 1]."""
    if K < 1:
        raise TrustDomainError(f"K must be >= 1, got {K}")
    if not (1 <= strn <= K):
        raise TrustDomainError(f"relation strength {strn} outside [1, {K}]")
    return strn / K


def _axis_term(a, b):
    if a == b:
        return 0.0
    return abs(a - b) / max(a, b)


def face_to_face(loc_u: Locality, loc_v: Locality) -> float:
    """Probability that two users have met, given their localities."""
    return 1.0 - 0.5 * (_axis_term(loc_u.x, loc_v.x) + _axis_term(loc_u.y, loc_v.y))


def relationship_factor_localized(strn, K, loc_p: Locality, loc_c: Locality):
    return relationship_factor(strn, K) * face_to_face(loc_p, loc_c)


def _common_friends(p: SocialProfile, c: SocialProfile, cfg: OwnerConfig, weigh):
    union = set(p.friendships) | set(c.friendships)
    if not union:
        return 0.0
    total = 0.0
    # sorted for a reproducible summation order
    for f in sorted(set(p.friendships) & set(c.friendships)):
        wp, wc = weigh(f)
        total += (cfg.mu1 * p.friendships[f] / cfg.K * wp
                  + cfg.mu2 * c.friendships[f] / cfg.K * wc)
    return total / len(union)


def common_friends_factor(p: SocialProfile, c: SocialProfile, cfg: OwnerConfig) -> float:
    """Weighted share of common friends between provider ``p`` and consumer ``c``.

    Each common friend contributes the mu-weighted strengths of both ties;
    the sum is divided by the size of the union of both friend sets.
    """
    return _common_friends(p, c, cfg, lambda f: (1.0, 1.0))


def common_friends_factor_localized(p: SocialProfile, c: SocialProfile,
                                    cfg: OwnerConfig,
                                    localities: Mapping[str, Locality]) -> float:
    """Common-friends factor with each tie damped by its face-to-face factor.

    ``localities`` must hold an entry for every common friend; the endpoints
    fall back to their profile locality. A missing entry raises
    :class:`DataError`.
    """
    def loc(uid, fallback=None):
        if uid in localities:
            return localities[uid]
        if fallback is not None:
            return fallback
        raise DataError(f"no locality for user {uid!r}")

    common = set(p.friendships) & set(c.friendships)
    if not common:
        return 0.0
    lp, lc = loc(p.user_id, p.locality), loc(c.user_id, c.locality)

    def weigh(f):
        lf = loc(f)
        return face_to_face(lp, lf), face_to_face(lc, lf)

    return _common_friends(p, c, cfg, weigh)


def load_social_profiles(edges_path, localities_path=None, K=3):
    """Read profiles from an edge-list CSV and an optional locality CSV.

    The edge list has columns ``user_id, friend_id, strength``; each row
    adds the friendship in both directions. The locality CSV has columns
    ``user_id, raw_x, raw_y`` and is min-max normalized on ingestion.

    Returns
    -------
    dict
        user id -> :class:`SocialProfile`.
    """
    friends: dict[str, dict[str, int]] = {}
    with open(edges_path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"user_id", "friend_id", "strength"} - set(reader.fieldnames or [])
        if missing:
            raise SchemaError(f"edge list missing columns {sorted(missing)}")
        for row in reader:
            u, v, s = row["user_id"], row["friend_id"], int(row["strength"])
            friends.setdefault(u, {})[v] = s
            friends.setdefault(v, {})[u] = s

    locs: dict[str, Locality] = {}
    if localities_path is not None:
        with open(localities_path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"user_id", "raw_x", "raw_y"} - set(reader.fieldnames or [])
            if missing:
                raise SchemaError(f"locality file missing columns {sorted(missing)}")
            rows = list(reader)
        xs, ys = normalize_coordinates([float(r["raw_x"]) for r in rows],
                                       [float(r["raw_y"]) for r in rows])
        for r, x, y in zip(rows, xs, ys):
            locs[r["user_id"]] = Locality(float(x), float(y))
            friends.setdefault(r["user_id"], {})

    return {
        uid: SocialProfile(uid, fr, locs.get(uid), K=K)
        for uid, fr in sorted(friends.items())
    }
