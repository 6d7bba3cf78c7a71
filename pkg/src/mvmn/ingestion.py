"""Raw check-in/edge parsing, city and activity filtering, splits and candidate pools."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

from .seeding import rng_for
from .types import Dataset, Edge, Trajectory, canonical_edge

log = logging.getLogger(__name__)

FORMATS = ("gowalla_tsv", "foursquare_tsv")

# Rough city boxes for convenience only; the source data selection used
# boxes that were never published.
PRESETS = {
    "nyc": (40.4774, 40.9176, -74.2591, -73.7004),
    "la": (33.7037, 34.3373, -118.6682, -118.1553),
}


class RawCheckIn(NamedTuple):
    user: str
    timestamp: int
    lat: float
    lon: float
    location: str


class ParseError(ValueError):
    pass


@dataclass(frozen=True)
class RegionFilter:
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float
    min_in_region_fraction: float = 0.1

    def __post_init__(self):
        if not self.lat_min < self.lat_max or not self.lon_min < self.lon_max:
            raise ValueError("bounding box needs lat_min < lat_max and lon_min < lon_max")
        if not 0.0 <= self.min_in_region_fraction <= 1.0:
            raise ValueError("min_in_region_fraction must lie in [0, 1]")

    def contains(self, lat: float, lon: float) -> bool:
        return self.lat_min <= lat <= self.lat_max and self.lon_min <= lon <= self.lon_max


@dataclass(frozen=True)
class ActivityFilter:
    min_friends: int = 1
    min_checkins: int = 10

    def __post_init__(self):
        if self.min_friends < 0 or self.min_checkins < 0:
            raise ValueError("activity thresholds must be non-negative")


def parse_timestamp(text: str) -> int:
    """ISO-8601 to epoch seconds; naive times are taken as UTC."""
    stamp = text.strip()
    if stamp.endswith("Z"):
        stamp = stamp[:-1] + "+00:00"
    dt = datetime.fromisoformat(stamp)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def parse_checkins(path: str | Path, format: str = "gowalla_tsv") -> list[RawCheckIn]:  # noqa: A002
    """Read ``user  time  lat  lon  location`` tab-separated rows."""
    if format not in FORMATS:
        raise ValueError(f"unknown check-in format {format!r}; expected one of {FORMATS}")
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 5:
                raise ParseError(f"{path}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
            user, when, lat, lon, loc = parts
            try:
                ts = parse_timestamp(when)
            except ValueError:
                raise ParseError(f"{path}:{lineno}: unparseable timestamp {when!r}") from None
            try:
                rows.append(RawCheckIn(user.strip(), ts, float(lat), float(lon), loc.strip()))
            except ValueError:
                raise ParseError(f"{path}:{lineno}: bad coordinate") from None
    return rows


def parse_edges(path: str | Path) -> set[tuple[str, str]]:
    """Undirected friendship pairs from a two-column tab-separated file.

    Both directions collapse to one pair; self-loops are dropped.
    """
    edges = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected 2 user ids, got {len(parts)}")
            a, b = parts
            if a != b:
                edges.add((a, b) if a < b else (b, a))
    return edges


def group_by_user(rows: Iterable[RawCheckIn]) -> dict[str, list[RawCheckIn]]:
    grouped: dict[str, list[RawCheckIn]] = defaultdict(list)
    for r in rows:
        grouped[r.user].append(r)
    return dict(grouped)


def apply_region_filter(
    by_user: dict[str, list[RawCheckIn]], region: RegionFilter
) -> dict[str, list[RawCheckIn]]:
    """Keep users with enough in-region check-ins, and only those check-ins."""
    kept = {}
    for user, rows in by_user.items():
        inside = [r for r in rows if region.contains(r.lat, r.lon)]
        if inside and len(inside) / len(rows) >= region.min_in_region_fraction:
            kept[user] = inside
    return kept


def apply_activity_filter(
    by_user: dict[str, list], edges: Iterable[tuple[str, str]], activity: ActivityFilter
) -> tuple[dict[str, list], set[tuple[str, str]]]:
    """Drop users below either threshold, repeating until nothing changes."""
    users = {u for u, rows in by_user.items() if len(rows) >= activity.min_checkins}
    edges = {e for e in edges if e[0] in by_user and e[1] in by_user}
    while True:
        live = {e for e in edges if e[0] in users and e[1] in users}
        degree: dict[str, int] = defaultdict(int)
        for a, b in live:
            degree[a] += 1
            degree[b] += 1
        survivors = {u for u in users if degree[u] >= activity.min_friends}
        if survivors == users:
            edges = live
            break
        users = survivors
    return {u: by_user[u] for u in by_user if u in users}, edges


def truncate_trajectory(traj: Trajectory, k_max: int = 200) -> Trajectory:
    """Keep the most recent ``k_max`` check-ins."""
    if len(traj) <= k_max:
        return traj
    return Trajectory(traj.user, traj.locations[-k_max:], traj.timestamps[-k_max:])


def split_edges(
    edges: Iterable[Edge], ratios: tuple[float, float, float] = (0.8, 0.1, 0.1), seed: int = 0
) -> tuple[frozenset[Edge], frozenset[Edge], frozenset[Edge]]:
    """Random train/val/test partition of the edges, deterministic per seed."""
    edges = sorted(set(edges))
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("split ratios must sum to 1")
    n = len(edges)
    order = rng_for(seed, "split").permutation(n)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_train = min(n_train, n - n_val)
    shuffled = [edges[i] for i in order]
    return (
        frozenset(shuffled[:n_train]),
        frozenset(shuffled[n_train : n_train + n_val]),
        frozenset(shuffled[n_train + n_val :]),
    )


class InsufficientNegatives(ValueError):
    pass


def sample_eval_candidates(
    dataset: Dataset, per_user: int = 50, seed: int = 0, split: str = "test"
) -> dict[int, list[int]]:
    """Ranking pools: each target user's positives in ``split`` plus sampled negatives.

    Negatives are users not linked to the target in any split.
    """
    target_edges = {"test": dataset.test_edges, "val": dataset.val_edges}[split]
    positives: dict[int, list[int]] = defaultdict(list)
    for a, b in sorted(target_edges):
        positives[a].append(b)
        positives[b].append(a)
    linked: dict[int, set[int]] = defaultdict(set)
    for a, b in dataset.all_edges:
        linked[a].add(b)
        linked[b].add(a)
    rng = rng_for(seed, f"candidates/{split}")
    everyone = np.arange(dataset.n_users)
    pools = {}
    for u in sorted(positives):
        excluded = linked[u] | {u}
        pool = np.setdiff1d(everyone, np.fromiter(excluded, dtype=np.int64), assume_unique=True)
        if len(pool) < per_user:
            raise InsufficientNegatives(
                f"user {dataset.users[u]!r} has only {len(pool)} unlinked users, need {per_user}"
            )
        negatives = rng.choice(pool, size=per_user, replace=False)
        pools[u] = sorted(positives[u]) + sorted(int(v) for v in negatives)
    return pools


@dataclass(frozen=True)
class PreprocessConfig:
    region: RegionFilter | None = None
    activity: ActivityFilter = ActivityFilter()
    k_max: int = 200
    seed: int = 0
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def to_dict(self) -> dict:
        return {
            "region": None if self.region is None else {
                "lat_min": self.region.lat_min,
                "lat_max": self.region.lat_max,
                "lon_min": self.region.lon_min,
                "lon_max": self.region.lon_max,
                "min_in_region_fraction": self.region.min_in_region_fraction,
            },
            "min_friends": self.activity.min_friends,
            "min_checkins": self.activity.min_checkins,
            "k_max": self.k_max,
            "seed": self.seed,
            "ratios": list(self.ratios),
        }


def build_dataset(rows: list[RawCheckIn], raw_edges: Iterable[tuple[str, str]],
                  config: PreprocessConfig) -> Dataset:
    """Run the whole filtering pipeline and index everything."""
    by_user = group_by_user(rows)
    if config.region is not None:
        by_user = apply_region_filter(by_user, config.region)
    by_user, edges = apply_activity_filter(by_user, raw_edges, config.activity)
    users = sorted(by_user, key=_natural_key)
    uidx = {u: i for i, u in enumerate(users)}

    trajectories: dict[int, Trajectory] = {}
    kept_rows: dict[int, list[RawCheckIn]] = {}
    for u in users:
        ordered = sorted(by_user[u], key=lambda r: r.timestamp)[-config.k_max :]
        kept_rows[uidx[u]] = ordered
    locations = sorted({r.location for rs in kept_rows.values() for r in rs}, key=_natural_key)
    lidx = {l: i for i, l in enumerate(locations)}
    for i, ordered in kept_rows.items():
        trajectories[i] = Trajectory(i, [lidx[r.location] for r in ordered], [r.timestamp for r in ordered])

    indexed = {canonical_edge(uidx[a], uidx[b]) for a, b in edges}
    if len(indexed) < 10:
        raise ValueError(f"only {len(indexed)} edges survive filtering; need at least 10 to split")
    train, val, test = split_edges(indexed, config.ratios, config.seed)
    log.info("dataset: %d users, %d locations, %d edges", len(users), len(locations), len(indexed))
    return Dataset(
        users=users,
        locations=locations,
        trajectories=trajectories,
        train_edges=train,
        val_edges=val,
        test_edges=test,
        config=config.to_dict(),
    )


def preprocess(checkins_path, edges_path, config: PreprocessConfig, format: str = "gowalla_tsv") -> Dataset:  # noqa: A002
    return build_dataset(parse_checkins(checkins_path, format), parse_edges(edges_path), config)


def _natural_key(s: str):
    return (0, int(s), "") if s.lstrip("-").isdigit() else (1, 0, s)
