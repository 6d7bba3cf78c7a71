"""Synthetic location-aware social networks with planted communities.

Users belong to communities.  Friendships are denser inside a community;
check-in locations favour the community's own pool.  Check-in times follow
an exponential renewal process with a community-specific mean gap, run in
"active time" that is laid out each day in a window around the community's
peak hour.  Friends also share some joint visits (same
place, nearly the same time).  Output is the raw tab-separated format the
ingestion pipeline reads.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .seeding import rng_for

BASE_EPOCH = 1262304000  # 2010-01-01T00:00:00Z


@dataclass(frozen=True)
class SynthConfig:
    communities: int = 8
    users_per_community: int = 40
    locations_per_community: int = 30
    global_locations: int = 200
    p_in: float = 0.2
    p_out: float = 0.002
    own_pool_prob: float = 0.4
    peak_hours: tuple[float, ...] | None = None  # default: evenly spaced over the day
    active_hours: float = 20.0  # width of the daily activity window centred on the peak
    mean_gaps: tuple[float, ...] | None = None  # hours of active time, per community
    checkins_min: int = 10
    checkins_max: int = 20
    joint_visits: float = 2.0  # expected shared visits per friendship
    lat_range: tuple[float, float] = (40.55, 40.85)
    lon_range: tuple[float, float] = (-74.05, -73.75)
    seed: int = 0

    def __post_init__(self):
        c = self.communities
        if c < 1 or self.users_per_community < 2:
            raise ValueError("need at least one community with two users")
        if not 0.0 <= self.p_out <= 1.0 or not 0.0 <= self.p_in <= 1.0:
            raise ValueError("edge probabilities must lie in [0, 1]")
        if c > 1 and not self.p_in > self.p_out:
            raise ValueError("planted structure needs p_in > p_out")
        if not (1.0 / c < self.own_pool_prob <= 1.0) and c > 1:
            raise ValueError("own_pool_prob must exceed 1/communities")
        if self.checkins_min < 1 or self.checkins_max < self.checkins_min:
            raise ValueError("invalid check-in count range")
        for name in ("peak_hours", "mean_gaps"):
            v = getattr(self, name)
            if v is not None and len(v) != c:
                raise ValueError(f"{name} needs one value per community")
        if self.mean_gaps is not None and min(self.mean_gaps) <= 0:
            raise ValueError("mean gaps must be positive")
        if not 0.0 < self.active_hours <= 24.0:
            raise ValueError("active_hours must lie in (0, 24]")
        if self.locations_per_community < 1:
            raise ValueError("each community needs at least one location")

    @property
    def n_users(self) -> int:
        return self.communities * self.users_per_community

    def peaks(self) -> np.ndarray:
        if self.peak_hours is not None:
            return np.asarray(self.peak_hours, dtype=float)
        return np.arange(self.communities) * 24.0 / self.communities

    def gaps(self) -> np.ndarray:
        if self.mean_gaps is not None:
            return np.asarray(self.mean_gaps, dtype=float)
        return np.geomspace(0.5, 4.0, self.communities)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, path: str | Path) -> "SynthConfig":
        data = json.loads(Path(path).read_text())
        for key in ("peak_hours", "mean_gaps", "lat_range", "lon_range"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)


@dataclass
class SynthData:
    community: np.ndarray
    edges: list[tuple[int, int]]
    # per user: (location ids, timestamps) sorted by time
    checkins: list[tuple[np.ndarray, np.ndarray]]
    coords: np.ndarray  # (n_locations, 2) lat/lon


def generate(config: SynthConfig) -> SynthData:
    c = config
    n = c.n_users
    community = np.repeat(np.arange(c.communities), c.users_per_community)

    rng_edges = rng_for(c.seed, "synth/edges")
    iu, ju = np.triu_indices(n, k=1)
    prob = np.where(community[iu] == community[ju], c.p_in, c.p_out)
    keep = rng_edges.random(len(iu)) < prob
    edges = [(int(a), int(b)) for a, b in zip(iu[keep], ju[keep])]

    n_pool = c.communities * c.locations_per_community
    n_loc = n_pool + c.global_locations
    rng_loc = rng_for(c.seed, "synth/locations")
    coords = np.column_stack([
        rng_loc.uniform(*c.lat_range, size=n_loc),
        rng_loc.uniform(*c.lon_range, size=n_loc),
    ])

    peaks, gaps = c.peaks(), c.gaps()
    checkins: list[tuple[list[int], list[int]]] = []
    for u in range(n):
        rng = rng_for(c.seed, f"synth/user/{u}")
        com = community[u]
        k = int(rng.integers(c.checkins_min, c.checkins_max + 1))
        own = rng.random(k) < c.own_pool_prob
        if c.global_locations == 0:
            own[:] = True
        locs = np.where(
            own,
            com * c.locations_per_community + rng.integers(c.locations_per_community, size=k),
            n_pool + rng.integers(max(c.global_locations, 1), size=k),
        )
        # renewal process in active time, laid out window by window on the clock
        w = c.active_hours
        active = rng.uniform(0, 7 * w) + np.cumsum(rng.exponential(gaps[com], size=k))
        day = np.floor(active / w)
        clock = day * 24.0 + peaks[com] - w / 2.0 + (active - day * w)
        stamps = BASE_EPOCH + 12 * 3600 + np.round(clock * 3600).astype(np.int64)
        checkins.append((locs.astype(np.int64).tolist(), stamps.tolist()))

    if c.joint_visits > 0:
        rng_joint = rng_for(c.seed, "synth/joint")
        spans = [(min(st), max(st)) for _, st in checkins]
        for a, b in edges:
            for _ in range(int(rng_joint.poisson(c.joint_visits))):
                src, dst = (a, b) if rng_joint.random() < 0.5 else (b, a)
                locs, stamps = checkins[src]
                i = int(rng_joint.integers(len(locs)))
                jitter = int(rng_joint.integers(-900, 901))
                # only inside the receiver's own active period, so its gap scale is kept
                if not spans[dst][0] <= stamps[i] <= spans[dst][1]:
                    continue
                checkins[dst][0].append(locs[i])
                checkins[dst][1].append(max(BASE_EPOCH, stamps[i] + jitter))

    ordered = []
    for locs, stamps in checkins:
        order = np.argsort(np.asarray(stamps), kind="stable")
        ordered.append((np.asarray(locs)[order], np.asarray(stamps)[order]))
    return SynthData(community, edges, ordered, coords)


def _iso(ts: int) -> str:
    return datetime.fromtimestamp(int(ts), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def write_raw(data: SynthData, checkins_path: str | Path, edges_path: str | Path) -> None:
    """Write gowalla-style check-in and (bidirectional) edge files."""
    with open(checkins_path, "w", encoding="utf-8", newline="\n") as fh:
        for u, (locs, stamps) in enumerate(data.checkins):
            for loc, ts in zip(locs, stamps):
                lat, lon = data.coords[loc]
                fh.write(f"{u}\t{_iso(ts)}\t{lat:.6f}\t{lon:.6f}\t{loc}\n")
    with open(edges_path, "w", encoding="utf-8", newline="\n") as fh:
        for a, b in data.edges:
            fh.write(f"{a}\t{b}\n{b}\t{a}\n")


def synth_files(config: SynthConfig, checkins_path: str | Path, edges_path: str | Path) -> SynthData:
    data = generate(config)
    write_raw(data, checkins_path, edges_path)
    return data
