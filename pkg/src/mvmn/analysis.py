"""Descriptive statistics that motivate the model: how similar linked users'
check-in clocks are, and how often co-location implies a social link.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Iterable, Literal

import numpy as np

from .seeding import rng_for
from .types import (
    N_GAP_BINS,
    N_TIME_BINS,
    SECONDS_PER_HOUR,
    Dataset,
    Edge,
    Trajectory,
    gap_interval_bin,
    hour_of_day_bin,
)


@dataclass(frozen=True)
class TemporalProfile:
    frame_hist: np.ndarray  # check-ins per hour of day
    gap_hist: np.ndarray  # consecutive gaps per gap interval


def profile(traj: Trajectory) -> TemporalProfile:
    frames = np.bincount(hour_of_day_bin(traj.timestamps), minlength=N_TIME_BINS)
    gaps = np.diff(traj.timestamps) / SECONDS_PER_HOUR
    gap_hist = np.bincount(gap_interval_bin(gaps), minlength=N_GAP_BINS)
    return TemporalProfile(frames.astype(np.int64), gap_hist.astype(np.int64))


@dataclass(frozen=True)
class SimilarityResult:
    mean: float | None
    n_pairs: int
    n_skipped: int


def avg_cosine_similarity(pairs: Iterable[Edge], profiles: dict[int, TemporalProfile],
                          which: Literal["frame", "gap"] = "frame") -> SimilarityResult:
    """Mean cosine between the chosen histograms of each pair.

    Pairs where either histogram is all zero are skipped and counted.
    """
    attr = {"frame": "frame_hist", "gap": "gap_hist"}[which]
    sims, skipped = [], 0
    for a, b in pairs:
        x = getattr(profiles[a], attr).astype(float)
        y = getattr(profiles[b], attr).astype(float)
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        if nx == 0 or ny == 0:
            skipped += 1
            continue
        sims.append(float(x @ y) / (nx * ny))
    return SimilarityResult(float(np.mean(sims)) if sims else None, len(sims), skipped)


@dataclass(frozen=True)
class CooccurrenceStats:
    n_l: int  # pairs sharing a location
    n_l_s: int  # ... of which linked
    n_lt: int  # pairs sharing a location within the same time interval
    n_lt_s: int
    window_hours: float
    mode: str

    @property
    def sr(self) -> float | None:
        return self.n_l_s / self.n_l if self.n_l else None

    @property
    def str_(self) -> float | None:
        return self.n_lt_s / self.n_lt if self.n_lt else None

    def to_dict(self) -> dict:
        return {**asdict(self), "SR": self.sr, "STR": self.str_}


def _pairs_of(groups: Iterable[set[int]]) -> set[Edge]:
    out: set[Edge] = set()
    for users in groups:
        if len(users) > 1:
            out.update(combinations(sorted(users), 2))
    return out


def cooccurrence_ratios(dataset: Dataset, window_hours: float = 1.0,
                        mode: Literal["bucket", "sliding"] = "bucket") -> CooccurrenceStats:
    """Spatial and spatio-temporal co-occurrence counts over all user pairs.

    ``bucket`` puts two visits in the same interval when ``floor(t / window)``
    agrees; ``sliding`` when ``|t1 - t2| <= window``.  A pair counts as linked
    if it is an edge in any split.
    """
    if window_hours <= 0:
        raise ValueError("window_hours must be positive")
    if mode not in ("bucket", "sliding"):
        raise ValueError(f"unknown mode {mode!r}")
    width = window_hours * SECONDS_PER_HOUR
    by_loc: dict[int, set[int]] = defaultdict(set)
    visits: dict[int, list[tuple[int, int]]] = defaultdict(list)
    by_slot: dict[tuple[int, int], set[int]] = defaultdict(set)
    for u, traj in dataset.trajectories.items():
        for loc, ts in zip(traj.locations.tolist(), traj.timestamps.tolist()):
            by_loc[loc].add(u)
            if mode == "bucket":
                by_slot[(loc, int(ts // width))].add(u)
            else:
                visits[loc].append((ts, u))

    spatial = _pairs_of(by_loc.values())
    if mode == "bucket":
        temporal = _pairs_of(by_slot.values())
    else:
        temporal = set()
        for events in visits.values():
            events.sort()
            lo = 0
            for hi, (t, u) in enumerate(events):
                while t - events[lo][0] > width:
                    lo += 1
                for _, v in events[lo:hi]:
                    if v != u:
                        temporal.add((u, v) if u < v else (v, u))
    linked = dataset.all_edges
    return CooccurrenceStats(
        len(spatial), len(spatial & linked), len(temporal), len(temporal & linked), window_hours, mode
    )


def sample_unlinked(dataset: Dataset, n: int, seed: int = 0) -> list[Edge]:
    """Up to ``n`` distinct unlinked pairs drawn uniformly among users with trajectories."""
    users = np.asarray(sorted(dataset.trajectories), dtype=np.int64)
    linked = dataset.all_edges
    available = len(users) * (len(users) - 1) // 2 - sum(
        1 for a, b in linked if a in dataset.trajectories and b in dataset.trajectories
    )
    n = min(n, available)
    rng = rng_for(seed, "analysis/unlinked")
    out: set[Edge] = set()
    while len(out) < n:
        a, b = rng.choice(users, size=2, replace=False).tolist()
        e = (a, b) if a < b else (b, a)
        if e not in linked:
            out.add(e)
    return sorted(out)


def report(dataset: Dataset, window_hours: float = 1.0, mode: str = "bucket", seed: int = 0,
           unlinked_factor: int = 10) -> dict:
    """Co-occurrence counts and ratios plus frame/gap similarities of linked vs unlinked pairs."""
    profiles = {u: profile(t) for u, t in dataset.trajectories.items()}
    linked = sorted(e for e in dataset.all_edges if e[0] in profiles and e[1] in profiles)
    unlinked = sample_unlinked(dataset, unlinked_factor * len(linked), seed)
    similarity = {}
    for which in ("frame", "gap"):
        for name, pairs in (("linked", linked), ("unlinked", unlinked)):
            res = avg_cosine_similarity(pairs, profiles, which)
            similarity[f"{which}_{name}"] = asdict(res)
    return {
        "cooccurrence": cooccurrence_ratios(dataset, window_hours, mode).to_dict(),
        "similarity": similarity,
        "n_linked_pairs": len(linked),
        "n_unlinked_sampled": len(unlinked),
        "seed": seed,
    }
