"""Domain types shared across the pipeline, plus the processed-dataset format.

Processed datasets are stored as JSON lines:

* line 1, ``{"kind": "header", "format": "mvmn-dataset", "version": 1,
  "users": [...], "locations": [...], "time_bins": 24,
  "time_binning": "hour_of_day", "config": {...}, "fingerprint": "<sha256>"}``
* one ``{"kind": "trajectory", "user": i, "locations": [...],
  "timestamps": [...]}`` line per user (indices into the vocabularies,
  timestamps in epoch seconds)
* one ``{"kind": "split", "name": "train" | "val" | "test",
  "edges": [[a, b], ...]}`` line per split, edges stored with ``a < b``.

``users`` and ``locations`` hold the raw ids (as strings) in index order.
The fingerprint is the sha256 of the canonical JSON of everything after the
header.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

SECONDS_PER_HOUR = 3600
HOURS_PER_DAY = 24
N_TIME_BINS = HOURS_PER_DAY

# half-open gap intervals in hours: [0,1) [1,2) [2,6) [6,12) [12,24) [24,inf)
GAP_BOUNDARIES = (1.0, 2.0, 6.0, 12.0, 24.0)
N_GAP_BINS = len(GAP_BOUNDARIES) + 1

Edge = tuple[int, int]


def hour_of_day_bin(timestamp) -> int | np.ndarray:
    """Hour of day (UTC) of an epoch-seconds timestamp."""
    ts = np.asarray(timestamp)
    if np.any(ts < 0):
        raise ValueError("timestamp must be non-negative")
    out = (ts // SECONDS_PER_HOUR) % HOURS_PER_DAY
    return int(out) if out.ndim == 0 else out.astype(np.int64)


def gap_interval_bin(delta_hours) -> int | np.ndarray:
    """Index of the gap interval containing ``delta_hours``."""
    d = np.asarray(delta_hours, dtype=float)
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise ValueError("gap must be a non-negative number of hours")
    out = np.searchsorted(GAP_BOUNDARIES, d, side="right")
    return int(out) if out.ndim == 0 else out.astype(np.int64)


def canonical_edge(a: int, b: int) -> Edge:
    if a == b:
        raise ValueError(f"self-loop edge ({a}, {a})")
    return (a, b) if a < b else (b, a)


@dataclass(frozen=True)
class CheckIn:
    location: int
    timestamp: int

    def __post_init__(self):
        if self.timestamp < 0:
            raise ValueError("timestamp must be non-negative")
        if self.location < 0:
            raise ValueError("location index must be non-negative")

    @property
    def hours(self) -> float:
        return self.timestamp / SECONDS_PER_HOUR


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A user's check-ins as parallel arrays, sorted by time."""

    user: int
    locations: np.ndarray
    timestamps: np.ndarray

    def __post_init__(self):
        locs = np.asarray(self.locations, dtype=np.int64)
        ts = np.asarray(self.timestamps, dtype=np.int64)
        if locs.shape != ts.shape or locs.ndim != 1:
            raise ValueError("locations and timestamps must be equal-length 1-d arrays")
        if len(ts) == 0:
            raise ValueError(f"user {self.user}: empty trajectory")
        if np.any(np.diff(ts) < 0):
            raise ValueError(f"user {self.user}: check-ins are not time-ordered")
        if np.any(ts < 0) or np.any(locs < 0):
            raise ValueError(f"user {self.user}: negative timestamp or location")
        locs.flags.writeable = False
        ts.flags.writeable = False
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "timestamps", ts)

    @classmethod
    def from_events(cls, user: int, events: Iterable[CheckIn]) -> "Trajectory":
        events = sorted(events, key=lambda c: c.timestamp)
        return cls(user, [c.location for c in events], [c.timestamp for c in events])

    def __len__(self) -> int:
        return len(self.timestamps)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Trajectory):
            return NotImplemented
        return (
            self.user == other.user
            and np.array_equal(self.locations, other.locations)
            and np.array_equal(self.timestamps, other.timestamps)
        )

    @property
    def events(self) -> list[CheckIn]:
        return [CheckIn(int(l), int(t)) for l, t in zip(self.locations, self.timestamps)]

    @property
    def hours(self) -> np.ndarray:
        return self.timestamps / SECONDS_PER_HOUR

    @property
    def time_bins(self) -> np.ndarray:
        return hour_of_day_bin(self.timestamps)


@dataclass(frozen=True)
class LabeledPair:
    u_m: int
    u_n: int
    label: int

    def __post_init__(self):
        if self.u_m == self.u_n:
            raise ValueError("a pair needs two distinct users")
        if self.label not in (0, 1):
            raise ValueError("label must be 0 or 1")


@dataclass(frozen=True)
class MatchViews:
    """View-specific matching representations of one user pair."""

    v_loc: np.ndarray | None
    v_time: np.ndarray | None
    v_rel: np.ndarray | None


@dataclass(eq=False)
class Dataset:
    users: list[str]
    locations: list[str]
    trajectories: dict[int, Trajectory]
    train_edges: frozenset[Edge]
    val_edges: frozenset[Edge]
    test_edges: frozenset[Edge]
    n_time_bins: int = N_TIME_BINS
    config: dict = field(default_factory=dict)
    train_adjacency: dict[int, tuple[int, ...]] = field(init=False, repr=False)

    def __post_init__(self):
        self.train_edges = frozenset(canonical_edge(*e) for e in self.train_edges)
        self.val_edges = frozenset(canonical_edge(*e) for e in self.val_edges)
        self.test_edges = frozenset(canonical_edge(*e) for e in self.test_edges)
        if (self.train_edges & self.val_edges) or (self.train_edges & self.test_edges) or (
            self.val_edges & self.test_edges
        ):
            raise ValueError("edge splits overlap")
        n = len(self.users)
        for a, b in self.train_edges | self.val_edges | self.test_edges:
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"edge ({a}, {b}) references an unknown user")
        for u, traj in self.trajectories.items():
            if not 0 <= u < n:
                raise ValueError(f"trajectory for unknown user {u}")
            if len(traj) and traj.locations.max() >= len(self.locations):
                raise ValueError(f"user {u}: location index outside vocabulary")
        self.train_adjacency = build_adjacency(n, self.train_edges)

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def n_locations(self) -> int:
        return len(self.locations)

    @property
    def all_edges(self) -> frozenset[Edge]:
        return self.train_edges | self.val_edges | self.test_edges

    def user_index(self, raw_id: str) -> int:
        try:
            return self.users.index(str(raw_id))
        except ValueError:
            raise KeyError(f"unknown user {raw_id!r}") from None

    # -- serialization ----------------------------------------------------

    def _body(self) -> list[dict]:
        lines = [
            {
                "kind": "trajectory",
                "user": u,
                "locations": self.trajectories[u].locations.tolist(),
                "timestamps": self.trajectories[u].timestamps.tolist(),
            }
            for u in sorted(self.trajectories)
        ]
        for name, edges in (("train", self.train_edges), ("val", self.val_edges), ("test", self.test_edges)):
            lines.append({"kind": "split", "name": name, "edges": [list(e) for e in sorted(edges)]})
        return lines

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for line in self._body():
            h.update(json.dumps(line, sort_keys=True, separators=(",", ":")).encode())
        return h.hexdigest()

    def to_jsonl(self, path: str | Path) -> None:
        body = self._body()
        header = {
            "kind": "header",
            "format": "mvmn-dataset",
            "version": 1,
            "users": self.users,
            "locations": self.locations,
            "time_bins": self.n_time_bins,
            "time_binning": "hour_of_day",
            "config": self.config,
            "fingerprint": self.fingerprint(),
        }
        with open(path, "w", encoding="utf-8") as fh:
            for line in [header, *body]:
                fh.write(json.dumps(line, sort_keys=True, separators=(",", ":")))
                fh.write("\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "Dataset":
        with open(path, encoding="utf-8") as fh:
            records = [json.loads(line) for line in fh if line.strip()]
        if not records or records[0].get("kind") != "header" or records[0].get("format") != "mvmn-dataset":
            raise ValueError(f"{path}: not an mvmn-dataset file")
        header = records[0]
        trajectories = {}
        splits: dict[str, list] = {}
        for rec in records[1:]:
            if rec["kind"] == "trajectory":
                trajectories[rec["user"]] = Trajectory(rec["user"], rec["locations"], rec["timestamps"])
            elif rec["kind"] == "split":
                splits[rec["name"]] = [tuple(e) for e in rec["edges"]]
            else:
                raise ValueError(f"{path}: unknown record kind {rec['kind']!r}")
        ds = cls(
            users=list(header["users"]),
            locations=list(header["locations"]),
            trajectories=trajectories,
            train_edges=frozenset(splits.get("train", [])),
            val_edges=frozenset(splits.get("val", [])),
            test_edges=frozenset(splits.get("test", [])),
            n_time_bins=header["time_bins"],
            config=header.get("config", {}),
        )
        if header.get("fingerprint") and header["fingerprint"] != ds.fingerprint():
            raise ValueError(f"{path}: fingerprint mismatch, file is corrupt or edited")
        return ds


def build_adjacency(n_users: int, edges: Iterable[Edge]) -> dict[int, tuple[int, ...]]:
    """Neighbor lists with a self-loop first, then neighbors in id order."""
    nbrs: list[set[int]] = [set() for _ in range(n_users)]
    for a, b in edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    return {u: (u, *sorted(nbrs[u])) for u in range(n_users)}
