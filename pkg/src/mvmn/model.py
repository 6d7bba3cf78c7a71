"""Multi-view fusion, pair scoring and the training objective."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .location import batch_v_loc
from .optim import ParamStore
from .relation import GatLayer, propagate, v_rel
from .seeding import rng_for
from .temporal import LSTMParams, PPParams, encode_batch, last_state, sequence_nll, v_time
from .types import Dataset, LabeledPair

VIEWS = ("location", "temporal", "pp_loss", "relation")

# ablation presets: V1 no relation, V2 also no point-process loss,
# V3 location only, V4 temporal only
VARIANTS = {
    "full": {},
    "v1": {"relation": False},
    "v2": {"relation": False, "pp_loss": False},
    "v3": {"relation": False, "temporal": False, "pp_loss": False},
    "v4": {"relation": False, "location": False},
    "location_only": {"relation": False, "temporal": False, "pp_loss": False},
    "temporal_only": {"relation": False, "location": False},
    "relation_only": {"location": False, "temporal": False, "pp_loss": False},
}

CE_EPS = 1e-7


@dataclass(frozen=True)
class ModelConfig:
    d: int = 64
    hidden: int = 128
    k_max: int = 200
    heads: int = 3
    gat_depth: int = 2
    beta: float = 0.1
    neg_per_pos: int = 4
    lr: float = 1e-4
    batch_size: int = 64
    dropout: float = 0.5
    fusion_hidden: int = 128
    epochs: int = 50
    patience: int = 10
    seed: int = 0
    dtype: str = "float64"
    views: dict = field(default_factory=lambda: {v: True for v in VIEWS})

    def __post_init__(self):
        views = {v: True for v in VIEWS}
        views.update(self.views)
        unknown = set(views) - set(VIEWS)
        if unknown:
            raise ValueError(f"unknown views {sorted(unknown)}")
        if not views["temporal"]:
            views["pp_loss"] = False
        if self.beta == 0:
            views["pp_loss"] = False
        if not (views["location"] or views["temporal"] or views["relation"]):
            raise ValueError("at least one view must be enabled")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        object.__setattr__(self, "views", views)

    def with_variant(self, name: str) -> "ModelConfig":
        views = {v: True for v in VIEWS}
        views.update(VARIANTS[name])
        return replace(self, views=views)

    def fusion_input_dim(self) -> int:
        return (
            2 * self.k_max * self.views["location"]
            + self.hidden * self.views["temporal"]
            + self.d * self.views["relation"]
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        return cls(**data)


class TrajectoryBank:
    """Padded per-user arrays used to assemble batches."""

    def __init__(self, dataset: Dataset):
        n = dataset.n_users
        lengths = np.zeros(n, dtype=np.int64)
        for u, tr in dataset.trajectories.items():
            lengths[u] = len(tr)
        width = max(1, int(lengths.max()) if n else 1)
        self.lengths = lengths
        self.locs = np.zeros((n, width), dtype=np.int64)
        self.bins = np.zeros((n, width), dtype=np.int64)
        self.hours = np.zeros((n, width), dtype=np.float64)
        for u, tr in dataset.trajectories.items():
            k = len(tr)
            self.locs[u, :k] = tr.locations
            self.bins[u, :k] = tr.time_bins
            self.hours[u, :k] = tr.hours
        self.mask = np.arange(width)[None, :] < lengths[:, None]

    def rows(self, users: np.ndarray, table: str) -> tuple[np.ndarray, np.ndarray]:
        users = np.asarray(users, dtype=np.int64)
        width = max(1, int(self.lengths[users].max())) if len(users) else 1
        return getattr(self, table)[users, :width], self.mask[users, :width]


class MVMN:
    """Parameters and forward computation of the multi-view matching model."""

    def __init__(self, config: ModelConfig, n_users: int, n_locations: int, n_time_bins: int = 24):
        self.config = config
        self.n_users = n_users
        self.n_locations = n_locations
        self.n_time_bins = n_time_bins
        self.params = ParamStore(np.dtype(config.dtype))
        self._init_params(rng_for(config.seed, "init"))
        self._banks: dict[int, TrajectoryBank] = {}

    # -- parameters -------------------------------------------------------

    def _init_params(self, rng: np.random.Generator) -> None:
        c = self.config
        d, hdim = c.d, c.hidden

        def uniform(shape, fan_in):
            bound = 1.0 / np.sqrt(fan_in)
            return rng.uniform(-bound, bound, size=shape)

        add = self.params.add
        if c.views["relation"]:
            add("E_U", uniform((self.n_users, d), d))
        if c.views["location"]:
            add("E_L", uniform((self.n_locations, d), d))
        if c.views["temporal"]:
            add("E_T", uniform((self.n_time_bins, d), d))
            add("lstm.w_x", uniform((d, 4 * hdim), d))
            add("lstm.w_h", uniform((hdim, 4 * hdim), hdim))
            add("lstm.b", np.zeros(4 * hdim))
            add("pp.v", uniform((hdim,), hdim))
            add("pp.omega", np.array(0.1))
            add("pp.b", np.array(0.0))
        if c.views["relation"]:
            for k in range(c.gat_depth):
                add(f"gat.{k}.w", uniform((d, d), d))
                add(f"gat.{k}.a", uniform((2 * d, c.heads), 2 * d))
        add("fusion.w1", uniform((c.fusion_input_dim(), c.fusion_hidden), c.fusion_input_dim()))
        add("fusion.b1", np.zeros(c.fusion_hidden))
        # zero readout: the untrained model scores every pair 0.5
        add("fusion.w2", np.zeros(c.fusion_hidden))
        # start at the training base rate of positives
        add("fusion.b2", np.array(-np.log(c.neg_per_pos)) if c.neg_per_pos > 0 else np.array(0.0))

    @property
    def lstm(self) -> LSTMParams:
        p = self.params
        return LSTMParams(p["lstm.w_x"], p["lstm.w_h"], p["lstm.b"])

    @property
    def pp(self) -> PPParams:
        p = self.params
        return PPParams(p["pp.v"], p["pp.omega"], p["pp.b"])

    @property
    def gat_layers(self) -> list[GatLayer]:
        p = self.params
        return [GatLayer(p[f"gat.{k}.w"], p[f"gat.{k}.a"]) for k in range(self.config.gat_depth)]

    def bank(self, dataset: Dataset) -> TrajectoryBank:
        key = id(dataset)
        if key not in self._banks:
            self._banks = {key: TrajectoryBank(dataset)}
        return self._banks[key]

    # -- forward ----------------------------------------------------------

    def encode_users(self, dataset: Dataset, users: np.ndarray) -> dict:
        """Per-user quantities shared by every pair the user appears in."""
        c = self.config
        users = np.unique(np.asarray(users, dtype=np.int64))
        out: dict = {"users": users, "pos": {int(u): i for i, u in enumerate(users)}}
        bank = self.bank(dataset)
        if c.views["temporal"]:
            bins, mask = bank.rows(users, "bins")
            states = encode_batch(bins, mask, self.params["E_T"], self.lstm)
            out["h_last"] = last_state(states)
            if c.views["pp_loss"]:
                hours, _ = bank.rows(users, "hours")
                out["nll"] = sequence_nll(states, hours, mask, self.pp)
        if c.views["relation"]:
            rel, rows = propagate(self.params["E_U"], dataset.train_adjacency, self.gat_layers, users)
            assert np.array_equal(rows, users)
            out["rel"] = rel
        return out

    def _checked(self, pairs) -> np.ndarray:
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        unknown = (pairs < 0) | (pairs >= self.n_users)
        if unknown.any():
            raise KeyError(f"unknown user id {int(pairs[unknown][0])}")
        return pairs

    def forward(self, dataset: Dataset, pairs: np.ndarray, train: bool = False,
                rng: np.random.Generator | None = None, encoded: dict | None = None) -> tuple[Tensor, Tensor | None]:
        """Predicted link probabilities (B,) and per-pair point-process loss (B,)."""
        c = self.config
        pairs = self._checked(pairs)
        if encoded is None:
            encoded = self.encode_users(dataset, pairs.ravel())
        pos = encoded["pos"]
        im = np.asarray([pos[int(u)] for u in pairs[:, 0]], np.intp)
        jn = np.asarray([pos[int(u)] for u in pairs[:, 1]], np.intp)

        views = []
        if c.views["location"]:
            bank = self.bank(dataset)
            lm, mm = bank.rows(pairs[:, 0], "locs")
            ln, mn = bank.rows(pairs[:, 1], "locs")
            views.append(batch_v_loc(lm, mm, ln, mn, self.params["E_L"], c.k_max))
        if c.views["temporal"]:
            h = encoded["h_last"]
            views.append(v_time(ad.index(h, im), ad.index(h, jn)))
        if c.views["relation"]:
            r = encoded["rel"]
            views.append(v_rel(ad.index(r, im), ad.index(r, jn)))
        x = views[0] if len(views) == 1 else ad.concat(views, axis=-1)
        p = self.params
        hidden = ad.elu(ad.matmul(x, p["fusion.w1"]) + p["fusion.b1"])
        hidden = ad.dropout(hidden, c.dropout, train, rng)
        y_hat = ad.sigmoid(ad.matmul(hidden, p["fusion.w2"]) + p["fusion.b2"])

        pp_term = None
        if c.views["pp_loss"]:
            nll = encoded["nll"]
            pp_term = ad.index(nll, im) + ad.index(nll, jn)
        return y_hat, pp_term

    def score_pair(self, dataset: Dataset, u_m: int, u_n: int, train: bool = False,
                   rng: np.random.Generator | None = None) -> tuple[float, float]:
        """Link probability of one pair and its point-process loss (0 when disabled)."""
        y, pp = self.forward(dataset, np.array([[u_m, u_n]]), train, rng)
        return float(y.data[0]), 0.0 if pp is None else float(pp.data[0])

    def score_pairs(self, dataset: Dataset, pairs: np.ndarray, chunk: int = 2048) -> np.ndarray:
        """Evaluation-mode scores for many pairs, encoding each user once."""
        pairs = self._checked(pairs)
        if len(pairs) == 0:
            return np.zeros(0)
        encoded = self.encode_users(dataset, pairs.ravel())
        scores = [
            self.forward(dataset, pairs[i : i + chunk], train=False, encoded=encoded)[0].data
            for i in range(0, len(pairs), chunk)
        ]
        return np.concatenate(scores)


def ce_loss(y_hat, y) -> Tensor:
    """Binary cross-entropy with the prediction clamped away from 0 and 1."""
    y_hat = ad.clip(y_hat, CE_EPS, 1.0 - CE_EPS)
    y = np.asarray(y, dtype=y_hat.data.dtype)
    return -(y * ad.log(y_hat) + (1.0 - y) * ad.log(1.0 - y_hat))


def total_loss(model: MVMN, dataset: Dataset, batch: Sequence[LabeledPair] | np.ndarray,
               labels: np.ndarray | None = None, train: bool = False,
               rng: np.random.Generator | None = None) -> tuple[Tensor, dict]:
    """Mean over the batch of cross-entropy plus beta times the pair's point-process loss."""
    if labels is None:
        pairs = np.asarray([(p.u_m, p.u_n) for p in batch], dtype=np.int64)
        labels = np.asarray([p.label for p in batch], dtype=np.float64)
    else:
        pairs = np.asarray(batch, dtype=np.int64)
    if len(pairs) == 0:
        raise ValueError("empty batch")
    y_hat, pp = model.forward(dataset, pairs, train, rng)
    ce = ce_loss(y_hat, labels)
    per_pair = ce if pp is None else ce + pp * model.config.beta
    loss = ad.mean(per_pair)
    stats = {
        "ce": float(np.mean(ce.data)),
        "pp": float(np.mean(pp.data)) if pp is not None else 0.0,
    }
    return loss, stats


def make_training_batches(dataset: Dataset, neg_per_pos: int = 4, seed: int = 0, epoch: int = 0,
                          batch_size: int = 64) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Shuffled (pairs, labels) batches: each train edge plus sampled non-neighbors of its anchor.

    Negatives avoid the anchor's training neighbors only and are redrawn every
    epoch.  Edge orientation (which endpoint anchors) is randomized.
    """
    rng = rng_for(seed, f"batches/{epoch}")
    adj = dataset.train_adjacency
    n = dataset.n_users
    pairs, labels = [], []
    for a, b in sorted(dataset.train_edges):
        if rng.random() < 0.5:
            a, b = b, a
        pairs.append((a, b))
        labels.append(1.0)
        taken = set(adj[a])
        if n - len(taken) < neg_per_pos:
            raise ValueError(f"user {a} has fewer than {neg_per_pos} non-neighbors")
        drawn = 0
        while drawn < neg_per_pos:
            v = int(rng.integers(n))
            if v in taken:
                continue
            pairs.append((a, v))
            labels.append(0.0)
            drawn += 1
    pairs_arr = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    labels_arr = np.asarray(labels)
    order = rng.permutation(len(pairs_arr))
    for i in range(0, len(order), batch_size):
        sel = order[i : i + batch_size]
        yield pairs_arr[sel], labels_arr[sel]


def batch_to_pairs(pairs: np.ndarray, labels: np.ndarray) -> list[LabeledPair]:
    return [LabeledPair(int(a), int(b), int(y)) for (a, b), y in zip(pairs, labels)]
