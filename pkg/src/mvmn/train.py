"""Training loop, early stopping and the binary checkpoint format.

Checkpoint layout::

    b"MVMNCKPT"            8-byte magic
    uint64 (little-endian) length of the JSON header in bytes
    header                 UTF-8 JSON: config, epoch, val_auc, seed, history, meta and
                           a manifest [{name, shape, offset, nbytes}, ...]
    blocks                 little-endian float64 parameter data; offsets are
                           relative to the first byte after the header
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Tape
from .evaluation import evaluate
from .ingestion import sample_eval_candidates
from .model import MVMN, ModelConfig, make_training_batches, total_loss
from .optim import Adam
from .seeding import rng_for
from .types import Dataset

log = logging.getLogger(__name__)

MAGIC = b"MVMNCKPT"


class TrainingDiverged(FloatingPointError):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    arrays: dict[str, np.ndarray]
    n_users: int
    n_locations: int
    n_time_bins: int
    epoch: int = 0
    val_auc: float | None = None
    history: list[dict] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def model(self) -> MVMN:
        m = MVMN(self.config, self.n_users, self.n_locations, self.n_time_bins)
        m.params.load_arrays(self.arrays)
        return m

    @classmethod
    def from_model(cls, model: MVMN, epoch: int = 0, val_auc: float | None = None,
                   history: list[dict] | None = None) -> "Checkpoint":
        return cls(model.config, model.params.arrays(), model.n_users, model.n_locations,
                   model.n_time_bins, epoch, val_auc, list(history or []))

    def save(self, path: str | Path) -> None:
        manifest, blocks, offset = [], [], 0
        for name in sorted(self.arrays):
            block = np.ascontiguousarray(self.arrays[name], dtype="<f8").tobytes()
            manifest.append({"name": name, "shape": list(self.arrays[name].shape),
                             "offset": offset, "nbytes": len(block)})
            blocks.append(block)
            offset += len(block)
        header = {
            "format": "mvmn-checkpoint",
            "version": 1,
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "epoch": self.epoch,
            "val_auc": self.val_auc,
            "n_users": self.n_users,
            "n_locations": self.n_locations,
            "n_time_bins": self.n_time_bins,
            "history": self.history,
            "meta": self.meta,
            "manifest": manifest,
        }
        raw = json.dumps(header, sort_keys=True).encode()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<Q", len(raw)))
            fh.write(raw)
            for block in blocks:
                fh.write(block)

    @classmethod
    def load(cls, path: str | Path) -> "Checkpoint":
        data = Path(path).read_bytes()
        if data[:8] != MAGIC:
            raise ValueError(f"{path}: not an mvmn checkpoint")
        (hlen,) = struct.unpack("<Q", data[8:16])
        header = json.loads(data[16 : 16 + hlen])
        base = 16 + hlen
        arrays = {}
        for entry in header["manifest"]:
            start = base + entry["offset"]
            buf = data[start : start + entry["nbytes"]]
            arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8").reshape(entry["shape"]).copy()
        return cls(
            ModelConfig.from_dict(header["config"]),
            arrays,
            header["n_users"],
            header["n_locations"],
            header["n_time_bins"],
            header["epoch"],
            header["val_auc"],
            header.get("history", []),
            header.get("meta", {}),
        )


def _dump_batch(pairs, labels) -> str:
    return json.dumps({"pairs": np.asarray(pairs).tolist(), "labels": np.asarray(labels).tolist()})


def train(dataset: Dataset, config: ModelConfig, val_candidates: dict | None = None,
          progress=None) -> Checkpoint:
    """Adam on the joint loss with per-epoch validation AUC and early stopping.

    Returns the checkpoint with the best validation AUC (the initial model if
    no epoch runs).
    """
    model = MVMN(config, dataset.n_users, dataset.n_locations, dataset.n_time_bins)
    optimizer = Adam(model.params, lr=config.lr)
    if val_candidates is None and dataset.val_edges:
        val_candidates = sample_eval_candidates(
            dataset, per_user=min(50, _max_negatives(dataset)), seed=config.seed, split="val"
        )

    def val_auc() -> float | None:
        if not val_candidates:
            return None
        return evaluate(model, dataset, val_candidates, split="val")["auc"]

    best_auc = val_auc()
    history = [{"epoch": 0, "val_auc": best_auc}]
    best = Checkpoint.from_model(model, 0, best_auc, history)
    stale = 0
    for epoch in range(1, config.epochs + 1):
        drop_rng = rng_for(config.seed, f"dropout/{epoch}")
        losses = []
        for pairs, labels in make_training_batches(dataset, config.neg_per_pos, config.seed, epoch,
                                                   config.batch_size):
            with Tape() as tape:
                loss, _ = total_loss(model, dataset, pairs, labels, train=True, rng=drop_rng)
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingDiverged(f"epoch {epoch}: loss is {value}; batch {_dump_batch(pairs, labels)}")
            tape.backward(loss)
            try:
                optimizer.step()
            except FloatingPointError as exc:
                raise TrainingDiverged(f"epoch {epoch}: {exc}; batch {_dump_batch(pairs, labels)}") from None
            losses.append(value)
        auc = val_auc()
        history.append({"epoch": epoch, "loss": float(np.mean(losses)) if losses else None, "val_auc": auc})
        log.info("epoch %d loss %.4f val_auc %s", epoch, history[-1]["loss"] or 0.0, auc)
        if progress is not None:
            progress(history[-1])
        if auc is None or best_auc is None or auc > best_auc:
            best_auc = auc
            best = Checkpoint.from_model(model, epoch, auc, history)
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    best.history = history
    return best


def _max_negatives(dataset: Dataset) -> int:
    degree = np.zeros(dataset.n_users, dtype=np.int64)
    for a, b in dataset.all_edges:
        degree[a] += 1
        degree[b] += 1
    return int(dataset.n_users - 1 - degree.max()) if dataset.n_users else 0
