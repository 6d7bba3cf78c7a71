"""Finite-difference check of the full training loss on a tiny random dataset."""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .autodiff import Tape
from .model import MVMN, ModelConfig, total_loss
from .seeding import rng_for
from .types import Dataset, Trajectory

# small widths keep the full check fast; the architecture is unchanged
TOY_CONFIG = ModelConfig(d=4, hidden=5, k_max=8, heads=3, gat_depth=2, fusion_hidden=6, dropout=0.0)


def toy_dataset(seed: int = 0, n_users: int = 6, n_locations: int = 7) -> Dataset:
    """Random trajectories of 2 to 6 check-ins and a connected-ish train graph."""
    rng = rng_for(seed, "gradcheck/data")
    trajectories = {}
    for u in range(n_users):
        k = int(rng.integers(2, 7))
        # a few hours of activity keeps the point-process term O(1)
        stamps = np.sort(rng.integers(0, 4 * 3600, size=k))
        trajectories[u] = Trajectory(u, rng.integers(n_locations, size=k), stamps)
    train = {(u, u + 1) for u in range(n_users - 1)} | {(0, n_users - 1)}
    return Dataset(
        [str(u) for u in range(n_users)],
        [str(i) for i in range(n_locations)],
        trajectories,
        frozenset(train),
        frozenset({(0, 2)}),
        frozenset({(1, 3)}),
    )


def _toy_batch(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    n = dataset.n_users
    pairs = np.array([(a, b) for a in range(n) for b in range(a + 1, n)], dtype=np.int64)
    labels = np.array([float((a, b) in dataset.all_edges) for a, b in pairs])
    return pairs, labels


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| scaled by the larger of the two gradients' max magnitude."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def gradcheck(seed: int = 0, config: ModelConfig | None = None, h: float = 1e-5,
              max_coords: int | None = None, jitter: float = 0.5) -> dict[str, float]:
    """Max relative error per parameter between backprop and central differences.

    Dropout is forced off and 64-bit floats are used.  ``max_coords`` caps the
    number of randomly chosen coordinates probed per parameter.
    """
    config = replace(config or TOY_CONFIG, dropout=0.0, dtype="float64", seed=seed)
    dataset = toy_dataset(seed)
    pairs, labels = _toy_batch(dataset)
    model = MVMN(config, dataset.n_users, dataset.n_locations, dataset.n_time_bins)
    # move well off the init so no gradient is tiny (zero readout, near-uniform attention)
    rng = rng_for(seed, "gradcheck/params")
    for _, p in model.params.items():
        p.data += rng.normal(0.0, jitter, size=p.shape)

    def loss_value() -> float:
        with Tape():
            loss, _ = total_loss(model, dataset, pairs, labels, train=False)
        return float(loss.data)

    model.params.zero_grad()
    with Tape() as tape:
        loss, _ = total_loss(model, dataset, pairs, labels, train=False)
    tape.backward(loss)

    errors = {}
    for name, p in model.params.items():
        analytic = np.array(p.grad, copy=True).ravel()
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        numeric = np.empty(len(coords))
        for j, i in enumerate(coords):
            old = flat[i]
            flat[i] = old + h
            up = loss_value()
            flat[i] = old - h
            down = loss_value()
            flat[i] = old
            numeric[j] = (up - down) / (2 * h)
        errors[name] = relative_error(analytic[coords], numeric)
    return errors
