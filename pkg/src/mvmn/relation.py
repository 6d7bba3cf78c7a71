"""Relation matching: multi-head graph attention over the training graph.

Layer convention: a user's transformed embedding is ``e @ W``.  Each head
scores an edge (target m, neighbor i) as ``a[:d].(e_m W) + a[d:].(e_i W)``,
normalizes LeakyReLU(score) over the target's neighborhood (self included),
aggregates ``ELU(sum_i alpha_mi * e_i W)`` and the heads are averaged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

LEAKY_SLOPE = 0.2

Adjacency = Mapping[int, Sequence[int]]


@dataclass
class GatLayer:
    w: Tensor  # (d, d)
    a: Tensor  # (2d, heads)

    @property
    def heads(self) -> int:
        return self.a.shape[1]

    @property
    def dim(self) -> int:
        return self.w.shape[0]


def attention_coefficient(e_m, e_n, layer: GatLayer, head: int) -> Tensor:
    """Unnormalized score of neighbor ``e_n`` for target ``e_m`` under one head."""
    if not 0 <= head < layer.heads:
        raise IndexError(f"head {head} out of range for {layer.heads} heads")
    pair = ad.concat([ad.matmul(e_m, layer.w), ad.matmul(e_n, layer.w)], axis=-1)
    return ad.matmul(pair, ad.index(layer.a, (slice(None), head)))


def neighbor_weights(target: int, adjacency: Adjacency, coefficients) -> Tensor:
    """Attention distribution of ``target`` over its neighborhood.

    ``coefficients`` holds one raw score per entry of ``adjacency[target]``.
    """
    nbrs = adjacency[target]
    coefficients = ad.as_tensor(coefficients)
    if coefficients.shape[0] != len(nbrs):
        raise ad.ShapeError(f"{len(nbrs)} neighbors but {coefficients.shape[0]} coefficients")
    return ad.softmax(ad.leaky_relu(coefficients, LEAKY_SLOPE), axis=0)


@dataclass(frozen=True)
class EdgeIndex:
    """Flattened (target row, source column) pairs for one propagation step."""

    target: np.ndarray
    source: np.ndarray
    n_targets: int


def edge_index(rows: np.ndarray, adjacency: Adjacency, columns: np.ndarray) -> EdgeIndex:
    """Edges from each user in ``rows`` to its neighbors, as positions.

    ``columns`` lists the users whose embeddings are available as inputs;
    target positions index ``rows`` and source positions index ``columns``.
    """
    col_pos = {int(u): i for i, u in enumerate(columns)}
    tgt, src = [], []
    for r, u in enumerate(rows):
        for v in adjacency[int(u)]:
            tgt.append(r)
            src.append(col_pos[int(v)])
    return EdgeIndex(np.asarray(tgt, np.intp), np.asarray(src, np.intp), len(rows))


def propagate_layer(emb, adjacency: Adjacency, layer: GatLayer,
                    rows: np.ndarray | None = None, columns: np.ndarray | None = None) -> Tensor:
    """One attention propagation step.

    ``emb`` holds the embeddings of ``columns`` (default: all users in order);
    the output holds the new embeddings of ``rows`` (default: ``columns``).
    """
    emb = ad.as_tensor(emb)
    if columns is None:
        columns = np.arange(emb.shape[0])
    if rows is None:
        rows = columns
    idx = edge_index(np.asarray(rows), adjacency, np.asarray(columns))
    col_pos = {int(u): i for i, u in enumerate(columns)}
    row_in_cols = np.asarray([col_pos[int(u)] for u in rows], np.intp)
    d = layer.dim

    proj = ad.matmul(emb, layer.w)  # (n_cols, d)
    a_tgt = ad.index(layer.a, slice(0, d))
    a_src = ad.index(layer.a, slice(d, 2 * d))
    tgt_score = ad.index(ad.matmul(proj, a_tgt), row_in_cols)  # (n_rows, heads)
    src_score = ad.matmul(proj, a_src)  # (n_cols, heads)
    raw = ad.index(tgt_score, idx.target) + ad.index(src_score, idx.source)  # (E, heads)
    alpha = ad.segment_softmax(ad.leaky_relu(raw, LEAKY_SLOPE), idx.target, idx.n_targets)
    msgs = ad.reshape(alpha, (*alpha.shape, 1)) * ad.reshape(
        ad.index(proj, idx.source), (len(idx.source), 1, d)
    )  # (E, heads, d)
    per_head = ad.elu(ad.segment_sum(msgs, idx.target, idx.n_targets))
    return ad.mean(per_head, axis=1)


def receptive_fields(targets: np.ndarray, adjacency: Adjacency, depth: int) -> list[np.ndarray]:
    """User sets needed at each layer, widest first; the last entry is ``targets``."""
    fields = [np.unique(np.asarray(targets, dtype=np.int64))]
    for _ in range(depth):
        prev = set(fields[0].tolist())
        for u in fields[0]:
            prev.update(adjacency[int(u)])
        fields.insert(0, np.asarray(sorted(prev), dtype=np.int64))
    return fields


def propagate(emb_user: Tensor, adjacency: Adjacency, layers: Sequence[GatLayer],
              targets: np.ndarray | None = None) -> tuple[Tensor, np.ndarray]:
    """Stack of propagation steps starting from the raw user embeddings.

    Only the receptive field of ``targets`` (default: every user) is computed.
    Returns the final embeddings and the user ids of their rows.
    """
    n = emb_user.shape[0]
    if targets is None:
        targets = np.arange(n)
    fields = receptive_fields(targets, adjacency, len(layers))
    if len(fields[0]) == n and len(fields[-1]) == n:
        h = emb_user
    else:
        h = ad.embedding_lookup(emb_user, fields[0])
    for k, layer in enumerate(layers):
        h = propagate_layer(h, adjacency, layer, rows=fields[k + 1], columns=fields[k])
    return h, fields[-1]


def v_rel(e_m, e_n) -> Tensor:
    """tanh of the elementwise product of two final user embeddings."""
    e_m, e_n = ad.as_tensor(e_m), ad.as_tensor(e_n)
    if e_m.shape != e_n.shape:
        raise ad.ShapeError(f"v_rel: shapes {e_m.shape} and {e_n.shape} differ")
    return ad.tanh(e_m * e_n)
