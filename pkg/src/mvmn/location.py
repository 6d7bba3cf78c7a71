"""Geographic matching of two location sequences through embedding cosines."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


def cosine(a, b) -> Tensor:
    """Cosine of two vectors along the last axis; 0 if either has zero norm."""
    return ad.sum(ad.l2_normalize(a) * ad.l2_normalize(b), axis=-1)


def similarity_matrix(locs_m, locs_n, emb_loc: Tensor) -> Tensor:
    """``S[i, j]`` = cosine between the i-th location of one user and the j-th of the other."""
    em = ad.l2_normalize(ad.embedding_lookup(emb_loc, np.asarray(locs_m)))
    en = ad.l2_normalize(ad.embedding_lookup(emb_loc, np.asarray(locs_n)))
    return ad.matmul(em, _swap_last(en))


def match_vectors(locs_m, locs_n, emb_loc: Tensor) -> tuple[Tensor, Tensor]:
    """Row-wise and column-wise max pooling of the similarity matrix."""
    if len(locs_m) == 0 or len(locs_n) == 0:
        raise ValueError("both location sequences must be nonempty")
    sim = similarity_matrix(locs_m, locs_n, emb_loc)
    return ad.max_over_axis(sim, axis=1), ad.max_over_axis(sim, axis=0)


def v_loc(s_m, s_n, k_max: int = 200) -> Tensor:
    """Zero-pad both pooled vectors to ``k_max`` and concatenate them."""
    s_m, s_n = ad.as_tensor(s_m), ad.as_tensor(s_n)
    if s_m.shape[-1] > k_max or s_n.shape[-1] > k_max:
        raise ValueError(
            f"sequence lengths {s_m.shape[-1]}, {s_n.shape[-1]} exceed k_max={k_max}; truncate first"
        )
    return ad.concat([ad.pad_to(s_m, k_max), ad.pad_to(s_n, k_max)], axis=-1)


def batch_v_loc(locs_m: np.ndarray, mask_m: np.ndarray, locs_n: np.ndarray, mask_n: np.ndarray,
                emb_loc: Tensor, k_max: int = 200) -> Tensor:
    """Location views for a batch of pairs given padded (B, L) id tables and masks."""
    # normalize each distinct location once, then gather
    uniq, inv = np.unique(np.concatenate([locs_m.ravel(), locs_n.ravel()]), return_inverse=True)
    unit = ad.l2_normalize(ad.embedding_lookup(emb_loc, uniq))
    em = ad.embedding_lookup(unit, inv[: locs_m.size].reshape(locs_m.shape))
    en = ad.embedding_lookup(unit, inv[locs_m.size :].reshape(locs_n.shape))
    sim = ad.matmul(em, _swap_last(en))  # (B, Lm, Ln)
    s_m = ad.max_over_axis(sim, mask=mask_n[:, None, :], axis=2) * mask_m
    s_n = ad.max_over_axis(sim, mask=mask_m[:, :, None], axis=1) * mask_n
    return v_loc(s_m, s_n, k_max)


def _swap_last(x: Tensor) -> Tensor:
    x = ad.as_tensor(x)
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return ad.transpose(x, tuple(axes))
