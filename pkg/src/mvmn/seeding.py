"""Stage-local random generators derived from one run seed."""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{stage}:{int(seed)}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(seed: int, stage: str) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, stage))
