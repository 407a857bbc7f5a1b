"""Deterministic seed derivation for parallel-safe RNG streams.

Splitting rule: a child seed is the first 8 bytes of
sha256(repr((master, labels...))). Workers derive independent streams from
the master seed plus a stable label path, so parallel generation stays
reproducible regardless of scheduling.
"""

from __future__ import annotations

import hashlib
import random


def derive_seed(master: int, *labels: object) -> int:
    digest = hashlib.sha256(repr((master, labels)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def derive_rng(master: int, *labels: object) -> random.Random:
    return random.Random(derive_seed(master, *labels))
