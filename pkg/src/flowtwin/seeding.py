"""Deterministic RNG stream derivation.

Every stochastic operation draws from a stream derived from the run's
master seed plus a path of string/int labels.  Streams are independent of
scheduling order and of ``PYTHONHASHSEED`` (labels are hashed with sha256,
never with the builtin ``hash``).
"""

from __future__ import annotations

import hashlib

import numpy as np


def _label_word(label) -> int:
    data = repr(label).encode("utf-8") if not isinstance(label, str) else label.encode("utf-8")
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "big")


def substream(seed: int, *labels) -> np.random.Generator:
    """Generator for (seed, *labels); identical labels give identical streams."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_label_word(lb) for lb in labels]
    return np.random.default_rng(np.random.SeedSequence(entropy))
