"""Labelled random streams.

Every random quantity is drawn from its own stream derived from a master seed
and a text label, so adding a draw in one place never shifts another and
results do not depend on execution order or thread count::

    stream(seed, label) = Generator(Philox(SeedSequence([seed mod 2**64, crc32(label)])))

Philox is counter-based, so streams are reproducible across platforms.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream", "child_seed"]

_MASK64 = (1 << 64) - 1


def _entropy(seed: int, label: str) -> list[int]:
    seed = int(seed) & _MASK64
    return [seed & 0xFFFFFFFF, seed >> 32, zlib.crc32(label.encode("utf-8"))]


def stream(seed: int, label: str) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(_entropy(seed, label))))


def child_seed(seed: int, label: str) -> int:
    """A derived 63-bit integer seed, for handing to code that takes ints."""
    ss = np.random.SeedSequence(_entropy(seed, label))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
