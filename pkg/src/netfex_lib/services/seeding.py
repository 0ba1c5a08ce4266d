"""Named, order-independent random streams derived from one root seed."""

from __future__ import annotations

import numpy as np
import zlib


def seed_sequence(root: int, stream: str, *keys: int) -> np.random.SeedSequence:
    """Spawn key for ``stream`` (e.g. ``"controller"``) at the integer coordinates ``keys``.

    The same ``(root, stream, keys)`` always yields the same sequence, independent of how
    many other streams were drawn before it.
    """
    return np.random.SeedSequence([int(root) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(stream.encode()), *map(int, keys)])


def rng_for(root: int, stream: str, *keys: int) -> np.random.Generator:
    return np.random.default_rng(seed_sequence(root, stream, *keys))


def int_seed(root: int, stream: str, *keys: int) -> int:
    """63-bit integer seed for libraries that take a plain integer (``torch.manual_seed``)."""
    return int(seed_sequence(root, stream, *keys).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
