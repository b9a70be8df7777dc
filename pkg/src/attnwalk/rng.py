"""Named, reproducible random streams.

All randomness in the package flows from a single top-level seed. Each
consumer asks for a stream under a scope such as ``("episode", 17, 3)``;
identical (seed, scope) pairs always yield the same generator, so batched,
sequential, and parallel execution orders produce identical draws.
"""

from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data: str | bytes) -> int:
    """FNV-1a 64-bit hash. Fixed, published, platform-independent."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def _scope_key(scope: tuple) -> tuple[int, ...]:
    key = []
    for part in scope:
        if isinstance(part, str):
            key.append(fnv1a64(part) & 0xFFFFFFFF)
        elif isinstance(part, (int, np.integer)):
            key.append(int(part) & 0xFFFFFFFF)
        else:
            raise TypeError(f"stream scope parts must be str or int, got {part!r}")
    return tuple(key)


def stream(seed: int, *scope: str | int) -> np.random.Generator:
    """Return the generator for a named substream of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_scope_key(scope))
    return np.random.Generator(np.random.PCG64(ss))
