"""Counter-based random streams.

Every stochastic quantity is drawn from a Philox stream keyed by
``(seed, *indices)``.  Long sequences are generated in fixed-size blocks whose
block number is written into the high counter word, so the numbers for block
``k`` do not depend on how many blocks were generated before it or on which
worker generated them.
"""

from __future__ import annotations

import numpy as np

BLOCK = 1 << 16


def _key(seed: int, indices: tuple[int, ...]) -> int:
    state = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, indices)])
    lo, hi = state.generate_state(2, dtype=np.uint64)
    return int(lo) | (int(hi) << 64)


def stream(seed: int, *indices: int, block: int = 0) -> np.random.Generator:
    """Generator for block ``block`` of the stream keyed by ``(seed, *indices)``."""
    bitgen = np.random.Philox(key=_key(seed, indices), counter=[0, 0, 0, int(block)])
    return np.random.Generator(bitgen)


def standard_normal(seed: int, indices: tuple[int, ...], shape: tuple[int, ...], start: int = 0) -> np.ndarray:
    """Rows ``start .. start + shape[0]`` of the standard-normal stream for a key.

    Row ``i`` of the stream is always the same number(s) for a fixed key,
    regardless of how many rows are requested or where the request starts.
    """
    n = shape[0]
    tail = tuple(shape[1:])
    out = np.empty((n, *tail))
    pos = 0
    while pos < n:
        row = start + pos
        b, off = divmod(row, BLOCK)
        take = min(BLOCK - off, n - pos)
        full = stream(seed, *indices, block=b).standard_normal((BLOCK, *tail))
        out[pos:pos + take] = full[off:off + take]
        pos += take
    return out
