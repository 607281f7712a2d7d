"""Deterministic per-index random substreams.

Every Monte Carlo unit (a sampled path, a simulated replication) draws from
its own Philox stream.  The Philox key holds the user seed and a domain tag,
the high counter words hold the unit index, so stream ``i`` is the same no
matter how indices are partitioned across workers.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

MASK64 = (1 << 64) - 1

# domain tags keep unrelated consumers of the same seed apart
BRIDGE = 1
WIENER = 2
DATA = 3

T = TypeVar("T")


def substream(seed: int, index: int, domain: int = 0) -> np.random.Generator:
    """Generator for unit ``index`` under ``seed``.

    The index lives in counter word 2, so a unit may consume up to 2**128
    Philox blocks before touching its neighbour's stream.
    """
    if index < 0:
        raise ValueError("substream index must be non-negative")
    key = (int(seed) & MASK64) | ((int(domain) & MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key, counter=int(index) << 128))


def chunk_ranges(n: int, n_chunks: int) -> list[tuple[int, int]]:
    """Split ``range(n)`` into at most ``n_chunks`` contiguous pieces."""
    n_chunks = max(1, min(n_chunks, n)) if n > 0 else 1
    bounds = np.linspace(0, n, n_chunks + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def map_ranges(
    func: Callable[[int, int], T], n: int, workers: int = 1, chunk: int | None = None
) -> list[T]:
    """Apply ``func(start, stop)`` over contiguous index ranges covering ``range(n)``.

    Results come back in index order.  ``func`` must be picklable when
    ``workers > 1``.
    """
    if chunk is None:
        ranges = chunk_ranges(n, max(1, workers))
    else:
        ranges = [(a, min(a + chunk, n)) for a in range(0, n, chunk)]
    if workers <= 1 or len(ranges) <= 1:
        return [func(a, b) for a, b in ranges]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(func, a, b) for a, b in ranges]
        return [f.result() for f in futures]


def concat(parts: Sequence[np.ndarray]) -> np.ndarray:
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)
