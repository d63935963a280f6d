"""Block-structured random streams.

Paths are cut into fixed blocks of ``BLOCK_PATHS``; each block draws from its
own Philox stream keyed by ``(seed, stream, block)``.  The draw for a given
path therefore never depends on how many workers fill the blocks.
"""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

BLOCK_PATHS = 1024

STREAM_BROWNIAN = 0
STREAM_DEFAULT_THRESHOLDS = 1

THREADS_ENV = "CCRBSDE_THREADS"


def worker_count(workers=None):
    if workers is not None:
        return max(1, int(workers))
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def _generator(seed, stream, block):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(ss))


def block_draws(seed, stream, n_paths, tail_shape, kind="normal", workers=None):
    """Fill an ``(n_paths, *tail_shape)`` array block by block."""
    tail_shape = tuple(int(s) for s in tail_shape)
    out = np.empty((n_paths,) + tail_shape)
    starts = list(range(0, n_paths, BLOCK_PATHS))

    def fill(start):
        block = start // BLOCK_PATHS
        stop = min(start + BLOCK_PATHS, n_paths)
        gen = _generator(seed, stream, block)
        size = (stop - start,) + tail_shape
        if kind == "normal":
            out[start:stop] = gen.standard_normal(size)
        elif kind == "exponential":
            out[start:stop] = gen.standard_exponential(size)
        else:
            raise ValueError(f"unknown draw kind {kind!r}")

    nw = worker_count(workers)
    if nw == 1 or len(starts) == 1:
        for s in starts:
            fill(s)
    else:
        with ThreadPoolExecutor(max_workers=nw) as pool:
            list(pool.map(fill, starts))
    return out
