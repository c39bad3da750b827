"""Replica seeds and replica-level parallelism.

Sub-seed derivation (stable; changing it breaks reproducibility of old runs):

    sub_seed(master, i) = SeedSequence([master, i]).generate_state(1, uint64)[0] >> 1

i.e. numpy's SeedSequence hash of the pair, truncated to 63 bits.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor

import numpy as np


def sub_seed(master: int, index: int) -> int:
    state = np.random.SeedSequence([int(master), int(index)]).generate_state(1, np.uint64)[0]
    return int(state >> np.uint64(1))


def resolve_jobs(jobs=None) -> int:
    """Explicit value, else ``EPIFLUX_JOBS``, else 1."""
    if jobs is None:
        env = os.environ.get("EPIFLUX_JOBS", "").strip()
        jobs = int(env) if env else 1
    jobs = int(jobs)
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    return jobs


def replica_map(fn, args, jobs=None):
    """``[fn(a) for a in args]``, optionally in worker processes; order follows ``args``."""
    args = list(args)
    jobs = min(resolve_jobs(jobs), max(len(args), 1))
    if jobs == 1:
        return [fn(a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, args))
