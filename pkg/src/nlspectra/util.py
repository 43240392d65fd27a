"""Small shared helpers."""

import hashlib
import os
from concurrent.futures import ThreadPoolExecutor


def fingerprint(*parts):
    """Short stable identifier for a composition of components.

    Results computed from the same kernel/grid/domain/coupling/numerics
    carry equal fingerprints; report assembly rejects mixtures.
    """
    text = "|".join(str(p) for p in parts)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def thread_count(requested=None, env_var="NLSPECTRA_THREADS"):
    """Resolve a thread cap: explicit argument wins, then the env var, then 1."""
    if requested is not None and requested >= 1:
        return int(requested)
    env = os.environ.get(env_var)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def parallel_map(fn, items, threads=1):
    """Map preserving input order; uses a thread pool when threads > 1.

    Items are independent, so the result is identical for any thread count.
    """
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
