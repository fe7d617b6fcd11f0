"""Hot concordance-counting kernels.

Two independent routes count the same pair statistics:

  * pair_counts  - the normative O(n^2) scan over all comparable pairs
  * sweep_counts - an O(n log n) descending-time sweep over a Fenwick tree
                   of score ranks

Both take score *ranks* (dense integers from np.unique) so equality is exact,
and both return integer counts, so the numba and fallback builds of either
route are bit-identical.

Numba compilation is skipped when the environment variable RESSURV_NO_NUMBA
is set to 1/true/yes (or when numba is not importable); the pure
numpy/Python fallbacks are selected instead. `backend()` reports which path
is live; benchmarks/bench_concordance.py compares the two.
"""

from __future__ import annotations

import os

import numpy as np

_flag = os.environ.get("RESSURV_NO_NUMBA", "").strip().lower()
NUMBA_DISABLED = _flag in {"1", "true", "yes"}

HAS_NUMBA = False
if not NUMBA_DISABLED:
    try:
        from numba import njit

        HAS_NUMBA = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass


# ---------------------------------------------------------------------------
# O(n^2) pairwise scan (normative definition)
# ---------------------------------------------------------------------------

def _pair_counts_py(times, events, ranks):
    """Chunked-broadcast numpy version of the pairwise scan."""
    n = times.shape[0]
    conc = disc = tied = 0
    ev_idx = np.flatnonzero(events)
    if ev_idx.size == 0:
        return 0, 0, 0
    chunk = max(1, 4_000_000 // max(n, 1))
    for start in range(0, ev_idx.size, chunk):
        ii = ev_idx[start : start + chunk]
        later = times[None, :] > times[ii, None]
        ri = ranks[ii, None]
        rj = ranks[None, :]
        conc += int(np.count_nonzero(later & (ri > rj)))
        disc += int(np.count_nonzero(later & (ri < rj)))
        tied += int(np.count_nonzero(later & (ri == rj)))
    return conc, disc, tied


def _pair_counts_loop(times, events, ranks):
    n = times.shape[0]
    conc = np.int64(0)
    disc = np.int64(0)
    tied = np.int64(0)
    for i in range(n):
        if not events[i]:
            continue
        ti = times[i]
        ri = ranks[i]
        for j in range(n):
            if times[j] > ti:
                rj = ranks[j]
                if ri > rj:
                    conc += 1
                elif ri < rj:
                    disc += 1
                else:
                    tied += 1
    return int(conc), int(disc), int(tied)


# ---------------------------------------------------------------------------
# O(n log n) sweep: descending time, Fenwick tree over score ranks
# ---------------------------------------------------------------------------

def _sweep_counts_loop(times_desc, events_desc, ranks_desc, n_ranks):
    """Walk tie groups of equal time from the latest time down. Samples
    already inserted in the tree have strictly later times, so each event in
    the current group is compared against exactly its comparable pairs."""
    n = times_desc.shape[0]
    tree = np.zeros(n_ranks + 1, dtype=np.int64)
    conc = np.int64(0)
    disc = np.int64(0)
    tied = np.int64(0)
    inserted = np.int64(0)

    start = 0
    while start < n:
        end = start
        while end < n and times_desc[end] == times_desc[start]:
            end += 1
        for i in range(start, end):
            if events_desc[i]:
                r = ranks_desc[i]
                # counts among inserted (later-time) samples with rank <= r
                upto = np.int64(0)
                k = r + 1
                while k > 0:
                    upto += tree[k]
                    k -= k & (-k)
                below = np.int64(0)
                k = r
                while k > 0:
                    below += tree[k]
                    k -= k & (-k)
                conc += below
                tied += upto - below
                disc += inserted - upto
        for i in range(start, end):
            k = ranks_desc[i] + 1
            while k <= n_ranks:
                tree[k] += 1
                k += k & (-k)
            inserted += 1
        start = end
    return int(conc), int(disc), int(tied)


if HAS_NUMBA:
    _pair_counts_numba = njit(
        "UniTuple(int64, 3)(float64[::1], boolean[::1], int64[::1])",
        cache=True,
        nogil=True,
    )(_pair_counts_loop)
    _sweep_counts_numba = njit(
        "UniTuple(int64, 3)(float64[::1], boolean[::1], int64[::1], int64)",
        cache=True,
        nogil=True,
    )(_sweep_counts_loop)
    pair_counts = _pair_counts_numba
    sweep_counts = _sweep_counts_numba
else:
    pair_counts = _pair_counts_py
    sweep_counts = _sweep_counts_loop


def backend() -> str:
    """Which kernel build is live: 'numba' or 'numpy'."""
    return "numba" if HAS_NUMBA else "numpy"
