"""Vectorized building blocks for the execution simulator."""

from __future__ import annotations

import numpy as np


def fifo_departures(arrivals: np.ndarray, service) -> np.ndarray:
    """Departure times of a single FIFO server.

    Closed form of ``d[i] = max(a[i], d[i-1]) + s[i]``:
    ``d[i] = S[i] + max_{j<=i} (a[j] - S[j-1])`` with ``S`` the service prefix sum.
    """
    a = np.asarray(arrivals, dtype=np.float64)
    s = np.broadcast_to(np.asarray(service, dtype=np.float64), a.shape)
    if a.size == 0:
        return a.copy()
    csum = np.cumsum(s)
    return csum + np.maximum.accumulate(a - (csum - s))


def expand_ranges(starts: np.ndarray, counts: np.ndarray) -> np.ndarray:
    """Concatenation of ``arange(starts[j], starts[j] + counts[j])`` over j."""
    counts = np.asarray(counts, dtype=np.int64)
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.cumsum(counts) - counts
    return (np.arange(total, dtype=np.int64) - np.repeat(offsets, counts)
            + np.repeat(np.asarray(starts, dtype=np.int64), counts))


def previous_occurrence(codes: np.ndarray) -> np.ndarray:
    """Index of the previous element with the same code, -1 if none."""
    n = len(codes)
    prev = np.full(n, -1, dtype=np.int64)
    if n < 2:
        return prev
    order = np.argsort(codes, kind="stable")
    same = codes[order[1:]] == codes[order[:-1]]
    prev[order[1:][same]] = order[:-1][same]
    return prev


def first_occurrences(codes: np.ndarray, lo: np.ndarray, hi: np.ndarray
                      ) -> tuple[np.ndarray, np.ndarray]:
    """Enumerate ``(range k, index i)`` where i is the first index of its code in
    ``[lo[k], hi[k])``.

    ``lo`` and ``hi`` must be non-decreasing. Output sorted by (k, i); its
    length is the total number of distinct codes summed over ranges.
    """
    n = len(codes)
    idx = np.arange(n, dtype=np.int64)
    prev = previous_occurrence(codes)
    k_start = np.maximum(np.searchsorted(lo, prev, side="right"),
                         np.searchsorted(hi, idx, side="right"))
    k_end = np.searchsorted(lo, idx, side="right")
    cnt = np.maximum(k_end - k_start, 0)
    i_rep = np.repeat(idx, cnt)
    k_rep = expand_ranges(k_start, cnt)
    order = np.lexsort((i_rep, k_rep))
    return k_rep[order], i_rep[order]


class GroupIndex:
    """Tuples sorted by (code, position) for per-group range queries."""

    def __init__(self, codes: np.ndarray):
        self.codes = np.asarray(codes, dtype=np.int64)
        n = len(self.codes)
        self.n = n
        self.order = np.argsort(self.codes, kind="stable")
        self.rank = np.empty(n, dtype=np.int64)
        self.rank[self.order] = np.arange(n, dtype=np.int64)
        self.keys = self.codes[self.order] * (n + 1) + self.order

    def span(self, code: np.ndarray, lo: np.ndarray, hi: np.ndarray
             ) -> tuple[np.ndarray, np.ndarray]:
        """Sorted-order slice ``[start, end)`` holding positions in ``[lo, hi)`` with ``code``."""
        base = np.asarray(code, dtype=np.int64) * (self.n + 1)
        return (np.searchsorted(self.keys, base + lo, side="left"),
                np.searchsorted(self.keys, base + hi, side="left"))


def range_reduce(ufunc: np.ufunc, values: np.ndarray, starts: np.ndarray,
                 ends: np.ndarray) -> np.ndarray:
    """``ufunc.reduce(values[s:e])`` for each non-empty, possibly overlapping range."""
    if len(starts) == 0:
        return np.zeros(0, dtype=values.dtype)
    # reduceat also reduces the gaps [end_j, start_j+1); sorting by start keeps
    # those gaps disjoint so their total cost stays O(len(values))
    order = np.argsort(starts, kind="stable")
    ext = np.append(values, values[-1:])  # keeps every end index addressable
    flat = np.empty(2 * len(starts), dtype=np.int64)
    flat[0::2] = starts[order]
    flat[1::2] = ends[order]
    out = np.empty(len(starts), dtype=values.dtype)
    out[order] = ufunc.reduceat(ext, flat)[0::2]
    return out


def dense_codes(*arrays: np.ndarray) -> list[np.ndarray]:
    """Shared integer codes for values across arrays (equal values, equal codes)."""
    joined = np.concatenate(arrays) if arrays else np.zeros(0)
    _, inv = np.unique(joined, return_inverse=True)
    out, pos = [], 0
    for a in arrays:
        out.append(inv[pos:pos + len(a)].astype(np.int64))
        pos += len(a)
    return out
