import numpy as np
from hypothesis import given, settings, strategies as st

from streamcost import _kernels as K

floats = st.floats(0.0, 10.0, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(floats, st.floats(0.0, 2.0)), min_size=0, max_size=40))
def test_fifo_matches_event_loop(jobs):
    gaps = np.array([g for g, _ in jobs])
    arrivals = np.cumsum(gaps)
    service = np.array([s for _, s in jobs])
    expected, free = [], 0.0
    for a, s in zip(arrivals, service):
        free = max(a, free) + s
        expected.append(free)
    np.testing.assert_allclose(K.fifo_departures(arrivals, service), expected, rtol=1e-12,
                               atol=1e-9)


def test_fifo_scalar_service():
    np.testing.assert_allclose(K.fifo_departures([0.0, 0.0, 5.0], 1.0), [1.0, 2.0, 6.0])


@given(st.lists(st.tuples(st.integers(-5, 5), st.integers(0, 4)), max_size=20))
def test_expand_ranges(pairs):
    starts = np.array([s for s, _ in pairs], dtype=np.int64)
    counts = np.array([c for _, c in pairs], dtype=np.int64)
    expected = [v for s, c in pairs for v in range(s, s + c)]
    assert K.expand_ranges(starts, counts).tolist() == expected


def _ranges(draw_lo, draw_len, n):
    lo = np.sort(np.array(draw_lo, dtype=np.int64) % (n + 1))
    hi = np.minimum(lo + np.array(draw_len, dtype=np.int64), n)
    return lo, np.maximum.accumulate(hi)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 4), min_size=1, max_size=30),
       st.lists(st.tuples(st.integers(0, 40), st.integers(0, 8)), max_size=10))
def test_first_occurrences_matches_brute_force(codes, spans):
    codes = np.array(codes, dtype=np.int64)
    lo, hi = _ranges([a for a, _ in spans], [b for _, b in spans], len(codes))
    expected = []
    for k, (a, b) in enumerate(zip(lo, hi)):
        seen = set()
        for i in range(a, b):
            if codes[i] not in seen:
                seen.add(codes[i])
                expected.append((k, i))
    ks, idx = K.first_occurrences(codes, lo, hi)
    assert list(zip(ks.tolist(), idx.tolist())) == expected


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3), min_size=1, max_size=30), st.data())
def test_group_span_and_range_reduce(codes, data):
    codes = np.array(codes, dtype=np.int64)
    n = len(codes)
    values = np.arange(n, dtype=np.float64) * 1.5 - 7.0
    gi = K.GroupIndex(codes)
    q = data.draw(st.lists(st.tuples(st.integers(0, 3), st.integers(0, n), st.integers(0, n)),
                           min_size=1, max_size=8))
    code = np.array([c for c, _, _ in q])
    lo = np.array([min(a, b) for _, a, b in q])
    hi = np.array([max(a, b) for _, a, b in q])
    start, end = gi.span(code, lo, hi)
    for j in range(len(q)):
        members = sorted(gi.order[start[j]:end[j]].tolist())
        assert members == [i for i in range(lo[j], hi[j]) if codes[i] == code[j]]
    sorted_vals = values[gi.order]
    nonempty = end > start
    got = K.range_reduce(np.minimum, sorted_vals, start[nonempty], end[nonempty])
    expected = [sorted_vals[a:b].min() for a, b in zip(start[nonempty], end[nonempty])]
    assert got.tolist() == expected
    got = K.range_reduce(np.add, sorted_vals, start[nonempty], end[nonempty])
    np.testing.assert_allclose(got, [sorted_vals[a:b].sum()
                                     for a, b in zip(start[nonempty], end[nonempty])])


def test_dense_codes_share_values():
    a, b = K.dense_codes(np.array([5, 1, 5]), np.array([1, 9]))
    assert a[0] == a[2] and a[1] == b[0] and b[1] not in a


def test_previous_occurrence():
    assert K.previous_occurrence(np.array([3, 1, 3, 3, 1])).tolist() == [-1, -1, 0, 2, 1]
