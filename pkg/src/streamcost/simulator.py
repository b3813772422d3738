"""Deterministic execution simulator used as the ground-truth cost oracle.

Each operator is a single FIFO server on the machine of its instance size.
Sources emit at a fixed inter-arrival of ``1/rate``; every tuple carries its
event time and the generation time of the oldest input it depends on.
Windows hand complete firings to the downstream aggregation or join, which
pays the per-tuple service cost for every tuple in the firing. Latency of an
output is its sink arrival minus that oldest generation time; throughput is
the number of sink arrivals in ``[warmup, duration)`` per second.

Queues are evaluated in closed form over whole arrays (see
:func:`_kernels.fifo_departures`) instead of popping events one at a time,
which is equivalent for FIFO servers without backpressure.
"""

from __future__ import annotations

import logging
import math
import operator
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence

import numpy as np

from . import _kernels as K
from .query import (
    QuerySpec,
    StreamSpec,
    output_schemas,
    string_value,
    topological_order,
    validate,
)
from .workload import substream

log = logging.getLogger(__name__)

BYTES_PER_ATTRIBUTE = 8


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class CostProfile:
    """Service-time model; times in microseconds unless noted."""

    base_us: dict[str, float] = field(default_factory=lambda: {
        "source": 5.0, "filter": 10.0, "window": 15.0, "aggregation": 25.0, "join": 40.0})
    width_us: float = 2.0
    speed: dict[str, float] = field(default_factory=lambda: {
        "small": 1.0, "medium": 0.7, "large": 0.4})
    network_ms: float = 1.0
    network_us_per_byte: float = 0.01
    intra_us: float = 2.0
    # multiplies base and width costs; at 1.0 no operator of the generated
    # workloads ever saturates, so placement would barely matter
    scale: float = 5.0

    def __post_init__(self):
        costs = [*self.base_us.values(), self.width_us, self.scale, self.network_ms,
                 self.network_us_per_byte, self.intra_us, *self.speed.values()]
        if any(c < 0 for c in costs):
            raise SimulationError("cost profile values must be non-negative")
        s = self.speed
        if not s["small"] >= s["medium"] >= s["large"]:
            raise SimulationError("speed factors must not increase with instance size")

    def service_s(self, kind: str, width: float, placement: str) -> float:
        return ((self.base_us[kind] + self.width_us * width) * self.scale
                * self.speed[placement] * 1e-6)

    def transfer_s(self, producer: str, consumer: str, nbytes):
        nbytes = np.asarray(nbytes, dtype=np.float64)
        if producer == consumer:
            return np.full(nbytes.shape, self.intra_us * 1e-6)
        return self.network_ms * 1e-3 + self.network_us_per_byte * 1e-6 * nbytes

    def to_dict(self) -> dict[str, Any]:
        return {"base_us": dict(self.base_us), "width_us": self.width_us,
                "speed": dict(self.speed), "network_ms": self.network_ms,
                "network_us_per_byte": self.network_us_per_byte, "intra_us": self.intra_us,
                "scale": self.scale}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CostProfile":
        return cls(**d)


@dataclass(frozen=True)
class SimConfig:
    duration: float = 90.0
    warmup: float = 10.0
    seed: int = 13
    costs: CostProfile = field(default_factory=CostProfile)
    jitter: bool = False
    # join output beyond this many tuples is not materialized; the run is flagged
    max_tuples: int = 1_000_000

    def __post_init__(self):
        if not self.duration > self.warmup >= 0:
            raise SimulationError("need duration > warmup >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {"duration": self.duration, "warmup": self.warmup, "seed": self.seed,
                "costs": self.costs.to_dict(), "jitter": self.jitter,
                "max_tuples": self.max_tuples}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SimConfig":
        d = dict(d)
        if "costs" in d:
            d["costs"] = CostProfile.from_dict(d["costs"])
        return cls(**d)


@dataclass
class DataCharacteristics:
    selectivity: dict[int, Optional[float]] = field(default_factory=dict)
    widths: dict[int, tuple[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "selectivity": {str(k): v for k, v in sorted(self.selectivity.items())},
            "widths": {str(k): list(v) for k, v in sorted(self.widths.items())},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DataCharacteristics":
        return cls({int(k): v for k, v in d.get("selectivity", {}).items()},
                   {int(k): (float(v[0]), float(v[1])) for k, v in d.get("widths", {}).items()})


@dataclass
class ExecutionObservation:
    latency_ms: Optional[float]
    throughput: float
    output_count: int
    dcs: DataCharacteristics
    latency_median_ms: Optional[float] = None
    truncated: bool = False

    @property
    def produced_output(self) -> bool:
        return self.output_count > 0

    @property
    def usable(self) -> bool:
        """Has a defined cost label; other runs are left out of training."""
        return self.produced_output and not self.truncated

    def to_dict(self) -> dict[str, Any]:
        return {
            "latency_ms": self.latency_ms,
            "latency_median_ms": self.latency_median_ms,
            "throughput": self.throughput,
            "output_count": self.output_count,
            "produced_output": self.produced_output,
            "truncated": self.truncated,
            "dcs": self.dcs.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExecutionObservation":
        return cls(d["latency_ms"], float(d["throughput"]), int(d["output_count"]),
                   DataCharacteristics.from_dict(d["dcs"]), d.get("latency_median_ms"),
                   bool(d.get("truncated", False)))


# ---------------------------------------------------------------------------
# selectivity measurement


def measure_filter_selectivity(passed: int, arrived: int) -> Optional[float]:
    """passed / arrived; None when nothing arrived."""
    if arrived <= 0:
        return None
    return passed / arrived


def _mean_ratio(num, den) -> Optional[float]:
    num = np.asarray(num, dtype=np.float64)
    den = np.asarray(den, dtype=np.float64)
    keep = den > 0
    if not keep.any():
        return None
    ratios = num[keep] / den[keep]
    return math.fsum(ratios.tolist()) / int(keep.sum())


def measure_join_selectivity(samples: Sequence[tuple[int, int, int]]) -> Optional[float]:
    """Mean over firings of matches / (|W1| * |W2|); empty window pairs are skipped."""
    if len(samples) == 0:
        return None
    arr = np.asarray(samples, dtype=np.int64).reshape(-1, 3)
    return _mean_ratio(arr[:, 0], arr[:, 1] * arr[:, 2])


def measure_agg_selectivity(samples: Sequence[tuple[int, int]]) -> Optional[float]:
    """Mean over firings of distinct group keys / |W|; empty windows are skipped."""
    if len(samples) == 0:
        return None
    arr = np.asarray(samples, dtype=np.int64).reshape(-1, 2)
    return _mean_ratio(arr[:, 0], arr[:, 1])


# ---------------------------------------------------------------------------
# internal stream representations


@dataclass
class _Stream:
    t: np.ndarray        # departure from the producing operator
    ts: np.ndarray       # event time
    origin: np.ndarray   # generation time of the oldest contributing input
    vals: np.ndarray     # (n, width)

    @property
    def width(self) -> int:
        return self.vals.shape[1]

    def take(self, idx) -> "_Stream":
        return _Stream(self.t[idx], self.ts[idx], self.origin[idx], self.vals[idx])


@dataclass
class _Firings:
    base: _Stream        # processed window input; firings index into it
    lo: np.ndarray
    hi: np.ndarray
    t: np.ndarray        # completion time of the firing tuple at the window
    ts: np.ndarray       # event time of the firing

    @property
    def sizes(self) -> np.ndarray:
        return self.hi - self.lo


def _draw_values(rng: np.random.Generator, stream: StreamSpec, n: int) -> np.ndarray:
    cols = []
    for a in stream.attributes:
        if a.type == "int":
            cols.append(rng.integers(0, int(a.domain) + 1, size=n).astype(np.float64))
        elif a.type == "double":
            cols.append(np.round(rng.uniform(0.0, float(a.domain), size=n), 1))
        else:
            cols.append(rng.integers(0, int(a.domain), size=n).astype(np.float64))
    return np.column_stack(cols) if cols else np.zeros((n, 0))


_COMPARE = {"<": operator.lt, ">": operator.gt, "<=": operator.le, ">=": operator.ge,
            "!=": operator.ne}


def filter_predicate(function: str, value, literal) -> bool:
    """Scalar reference semantics of a filter predicate."""
    if function == "startswith":
        return str(value).startswith(str(literal))
    if function == "endswith":
        return str(value).endswith(str(literal))
    return _COMPARE[function](value, literal)


def _filter_mask(params, column: np.ndarray, attr_type: str) -> np.ndarray:
    if attr_type == "string":
        codes = column.astype(np.int64)
        top = int(codes.max()) + 1 if codes.size else 1
        table = np.array([filter_predicate(params.function, string_value(c), params.literal)
                          for c in range(top)], dtype=bool)
        return table[codes]
    return _COMPARE[params.function](column, float(params.literal))


def _window_ranges(params, ts: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(lo, hi, firing tuple index, event time) for every window that fires.

    Count windows fire on the tuple completing them; time windows fire on the
    first tuple whose event time reaches the window end. Empty windows never fire.
    """
    n = len(ts)
    slide = params.size if params.type == "tumbling" else params.slide
    if params.policy == "count":
        w, s = int(params.size), int(slide)
        k = (n - w) // s + 1 if n >= w else 0
        lo = np.arange(k, dtype=np.int64) * s
        hi = lo + w
        fire = hi - 1
        return lo, hi, fire, ts[fire] if k else np.zeros(0)
    if n == 0:
        z = np.zeros(0, dtype=np.int64)
        return z, z, z, np.zeros(0)
    size, s = float(params.size), float(slide)
    k = int(np.floor(ts[-1] / s)) + 1
    starts = np.arange(k, dtype=np.float64) * s
    ends = starts + size
    lo = np.searchsorted(ts, starts, side="left")
    hi = np.searchsorted(ts, ends, side="left")
    keep = (hi < n) & (hi > lo)
    return lo[keep], hi[keep], hi[keep], ends[keep]


# ---------------------------------------------------------------------------
# simulation


def _key_blocks(trig, key_a, ga, lo_a, hi_a, gb, lo_b, hi_b):
    """Per (trigger, distinct key of side a) the sorted-order spans of matching
    tuples on both sides: ``(trigger, a_start, a_count, b_start, b_count)``."""
    k, i = K.first_occurrences(key_a, lo_a[trig], hi_a[trig])
    t = trig[k]
    a_start = ga.rank[i]
    _, a_end = ga.span(key_a[i], lo_a[t], hi_a[t])
    b_start, b_end = gb.span(key_a[i], lo_b[t], hi_b[t])
    return t, a_start, a_end - a_start, b_start, b_end - b_start


class _Run:
    def __init__(self, query: QuerySpec, config: SimConfig, record: bool):
        self.q = query
        self.cfg = config
        self.costs = config.costs
        self.record = record
        self.trace: dict[int, dict[str, Any]] = {}
        self.sel: dict[int, Optional[float]] = {}
        self.widths: dict[int, tuple[float, float]] = {}
        self.truncated = False
        self.schemas = output_schemas(query)
        # placement-free, so hardware sweeps see identical data
        self.fingerprint = query.with_placements(
            {n.id: "small" for n in query.graph.nodes}).to_json()

    def arrivals(self, producer: int, consumer: int, t: np.ndarray, nbytes) -> np.ndarray:
        """Arrival times over an in-order link between two operators."""
        g = self.q.graph
        delay = self.costs.transfer_s(g.node(producer).placement, g.node(consumer).placement,
                                      nbytes)
        return np.maximum.accumulate(t + delay) if len(t) else t.astype(np.float64)

    def service(self, node_id: int, width: float) -> float:
        node = self.q.graph.node(node_id)
        return self.costs.service_s(node.kind, width, node.placement)

    # -- operators ---------------------------------------------------------

    def source(self, nid: int) -> _Stream:
        stream = self.q.streams[nid]
        D = self.cfg.duration
        if self.cfg.jitter:
            rng = substream(self.cfg.seed, "arrivals", self.fingerprint, nid)
            n_max = int(math.ceil(D * stream.event_rate * 1.5)) + 16
            gen = np.cumsum(rng.exponential(1.0 / stream.event_rate, size=n_max)) - 0.0
            gen = gen[gen < D]
        else:
            n = int(math.ceil(D * stream.event_rate))
            gen = np.arange(n, dtype=np.float64) / stream.event_rate
            gen = gen[gen < D]
        rng = substream(self.cfg.seed, "values", self.fingerprint, nid)
        vals = _draw_values(rng, stream, len(gen))
        d = K.fifo_departures(gen, self.service(nid, stream.tuple_width))
        n_ok = int(np.searchsorted(d, D, side="left"))
        w = stream.tuple_width
        self.widths[nid] = (float(w), float(w))
        return _Stream(d[:n_ok], gen[:n_ok], gen[:n_ok].copy(), vals[:n_ok])

    def filter(self, nid: int, src: int, inp: _Stream) -> _Stream:
        params = self.q.graph.node(nid).params
        w = inp.width
        a = self.arrivals(src, nid, inp.t, w * BYTES_PER_ATTRIBUTE)
        d = K.fifo_departures(a, self.service(nid, w))
        n_ok = int(np.searchsorted(d, self.cfg.duration, side="left"))
        column = inp.vals[:n_ok, params.attribute]
        attr_type = self.schemas[src][params.attribute].type
        mask = _filter_mask(params, column, attr_type)
        self.sel[nid] = measure_filter_selectivity(int(mask.sum()), n_ok)
        self.widths[nid] = (float(w), float(w))
        if self.record:
            self.trace[nid] = {"kind": "filter", "values": column.tolist(), "type": attr_type,
                               "passed": int(mask.sum())}
        out = inp.take(np.flatnonzero(mask))
        out.t = d[:n_ok][mask]
        return out

    def window(self, nid: int, src: int, inp: _Stream) -> _Firings:
        params = self.q.graph.node(nid).params
        w = inp.width
        a = self.arrivals(src, nid, inp.t, w * BYTES_PER_ATTRIBUTE)
        d = K.fifo_departures(a, self.service(nid, w))
        n_ok = int(np.searchsorted(d, self.cfg.duration, side="left"))
        base = inp.take(slice(0, n_ok))
        base.t = d[:n_ok]
        lo, hi, fire, ev = _window_ranges(params, base.ts)
        self.widths[nid] = (float(w), float(w))
        if self.record:
            self.trace[nid] = {"kind": "window", "n": n_ok, "lo": lo.tolist(), "hi": hi.tolist()}
        return _Firings(base, lo, hi, base.t[fire] if len(fire) else np.zeros(0), ev)

    def aggregation(self, nid: int, src: int, fir: _Firings) -> _Stream:
        p = self.q.graph.node(nid).params
        base = fir.base
        w = base.width
        sizes = fir.sizes
        a = self.arrivals(src, nid, fir.t, sizes * w * BYTES_PER_ATTRIBUTE)
        d = K.fifo_departures(a, sizes * self.service(nid, w))
        n_ok = int(np.searchsorted(d, self.cfg.duration, side="left"))
        lo, hi = fir.lo[:n_ok], fir.hi[:n_ok]
        out_width = 1 if p.group_by_type == "none" else 2
        self.widths[nid] = (float(w), float(out_width))

        if p.group_by_type == "none":
            codes = np.zeros(len(base.ts), dtype=np.int64)
        else:
            codes = K.dense_codes(base.vals[:, p.group_by_attribute])[0]
        k, i = K.first_occurrences(codes, lo, hi)
        distinct = np.bincount(k, minlength=n_ok)
        self.sel[nid] = measure_agg_selectivity(np.column_stack([distinct, hi - lo]))
        if self.record:
            gb = None if p.group_by_type == "none" else p.group_by_attribute
            self.trace[nid] = {
                "kind": "aggregation",
                "windows": [base.vals[l:h, gb].tolist() if gb is not None else int(h - l)
                            for l, h in zip(lo.tolist(), hi.tolist())],
            }

        gi = K.GroupIndex(codes)
        start = gi.rank[i]
        _, end = gi.span(codes[i], lo[k], hi[k])
        sorted_vals = base.vals[gi.order, p.agg_attribute]
        if p.function == "min":
            agg = K.range_reduce(np.minimum, sorted_vals, start, end)
        elif p.function == "max":
            agg = K.range_reduce(np.maximum, sorted_vals, start, end)
        else:
            agg = K.range_reduce(np.add, sorted_vals, start, end) / (end - start)
        origin = K.range_reduce(np.minimum, base.origin[gi.order], start, end)
        if p.group_by_type == "none":
            vals = agg[:, None]
        else:
            vals = np.column_stack([base.vals[i, p.group_by_attribute], agg])
        return _Stream(d[:n_ok][k], fir.ts[:n_ok][k], origin, vals)

    def join(self, nid: int, srcs: list[int], left: _Firings, right: _Firings) -> _Stream:
        p = self.q.graph.node(nid).params
        wl, wr = left.base.width, right.base.width
        al = self.arrivals(srcs[0], nid, left.t, left.sizes * wl * BYTES_PER_ATTRIBUTE)
        ar = self.arrivals(srcs[1], nid, right.t, right.sizes * wr * BYTES_PER_ATTRIBUTE)
        pl, pr = left.sizes * self.service(nid, wl), right.sizes * self.service(nid, wr)
        nl, nr = len(al), len(ar)
        side = np.concatenate([np.zeros(nl, dtype=np.int64), np.ones(nr, dtype=np.int64)])
        pos = np.concatenate([np.arange(nl), np.arange(nr)])
        arr = np.concatenate([al, ar])
        fifo = np.lexsort((side, arr))
        d = np.empty(nl + nr)
        d[fifo] = K.fifo_departures(arr[fifo], np.concatenate([pl, pr])[fifo])
        done = d < self.cfg.duration
        dl, dr = d[:nl], d[nl:]

        # firings meet in event-time order, independent of processing speed:
        # each firing pairs with the most recent processed firing of the other side
        ev_all = np.concatenate([left.ts, right.ts])
        order = np.lexsort((pos, side, ev_all))
        order = order[done[order]]
        side, pos = side[order], pos[order]
        n_ok = len(order)
        last_l = np.maximum.accumulate(np.where(side == 0, pos, -1)) if n_ok else pos
        last_r = np.maximum.accumulate(np.where(side == 1, pos, -1)) if n_ok else pos
        prev_l = np.concatenate([[-1], last_l[:-1]]) if n_ok else last_l
        prev_r = np.concatenate([[-1], last_r[:-1]]) if n_ok else last_r
        li = np.where(side == 0, pos, prev_l)
        ri = np.where(side == 1, pos, prev_r)
        trig = np.flatnonzero((li >= 0) & (ri >= 0))
        li, ri = li[trig], ri[trig]
        d = np.maximum(dl[li], dr[ri])
        ev = np.maximum.accumulate(np.maximum(left.ts[li], right.ts[ri])) if len(trig) else d

        n_in_l = int(left.sizes[done[:nl]].sum())
        n_in_r = int(right.sizes[done[nl:]].sum())
        w_in = (wl * n_in_l + wr * n_in_r) / (n_in_l + n_in_r) if n_in_l + n_in_r else (wl + wr) / 2
        self.widths[nid] = (float(w_in), float(wl + wr))

        lo_l, hi_l = left.lo[li], left.hi[li]
        lo_r, hi_r = right.lo[ri], right.hi[ri]
        key_l, key_r = K.dense_codes(left.base.vals[:, p.left_key], right.base.vals[:, p.right_key])
        gl, gr = K.GroupIndex(key_l), K.GroupIndex(key_r)
        # distinct keys are enumerated on the smaller window of each trigger
        by_left = (hi_l - lo_l) <= (hi_r - lo_r)
        t_a, ls_a, cl_a, rs_a, cr_a = _key_blocks(np.flatnonzero(by_left), key_l, gl,
                                                  lo_l, hi_l, gr, lo_r, hi_r)
        t_b, rs_b, cr_b, ls_b, cl_b = _key_blocks(np.flatnonzero(~by_left), key_r, gr,
                                                  lo_r, hi_r, gl, lo_l, hi_l)
        t_idx = np.concatenate([t_a, t_b])
        o = np.argsort(t_idx, kind="stable")
        t_idx = t_idx[o]
        ls, rs = np.concatenate([ls_a, ls_b])[o], np.concatenate([rs_a, rs_b])[o]
        cnt_l, cnt_r = np.concatenate([cl_a, cl_b])[o], np.concatenate([cr_a, cr_b])[o]
        block = cnt_l * cnt_r
        matches = np.bincount(t_idx, weights=block, minlength=len(trig)).astype(np.int64)
        self.sel[nid] = measure_join_selectivity(
            np.column_stack([matches, hi_l - lo_l, hi_r - lo_r]))
        if self.record:
            self.trace[nid] = {
                "kind": "join",
                "triggers": [(left.base.vals[a:b, p.left_key].tolist(),
                              right.base.vals[c:e, p.right_key].tolist())
                             for a, b, c, e in zip(lo_l.tolist(), hi_l.tolist(),
                                                   lo_r.tolist(), hi_r.tolist())],
            }

        # materialize matching pairs block by block, capped
        keep = block > 0
        t_idx, ls, rs, cnt_r, block = t_idx[keep], ls[keep], rs[keep], cnt_r[keep], block[keep]
        total = int(block.sum())
        if total > self.cfg.max_tuples:
            self.truncated = True
            csum = np.cumsum(block)
            n_blocks = int(np.searchsorted(csum, self.cfg.max_tuples, side="left")) + 1
            t_idx, ls, rs, cnt_r = t_idx[:n_blocks], ls[:n_blocks], rs[:n_blocks], cnt_r[:n_blocks]
            block = block[:n_blocks].copy()
            block[-1] -= int(csum[n_blocks - 1]) - self.cfg.max_tuples
            log.debug("join %d truncated at %d outputs", nid, self.cfg.max_tuples)
        m = K.expand_ranges(np.zeros(len(block), dtype=np.int64), block)
        b_rep = np.repeat(np.arange(len(block)), block)
        lpos = gl.order[ls[b_rep] + m // cnt_r[b_rep]]
        rpos = gr.order[rs[b_rep] + m % cnt_r[b_rep]]
        t_out = t_idx[b_rep]
        o = np.lexsort((rpos, lpos, t_out))  # nested-loop order within a trigger
        lpos, rpos, t_out = lpos[o], rpos[o], t_out[o]
        origin = np.minimum(left.base.origin[lpos], right.base.origin[rpos])
        vals = np.hstack([left.base.vals[lpos], right.base.vals[rpos]])
        return _Stream(d[t_out], ev[t_out], origin, vals)

    def sink(self, nid: int, src: int, inp: _Stream) -> ExecutionObservation:
        a = self.arrivals(src, nid, inp.t, inp.width * BYTES_PER_ATTRIBUTE)
        cfg = self.cfg
        m = (a >= cfg.warmup) & (a < cfg.duration)
        lat = (a[m] - inp.origin[m]) * 1e3
        count = int(m.sum())
        self.widths[nid] = (float(inp.width), float(inp.width))
        dcs = DataCharacteristics(dict(self.sel), dict(self.widths))
        if count == 0:
            return ExecutionObservation(None, 0.0, 0, dcs, None, self.truncated)
        return ExecutionObservation(
            latency_ms=float(math.fsum(lat.tolist()) / count),
            throughput=count / (cfg.duration - cfg.warmup),
            output_count=count,
            dcs=dcs,
            latency_median_ms=float(np.median(lat)),
            truncated=self.truncated,
        )

    def run(self) -> ExecutionObservation:
        g = self.q.graph
        results: dict[int, Any] = {}
        obs = None
        for nid in topological_order(g):
            kind = g.node(nid).kind
            ins = g.inputs(nid)
            if kind == "source":
                results[nid] = self.source(nid)
            elif kind == "join":
                results[nid] = self.join(nid, ins, results[ins[0]], results[ins[1]])
            elif kind == "sink":
                obs = self.sink(nid, ins[0], results[ins[0]])
            else:
                results[nid] = getattr(self, kind)(nid, ins[0], results[ins[0]])
        for nid in g.kind_ids("filter") + g.kind_ids("join") + g.kind_ids("aggregation"):
            obs.dcs.selectivity.setdefault(nid, None)
        return obs


def simulate(query: QuerySpec, config: Optional[SimConfig] = None) -> ExecutionObservation:
    """Run ``query`` and return its ground-truth costs and data characteristics."""
    return simulate_traced(query, config, record=False)[0]


def simulate_traced(query: QuerySpec, config: Optional[SimConfig] = None,
                    record: bool = True) -> tuple[ExecutionObservation, dict[int, dict]]:
    """Like :func:`simulate`, also returning per-operator logs of the tuples that
    selectivities were measured on (meant for small runs)."""
    config = config or SimConfig()
    report = validate(query)
    if not report.ok:
        raise SimulationError(f"invalid query: {report}")
    run = _Run(query, config, record)
    obs = run.run()
    return obs, run.trace


def _simulate_one(args):
    query, config = args
    return simulate(query, config)


def simulate_many(queries: Sequence[QuerySpec], config: Optional[SimConfig] = None,
                  jobs: int = 1) -> list[ExecutionObservation]:
    """Simulate queries in order, with up to ``jobs`` worker processes."""
    config = config or SimConfig()
    if jobs <= 1 or len(queries) < 2:
        return [simulate(q, config) for q in queries]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_simulate_one, [(q, config) for q in queries], chunksize=8))
