"""Deterministic random workload generation.

Every query is drawn from its own PCG64 substream keyed by
``(seed, structure label, index)``, so datasets are reproducible and adding a
structure never shifts the draws of another one.
"""

from __future__ import annotations

import re
import zlib
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .query import (
    AGG_FUNCTIONS,
    AGG_TYPES,
    DATA_TYPES,
    FILTER_FUNCTIONS,
    GROUP_BY_TYPES,
    INSTANCE_LABELS,
    STRING_FUNCTIONS,
    STRING_LENGTH,
    TRAINING_STRUCTURES,
    WINDOW_POLICIES,
    WINDOW_TYPES,
    AggregationParams,
    Attribute,
    FilterParams,
    GraphBuilder,
    JoinParams,
    QuerySpec,
    StreamSpec,
    WindowParams,
    string_value,
)

FILTER_PROBABILITY = 0.5
MAX_SCHEMA_DRAWS = 64

EXTRAPOLATION_DIMENSIONS = ("tuple-width", "event-rate", "time-window", "count-window")


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class ParamSpace:
    event_rates: tuple[float, ...] = (250.0, 500.0, 750.0, 1000.0, 1500.0, 2500.0)
    tuple_widths: tuple[int, ...] = (1, 2, 3, 4, 5)
    value_types: tuple[str, ...] = DATA_TYPES
    filter_functions: tuple[str, ...] = FILTER_FUNCTIONS
    window_types: tuple[str, ...] = WINDOW_TYPES
    window_policies: tuple[str, ...] = WINDOW_POLICIES
    time_window_sizes: tuple[float, ...] = (0.25, 0.5, 1.0, 2.0, 3.0)
    count_window_sizes: tuple[int, ...] = (3, 5, 10, 25, 50, 75, 100)
    slide_fractions: tuple[float, ...] = (0.3, 0.4, 0.5, 0.6, 0.7)
    agg_functions: tuple[str, ...] = AGG_FUNCTIONS
    agg_types: tuple[str, ...] = AGG_TYPES
    group_by_types: tuple[str, ...] = GROUP_BY_TYPES
    join_key_types: tuple[str, ...] = DATA_TYPES
    instance_labels: tuple[str, ...] = INSTANCE_LABELS
    string_domains: tuple[int, ...] = (10, 100, 1000)
    numeric_exponents: tuple[int, ...] = (2, 3, 4)


@dataclass(frozen=True)
class GenerationConfig:
    seed: int = 7
    counts: dict[str, int] = field(
        default_factory=lambda: {s: 1000 for s in TRAINING_STRUCTURES})
    space: ParamSpace = field(default_factory=ParamSpace)

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()):
            raise WorkloadError("structure counts must be non-negative")


# ---------------------------------------------------------------------------
# structure labels

_CHAIN_RE = re.compile(r"^(\d+)-filter-chain$")
_JOIN_RE = re.compile(r"^(\d+)-way-join$")
_ALIASES = {"two-way-join": "2-way-join", "three-way-join": "3-way-join",
            "join2": "2-way-join", "join3": "3-way-join"}
_CANONICAL = {"2-way-join": "two-way-join", "3-way-join": "three-way-join"}


def parse_structure(label: str) -> tuple[str, int]:
    """Map a label to ``("linear", 0)``, ``("chain", k)`` or ``("join", k)``."""
    norm = _ALIASES.get(label, label)
    if norm == "linear":
        return "linear", 0
    m = _CHAIN_RE.match(norm)
    if m and int(m.group(1)) >= 1:
        return "chain", int(m.group(1))
    m = _JOIN_RE.match(norm)
    if m and int(m.group(1)) >= 2:
        return "join", int(m.group(1))
    raise WorkloadError(f"unknown structure label {label!r}")


def canonical_structure(label: str) -> str:
    norm = _ALIASES.get(label, label)
    return _CANONICAL.get(norm, norm)


def substream(seed: int, *keys) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, *keys)``; string keys are CRC32-hashed."""
    words = [int(seed) & 0xFFFFFFFFFFFFFFFF]
    for k in keys:
        if isinstance(k, str):
            words.append(zlib.crc32(k.encode()))
        else:
            words.append(int(k))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))


# ---------------------------------------------------------------------------
# drawing helpers


def _pick(rng: np.random.Generator, options: Sequence):
    return options[int(rng.integers(len(options)))]


def _draw_attribute(rng, space: ParamSpace, dtype: Optional[str] = None) -> Attribute:
    dtype = dtype or _pick(rng, space.value_types)
    if dtype == "string":
        return Attribute("string", int(_pick(rng, space.string_domains)))
    return Attribute(dtype, float(10 ** int(_pick(rng, space.numeric_exponents))))


def _draw_literal(rng, attr: Attribute, function: str):
    if attr.type == "int":
        return int(rng.integers(0, int(attr.domain) + 1))
    if attr.type == "double":
        return float(np.round(rng.uniform(0.0, attr.domain), 1))
    s = string_value(int(rng.integers(int(attr.domain))))
    if function == "startswith":
        return s[: int(rng.integers(1, STRING_LENGTH + 1))]
    if function == "endswith":
        return s[STRING_LENGTH - int(rng.integers(1, STRING_LENGTH + 1)):]
    return s


def _draw_filter(rng, schema: Sequence[Attribute], space: ParamSpace) -> FilterParams:
    idx = int(rng.integers(len(schema)))
    attr = schema[idx]
    allowed = [f for f in space.filter_functions
               if attr.type == "string" or f not in STRING_FUNCTIONS]
    function = _pick(rng, allowed)
    return FilterParams(function, attr.type, idx, _draw_literal(rng, attr, function))


def _draw_window(rng, space: ParamSpace) -> WindowParams:
    wtype = _pick(rng, space.window_types)
    policy = _pick(rng, space.window_policies)
    if policy == "time":
        size = float(_pick(rng, space.time_window_sizes))
    else:
        size = int(_pick(rng, space.count_window_sizes))
    if wtype == "tumbling":
        return WindowParams(wtype, policy, size, None)
    frac = float(_pick(rng, space.slide_fractions))
    if policy == "time":
        slide = round(frac * size, 6)
    else:
        slide = min(max(1, int(np.floor(frac * size + 0.5))), size - 1)
        if slide < 1:
            # size 1 cannot slide
            return WindowParams("tumbling", policy, size, None)
    return WindowParams(wtype, policy, size, slide)


def _draw_stream(rng, space: ParamSpace) -> StreamSpec:
    rate = float(_pick(rng, space.event_rates))
    width = int(_pick(rng, space.tuple_widths))
    return StreamSpec(rate, tuple(_draw_attribute(rng, space) for _ in range(width)))


def _repair(rng, space, streams: list[StreamSpec],
            requirements: list[tuple[list[int], str]]) -> Optional[list[StreamSpec]]:
    """Make every ``(source set, type)`` requirement satisfiable.

    A requirement is met when some source in the set has an attribute of the
    type; otherwise an unlocked attribute of a random source in the set is
    redrawn with that type. Returns None when positions run out.
    """
    attrs = [list(s.attributes) for s in streams]
    locked: list[set[int]] = [set() for _ in streams]
    for sources, dtype in requirements:
        hits = [(s, i) for s in sources for i, a in enumerate(attrs[s]) if a.type == dtype]
        if hits:
            s, i = hits[int(rng.integers(len(hits)))]
            locked[s].add(i)
            continue
        candidates = [(s, i) for s in sources for i in range(len(attrs[s]))
                      if i not in locked[s]]
        if not candidates:
            return None
        s, i = candidates[int(rng.integers(len(candidates)))]
        attrs[s][i] = _draw_attribute(rng, space, dtype)
        locked[s].add(i)
    return [StreamSpec(st.event_rate, tuple(a)) for st, a in zip(streams, attrs)]


def _choose_attr(rng, schema: Sequence[Attribute], dtype: str) -> Optional[int]:
    idx = [i for i, a in enumerate(schema) if a.type == dtype]
    if not idx:
        return None
    return idx[int(rng.integers(len(idx)))]


# ---------------------------------------------------------------------------
# query construction


def generate_query(structure: str, space: ParamSpace,
                   rng: np.random.Generator) -> QuerySpec:
    """Draw one random query of the given structure.

    Linear: ``source -> [filter] -> window -> aggregation -> [filter] -> sink``.
    k-way joins cascade binary joins, each over two windows; the join output is
    windowed and aggregated. k-filter-chains are linear queries with k filters
    appended after the aggregation.
    """
    shape, k = parse_structure(structure)
    n_sources = k if shape == "join" else 1
    trailing = k if shape == "chain" else 0

    # operator-level type choices come first; schemas are repaired to fit them
    key_types = [_pick(rng, space.join_key_types) for _ in range(n_sources - 1)]
    agg_fn = _pick(rng, space.agg_functions)
    agg_type = _pick(rng, space.agg_types)
    group_by_type = _pick(rng, space.group_by_types)

    requirements = []
    for j, kt in enumerate(key_types):
        requirements.append((list(range(j + 1)), kt))
        requirements.append(([j + 1], kt))
    requirements.append((list(range(n_sources)), agg_type))
    for _ in range(MAX_SCHEMA_DRAWS):
        streams = _repair(rng, space, [_draw_stream(rng, space) for _ in range(n_sources)],
                          requirements)
        if streams is not None:
            break
    else:
        raise WorkloadError(f"could not draw schemas for {structure}")

    place = lambda: _pick(rng, space.instance_labels)  # noqa: E731
    b = GraphBuilder()
    meta: dict = {"filters": []}

    def maybe_filter(upstream: int, schema, slot: str, force: bool = False):
        if force or rng.random() < FILTER_PROBABILITY:
            fid = b.add("filter", _draw_filter(rng, schema, space), place(), [upstream])
            meta["filters"].append(slot)
            return fid
        return upstream

    def windowed(upstream: int) -> int:
        return b.add("window", _draw_window(rng, space), place(), [upstream])

    def source_branch(j: int) -> int:
        sid = b.source(streams[j], place())
        tail = maybe_filter(sid, streams[j].attributes, f"source{j}")
        return windowed(tail)

    # each right branch is built after its left input so join inputs keep
    # left/right order under the ascending-id convention
    left = source_branch(0)
    left_schema = list(streams[0].attributes)
    for j, kt in enumerate(key_types):
        right = source_branch(j + 1)
        right_schema = list(streams[j + 1].attributes)
        params = JoinParams(kt, _choose_attr(rng, left_schema, kt),
                            _choose_attr(rng, right_schema, kt))
        jid = b.add("join", params, place(), [left, right])
        left_schema = left_schema + right_schema
        left = windowed(jid)

    agg_attr = _choose_attr(rng, left_schema, agg_type)
    gb_attr = None if group_by_type == "none" else _choose_attr(rng, left_schema, group_by_type)
    if gb_attr is None:
        group_by_type = "none"
    agg = b.add("aggregation",
                AggregationParams(agg_fn, agg_type, agg_attr, group_by_type, gb_attr),
                place(), [left])
    out_type = "double" if agg_fn in ("mean", "avg") else agg_type
    agg_out = Attribute(out_type, left_schema[agg_attr].domain)
    schema = [agg_out] if gb_attr is None else [left_schema[gb_attr], agg_out]

    tail = maybe_filter(agg, schema, "aggregation")
    for i in range(trailing):
        tail = maybe_filter(tail, schema, f"chain{i}", force=True)
    b.add("sink", None, b.nodes[tail].placement, [tail])
    return b.build(canonical_structure(structure), meta)


def generate_dataset(config: GenerationConfig) -> list[QuerySpec]:
    out = []
    for label, count in config.counts.items():
        parse_structure(label)
        name = canonical_structure(label)
        for i in range(count):
            out.append(generate_query(name, config.space, substream(config.seed, name, i)))
    return out


def _override(space: ParamSpace, dimension: str, value) -> ParamSpace:
    if dimension == "event-rate":
        return replace(space, event_rates=(float(value),))
    if dimension == "tuple-width":
        return replace(space, tuple_widths=(int(value),))
    if dimension == "time-window":
        return replace(space, window_policies=("time",), time_window_sizes=(float(value),))
    if dimension == "count-window":
        return replace(space, window_policies=("count",), count_window_sizes=(int(value),))
    raise WorkloadError(f"unknown extrapolation dimension {dimension!r}")


def generate_extrapolation_set(dimension: str, values: Sequence, n_per_value: int,
                               seed: int, space: Optional[ParamSpace] = None
                               ) -> list[QuerySpec]:
    """``n_per_value`` queries per value, cycling over the training structures.

    Every window (or source) touched by ``dimension`` takes the given value;
    everything else is drawn from the regular space.
    """
    space = space or ParamSpace()
    out = []
    for value in values:
        sub = _override(space, dimension, value)
        for i in range(n_per_value):
            structure = TRAINING_STRUCTURES[i % len(TRAINING_STRUCTURES)]
            rng = substream(seed, "extrapolation", dimension, str(value), i)
            q = generate_query(structure, sub, rng)
            meta = dict(q.metadata, dimension=dimension, value=value)
            out.append(replace(q, metadata=meta))
    return out


UNSEEN_STRUCTURES = ("2-filter-chain", "3-filter-chain", "4-filter-chain",
                     "4-way-join", "5-way-join")


def generate_unseen_structures(kind: str, n: int, seed: int,
                               space: Optional[ParamSpace] = None) -> list[QuerySpec]:
    shape, k = parse_structure(kind)
    if shape == "chain" and not 2 <= k <= 4:
        raise WorkloadError(f"filter chain length {k} outside 2..4")
    if shape == "join" and not 4 <= k <= 5:
        raise WorkloadError(f"join fan-in {k} outside 4..5")
    if shape == "linear":
        raise WorkloadError("linear is a training structure, not an unseen one")
    space = space or ParamSpace()
    return [generate_query(kind, space, substream(seed, "unseen", kind, i)) for i in range(n)]
