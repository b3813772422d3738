"""Transferable per-operator feature vectors.

Each non-sink operator becomes a fixed-length vector built from schema-level
properties, measured data characteristics and its instance size. Nothing here
looks at attribute names, literal values or stream contents, which is what
lets a trained model apply to unseen queries.

Numeric features are min-max scaled with bounds taken from the training split.
Rates, window extents and selectivities span orders of magnitude, so they are
log-transformed before scaling; counts and widths are scaled linearly. Values
outside the training range are deliberately not clamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

import numpy as np

from .query import (
    DATA_TYPES,
    FILTER_FUNCTIONS,
    GROUP_BY_TYPES,
    INSTANCE_LABELS,
    WINDOW_POLICIES,
    WINDOW_TYPES,
    AGG_FUNCTIONS,
    QuerySpec,
    output_schemas,
    topological_order,
)
from .simulator import DataCharacteristics

SCHEMA_VERSION = "streamcost-features/1"
FEATURE_KINDS = ("source", "filter", "window", "aggregation", "join")

# selectivities below this (including exact zeros) share one encoding
SELECTIVITY_FLOOR = 1e-8


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class Encoding:
    """One feature slot: a one-hot block over ``categories`` or a scaled number."""

    name: str
    categories: Optional[tuple[str, ...]] = None

    @property
    def width(self) -> int:
        return len(self.categories) if self.categories is not None else 1

    @property
    def numeric(self) -> bool:
        return self.categories is None


def _onehot(name, categories):
    return Encoding(name, tuple(categories))


def _num(name):
    return Encoding(name)


_INSTANCE = _onehot("instance_size", INSTANCE_LABELS)
_WIDTHS = (_num("width_in"), _num("width_out"))

DEFAULT_LAYOUT: dict[str, tuple[Encoding, ...]] = {
    "source": (_INSTANCE, _num("event_rate"), _num("n_int"), _num("n_string"),
               _num("n_double"), *_WIDTHS),
    "filter": (_onehot("function", FILTER_FUNCTIONS), _onehot("literal_type", DATA_TYPES),
               _INSTANCE, _num("selectivity"), *_WIDTHS),
    "window": (_onehot("type", WINDOW_TYPES), _onehot("policy", WINDOW_POLICIES), _INSTANCE,
               _num("size"), _num("slide"), *_WIDTHS),
    "aggregation": (_onehot("function", AGG_FUNCTIONS), _onehot("group_by_type", GROUP_BY_TYPES),
                    _onehot("agg_type", DATA_TYPES), _INSTANCE, _num("selectivity"), *_WIDTHS),
    "join": (_onehot("key_type", DATA_TYPES), _INSTANCE, _num("selectivity"), *_WIDTHS),
}

# numeric features transformed with log before scaling
_LOG_FEATURES = {"event_rate", "size", "slide", "selectivity"}


def _transform(name: str, x: float) -> float:
    base = name.rsplit(".", 1)[-1]
    if base == "selectivity":
        return math.log10(max(x, SELECTIVITY_FLOOR))
    if base in _LOG_FEATURES:
        return math.log1p(x)
    return float(x)


@dataclass(frozen=True)
class FeatureSchema:
    version: str = SCHEMA_VERSION
    layout: dict[str, tuple[Encoding, ...]] = field(default_factory=lambda: dict(DEFAULT_LAYOUT))

    def width(self, kind: str) -> int:
        return sum(e.width for e in self.layout[kind])

    def widths(self) -> dict[str, int]:
        return {k: self.width(k) for k in self.layout}

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": self.version,
            "layout": {k: [[e.name, list(e.categories) if e.categories is not None else None]
                           for e in encs] for k, encs in self.layout.items()},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "FeatureSchema":
        if d.get("version") != SCHEMA_VERSION:
            raise FeatureError(f"unsupported feature schema version {d.get('version')!r}")
        layout = {k: tuple(Encoding(n, tuple(c) if c is not None else None) for n, c in encs)
                  for k, encs in d["layout"].items()}
        return cls(d["version"], layout)


def normalizer_id(kind: str, name: str, node_params=None) -> str:
    """Key of the min/max pair a numeric feature is scaled with.

    Window extents are scaled per policy since counts and seconds do not share
    a unit.
    """
    if kind == "window" and name in ("size", "slide"):
        return f"window.{node_params.policy}.{name}"
    return f"{kind}.{name}"


@dataclass(frozen=True)
class Normalizer:
    """Raw training minimum and maximum per numeric feature."""

    bounds: dict[str, tuple[float, float]]

    def scale(self, key: str, x: float) -> float:
        try:
            lo, hi = self.bounds[key]
        except KeyError:
            raise FeatureError(f"no normalizer for feature {key!r}") from None
        a, b = _transform(key, lo), _transform(key, hi)
        return (_transform(key, x) - a) / (b - a)

    def to_dict(self) -> dict[str, Any]:
        return {k: [lo, hi] for k, (lo, hi) in sorted(self.bounds.items())}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Normalizer":
        return cls({k: (float(v[0]), float(v[1])) for k, v in d.items()})


@dataclass
class FeatureGraph:
    """Per-node vectors of one query in topological order, sink excluded."""

    node_ids: list[int]
    kinds: list[str]
    vectors: list[np.ndarray]
    children: list[list[int]]   # positions into node_ids
    root: int                   # position of the node feeding the sink

    def __len__(self) -> int:
        return len(self.node_ids)


def tuple_widths(query: QuerySpec, dcs: Optional[DataCharacteristics] = None
                 ) -> dict[int, tuple[float, float]]:
    """(width in, width out) in attributes for every node.

    Measured widths from ``dcs`` win; otherwise they come from the schema, with
    a join's incoming width being the mean of its two inputs.
    """
    schemas = output_schemas(query)
    g = query.graph
    out: dict[int, tuple[float, float]] = {}
    for nid in topological_order(g):
        if dcs is not None and nid in dcs.widths:
            out[nid] = tuple(float(w) for w in dcs.widths[nid])
            continue
        ins = [len(schemas[p]) for p in g.inputs(nid)]
        w_out = float(len(schemas[nid]))
        w_in = float(np.mean(ins)) if ins else w_out
        out[nid] = (w_in, w_out)
    return out


def _selectivity(nid: int, dcs: DataCharacteristics) -> float:
    if nid not in dcs.selectivity:
        raise FeatureError(f"no data characteristics for node {nid}")
    sel = dcs.selectivity[nid]
    # never measured: the operator saw no input
    return 1.0 if sel is None else float(sel)


def _raw_values(query: QuerySpec, dcs: DataCharacteristics, nid: int, widths
                ) -> tuple[dict[str, str], dict[str, float]]:
    """Categorical values and unscaled numeric values of one node."""
    node = query.graph.node(nid)
    p = node.params
    cats = {"instance_size": node.placement}
    nums = {"width_in": widths[nid][0], "width_out": widths[nid][1]}
    if node.kind == "source":
        stream = query.streams[nid]
        types = stream.value_types
        nums.update(event_rate=stream.event_rate, n_int=types.count("int"),
                    n_string=types.count("string"), n_double=types.count("double"))
    elif node.kind == "filter":
        cats.update(function=p.function, literal_type=p.literal_type)
        nums["selectivity"] = _selectivity(nid, dcs)
    elif node.kind == "window":
        cats.update(type=p.type, policy=p.policy)
        nums.update(size=float(p.size), slide=0.0 if p.type == "tumbling" else float(p.slide))
    elif node.kind == "aggregation":
        cats.update(function=p.function, group_by_type=p.group_by_type, agg_type=p.agg_type)
        nums["selectivity"] = _selectivity(nid, dcs)
    elif node.kind == "join":
        cats["key_type"] = p.key_type
        nums["selectivity"] = _selectivity(nid, dcs)
    return cats, nums


def _feature_nodes(query: QuerySpec) -> list[int]:
    g = query.graph
    return [n for n in topological_order(g) if g.node(n).kind != "sink"]


def raw_numeric(query: QuerySpec, dcs: DataCharacteristics,
                schema: Optional[FeatureSchema] = None) -> dict[str, list[float]]:
    """Unscaled numeric feature values of a query, keyed by normalizer id."""
    schema = schema or FeatureSchema()
    widths = tuple_widths(query, dcs)
    out: dict[str, list[float]] = {}
    for nid in _feature_nodes(query):
        node = query.graph.node(nid)
        _, nums = _raw_values(query, dcs, nid, widths)
        for enc in schema.layout[node.kind]:
            if enc.numeric:
                key = normalizer_id(node.kind, enc.name, node.params)
                out.setdefault(key, []).append(float(nums[enc.name]))
    return out


def fit_normalizer(samples: Iterable[tuple[QuerySpec, DataCharacteristics]],
                   schema: Optional[FeatureSchema] = None) -> Normalizer:
    """Min/max of every numeric feature over the (training) samples."""
    lo: dict[str, float] = {}
    hi: dict[str, float] = {}
    for query, dcs in samples:
        for key, values in raw_numeric(query, dcs, schema).items():
            lo[key] = min(lo.get(key, math.inf), *values)
            hi[key] = max(hi.get(key, -math.inf), *values)
    if not lo:
        raise FeatureError("no samples to fit the normalizer on")
    for key in lo:
        if not hi[key] > lo[key]:
            raise FeatureError(f"feature {key!r} is constant ({lo[key]}) in the training data")
    return Normalizer({k: (lo[k], hi[k]) for k in sorted(lo)})


def featurize(query: QuerySpec, dcs: DataCharacteristics, schema: FeatureSchema,
              norm: Normalizer) -> FeatureGraph:
    g = query.graph
    widths = tuple_widths(query, dcs)
    ids = _feature_nodes(query)
    pos = {nid: i for i, nid in enumerate(ids)}
    kinds, vectors, children = [], [], []
    for nid in ids:
        node = g.node(nid)
        cats, nums = _raw_values(query, dcs, nid, widths)
        parts = []
        for enc in schema.layout[node.kind]:
            if enc.numeric:
                key = normalizer_id(node.kind, enc.name, node.params)
                parts.append([norm.scale(key, nums[enc.name])])
            else:
                value = cats[enc.name]
                if value not in enc.categories:
                    raise FeatureError(f"node {nid}: unknown {enc.name} {value!r}")
                hot = [0.0] * len(enc.categories)
                hot[enc.categories.index(value)] = 1.0
                parts.append(hot)
        kinds.append(node.kind)
        vectors.append(np.array([x for part in parts for x in part], dtype=np.float64))
        children.append([pos[c] for c in g.inputs(nid)])
    root = pos[g.inputs(g.sink_id)[0]]
    return FeatureGraph(ids, kinds, vectors, children, root)
