"""Logical streaming-query representation.

A query is an operator graph (DAG) of typed nodes with a single sink, plus a
``StreamSpec`` per source describing the emitted tuples. Everything here is
immutable after construction and serializes to a stable JSON document.
"""

from __future__ import annotations

import heapq
import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional, Union

KINDS = ("source", "filter", "window", "aggregation", "join", "sink")
DATA_TYPES = ("int", "string", "double")
NUMERIC_TYPES = ("int", "double")
FILTER_FUNCTIONS = ("<", ">", "<=", ">=", "!=", "startswith", "endswith")
STRING_FUNCTIONS = ("startswith", "endswith")
WINDOW_TYPES = ("sliding", "tumbling")
WINDOW_POLICIES = ("count", "time")
AGG_FUNCTIONS = ("min", "max", "mean", "avg")
AGG_TYPES = ("int", "double")
GROUP_BY_TYPES = ("int", "string", "double", "none")
TRAINING_STRUCTURES = ("linear", "two-way-join", "three-way-join")

# number of joins implied by each training structure label
_STRUCTURE_JOINS = {"linear": 0, "two-way-join": 1, "three-way-join": 2}

# unary operators and their required input count
_ARITY = {"filter": 1, "window": 1, "aggregation": 1, "join": 2}


class QueryError(ValueError):
    """Raised for structurally unusable queries (cycles, missing sink)."""


@dataclass(frozen=True)
class InstanceSize:
    label: str
    cpu_cores: int
    ram_gb: int
    disk_gb: int


INSTANCE_SIZES = {
    "small": InstanceSize("small", 1, 1, 10),
    "medium": InstanceSize("medium", 2, 2, 20),
    "large": InstanceSize("large", 8, 8, 80),
}
INSTANCE_LABELS = tuple(INSTANCE_SIZES)


@dataclass(frozen=True)
class FilterParams:
    function: str
    literal_type: str
    attribute: int
    literal: Union[int, float, str]


@dataclass(frozen=True)
class WindowParams:
    type: str
    policy: str
    size: float
    slide: Optional[float] = None


@dataclass(frozen=True)
class AggregationParams:
    function: str
    agg_type: str
    agg_attribute: int
    group_by_type: str = "none"
    group_by_attribute: Optional[int] = None


@dataclass(frozen=True)
class JoinParams:
    key_type: str
    # key positions in the left / right input schema; inputs ordered by producer id
    left_key: int
    right_key: int


Params = Union[FilterParams, WindowParams, AggregationParams, JoinParams, None]

_PARAM_CLASSES = {
    "filter": FilterParams,
    "window": WindowParams,
    "aggregation": AggregationParams,
    "join": JoinParams,
}


@dataclass(frozen=True)
class OperatorNode:
    id: int
    kind: str
    params: Params = None
    placement: str = "small"


@dataclass(frozen=True)
class Attribute:
    """Type and value range of one tuple attribute.

    For strings ``domain`` is the number of distinct values; for numeric types
    values are drawn from ``[0, domain]``.
    """

    type: str
    domain: float


@dataclass(frozen=True)
class StreamSpec:
    event_rate: float
    attributes: tuple[Attribute, ...]

    @property
    def tuple_width(self) -> int:
        return len(self.attributes)

    @property
    def value_types(self) -> tuple[str, ...]:
        return tuple(a.type for a in self.attributes)


@dataclass(frozen=True)
class OperatorGraph:
    nodes: tuple[OperatorNode, ...]
    edges: tuple[tuple[int, int], ...]
    sink_id: int

    def node(self, node_id: int) -> OperatorNode:
        return self.nodes[node_id]

    def inputs(self, node_id: int) -> list[int]:
        """Producers feeding ``node_id``, ascending by id."""
        return sorted(p for p, c in self.edges if c == node_id)

    def outputs(self, node_id: int) -> list[int]:
        return sorted(c for p, c in self.edges if p == node_id)

    def kind_ids(self, kind: str) -> list[int]:
        return [n.id for n in self.nodes if n.kind == kind]


@dataclass(frozen=True)
class QuerySpec:
    graph: OperatorGraph
    streams: dict[int, StreamSpec]
    structure: str
    metadata: dict[str, Any] = field(default_factory=dict)

    def with_placements(self, placements: dict[int, str]) -> "QuerySpec":
        nodes = tuple(
            OperatorNode(n.id, n.kind, n.params, placements.get(n.id, n.placement))
            for n in self.graph.nodes
        )
        graph = OperatorGraph(nodes, self.graph.edges, self.graph.sink_id)
        return QuerySpec(graph, dict(self.streams), self.structure, dict(self.metadata))

    def to_dict(self) -> dict[str, Any]:
        return query_to_dict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


# ---------------------------------------------------------------------------
# Construction helper


class GraphBuilder:
    """Assigns dense ids in construction order."""

    def __init__(self) -> None:
        self.nodes: list[OperatorNode] = []
        self.edges: list[tuple[int, int]] = []
        self.streams: dict[int, StreamSpec] = {}

    def add(self, kind: str, params: Params = None, placement: str = "small",
            inputs: Iterable[int] = ()) -> int:
        node_id = len(self.nodes)
        self.nodes.append(OperatorNode(node_id, kind, params, placement))
        for p in inputs:
            self.edges.append((p, node_id))
        return node_id

    def source(self, stream: StreamSpec, placement: str = "small") -> int:
        node_id = self.add("source", None, placement)
        self.streams[node_id] = stream
        return node_id

    def build(self, structure: str, metadata: Optional[dict] = None) -> QuerySpec:
        sinks = [n.id for n in self.nodes if n.kind == "sink"]
        sink_id = sinks[0] if sinks else -1
        graph = OperatorGraph(tuple(self.nodes), tuple(self.edges), sink_id)
        return QuerySpec(graph, dict(self.streams), structure, dict(metadata or {}))


# ---------------------------------------------------------------------------
# Traversal


def topological_order(graph: OperatorGraph) -> list[int]:
    """Producer-before-consumer order, ties broken by ascending node id."""
    sinks = [n.id for n in graph.nodes if n.kind == "sink"]
    if len(sinks) != 1:
        raise QueryError(f"expected exactly one sink, found {len(sinks)}")
    if not any(c == sinks[0] for _, c in graph.edges):
        raise QueryError("sink has no input")
    ids = [n.id for n in graph.nodes]
    indeg = {i: 0 for i in ids}
    succ: dict[int, list[int]] = defaultdict(list)
    for p, c in graph.edges:
        if p not in indeg or c not in indeg:
            raise QueryError(f"edge ({p}, {c}) references unknown node")
        indeg[c] += 1
        succ[p].append(c)
    heap = [i for i in ids if indeg[i] == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        i = heapq.heappop(heap)
        order.append(i)
        for c in succ[i]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(order) != len(ids):
        raise QueryError("not a DAG")
    return order


def _has_cycle(graph: OperatorGraph) -> bool:
    ids = {n.id for n in graph.nodes}
    indeg = {i: 0 for i in ids}
    succ: dict[int, list[int]] = defaultdict(list)
    for p, c in graph.edges:
        if p in ids and c in ids:
            indeg[c] += 1
            succ[p].append(c)
    stack = [i for i in ids if indeg[i] == 0]
    seen = 0
    while stack:
        i = stack.pop()
        seen += 1
        for c in succ[i]:
            indeg[c] -= 1
            if indeg[c] == 0:
                stack.append(c)
    return seen != len(ids)


# ---------------------------------------------------------------------------
# Schemas


def output_schemas(query: QuerySpec) -> dict[int, tuple[Attribute, ...]]:
    """Output attribute list of every node (sink: its input schema).

    Aggregations emit ``(group key, aggregate)`` or just ``(aggregate,)``; joins
    concatenate left and right schemas. Mean/avg always produce doubles.
    """
    graph = query.graph
    schemas: dict[int, tuple[Attribute, ...]] = {}
    for node_id in topological_order(graph):
        node = graph.node(node_id)
        ins = [schemas[p] for p in graph.inputs(node_id)]
        if node.kind == "source":
            schemas[node_id] = query.streams[node_id].attributes
        elif node.kind == "join":
            schemas[node_id] = ins[0] + ins[1]
        elif node.kind == "aggregation":
            p = node.params
            src = ins[0]
            agg_attr = src[p.agg_attribute]
            out_type = "double" if p.function in ("mean", "avg") else agg_attr.type
            agg_out = Attribute(out_type, agg_attr.domain)
            if p.group_by_type == "none":
                schemas[node_id] = (agg_out,)
            else:
                schemas[node_id] = (src[p.group_by_attribute], agg_out)
        else:
            schemas[node_id] = ins[0]
    return schemas


# ---------------------------------------------------------------------------
# Validation


@dataclass(frozen=True)
class Violation:
    node_id: Optional[int]
    rule: str
    message: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def rules(self) -> list[str]:
        return [v.rule for v in self.violations]

    def __str__(self) -> str:
        if self.ok:
            return "ok"
        return "; ".join(f"node {v.node_id}: {v.rule} {v.message}".strip()
                         for v in self.violations)


def _check_params(node: OperatorNode, out: list[Violation]) -> None:
    p = node.params
    nid = node.id
    if node.kind in ("source", "sink"):
        if p is not None:
            out.append(Violation(nid, "unexpected params"))
        return
    expected = _PARAM_CLASSES[node.kind]
    if not isinstance(p, expected):
        out.append(Violation(nid, "missing params", f"expected {expected.__name__}"))
        return
    if node.kind == "filter":
        if p.function not in FILTER_FUNCTIONS:
            out.append(Violation(nid, "unknown filter function", repr(p.function)))
        if p.literal_type not in DATA_TYPES:
            out.append(Violation(nid, "unknown literal type", repr(p.literal_type)))
        if p.function in STRING_FUNCTIONS and p.literal_type != "string":
            out.append(Violation(nid, "string function needs string literal"))
    elif node.kind == "window":
        if p.type not in WINDOW_TYPES:
            out.append(Violation(nid, "unknown window type", repr(p.type)))
        if p.policy not in WINDOW_POLICIES:
            out.append(Violation(nid, "unknown window policy", repr(p.policy)))
        if not p.size > 0:
            out.append(Violation(nid, "window size must be positive"))
        if p.policy == "count" and float(p.size) != int(p.size):
            out.append(Violation(nid, "count window size must be integral"))
        if p.type == "sliding":
            if p.slide is None or not 0 < p.slide < p.size:
                out.append(Violation(nid, "slide must satisfy 0 < slide < size"))
            elif p.policy == "count" and float(p.slide) != int(p.slide):
                out.append(Violation(nid, "count window slide must be integral"))
        elif p.slide is not None:
            out.append(Violation(nid, "tumbling window has a slide"))
    elif node.kind == "aggregation":
        if p.function not in AGG_FUNCTIONS:
            out.append(Violation(nid, "unknown aggregation function", repr(p.function)))
        if p.agg_type not in AGG_TYPES:
            out.append(Violation(nid, "unknown aggregation type", repr(p.agg_type)))
        if p.group_by_type not in GROUP_BY_TYPES:
            out.append(Violation(nid, "unknown group-by type", repr(p.group_by_type)))
        if (p.group_by_type == "none") != (p.group_by_attribute is None):
            out.append(Violation(nid, "group-by attribute inconsistent with type"))
    elif node.kind == "join":
        if p.key_type not in DATA_TYPES:
            out.append(Violation(nid, "unknown join key type", repr(p.key_type)))


def _check_attributes(query: QuerySpec, out: list[Violation]) -> None:
    """Attribute references must exist and carry the declared data type."""
    graph = query.graph
    schemas: dict[int, tuple[Attribute, ...]] = {}

    def attr(schema, idx, nid, what):
        if idx is None or not 0 <= idx < len(schema):
            out.append(Violation(nid, "attribute out of range", what))
            return None
        return schema[idx]

    for node_id in topological_order(graph):
        node = graph.node(node_id)
        ins = [schemas.get(p, ()) for p in graph.inputs(node_id)]
        p = node.params
        if node.kind == "source":
            schemas[node_id] = query.streams[node_id].attributes
            continue
        if node.kind == "join":
            left, right = (ins + [(), ()])[:2]
            for schema, idx, side in ((left, p.left_key, "left"), (right, p.right_key, "right")):
                a = attr(schema, idx, node_id, f"{side} join key")
                if a is not None and a.type != p.key_type:
                    out.append(Violation(node_id, "join key type mismatch", side))
            schemas[node_id] = left + right
            continue
        src = ins[0] if ins else ()
        if node.kind == "filter":
            a = attr(src, p.attribute, node_id, "filter attribute")
            if a is not None and a.type != p.literal_type:
                out.append(Violation(node_id, "literal type mismatch"))
            schemas[node_id] = src
        elif node.kind == "aggregation":
            a = attr(src, p.agg_attribute, node_id, "aggregated attribute")
            if a is not None and a.type != p.agg_type:
                out.append(Violation(node_id, "aggregation type mismatch"))
            agg_out = Attribute("double" if p.function in ("mean", "avg") else p.agg_type,
                                a.domain if a is not None else 1)
            if p.group_by_type != "none":
                g = attr(src, p.group_by_attribute, node_id, "group-by attribute")
                if g is not None and g.type != p.group_by_type:
                    out.append(Violation(node_id, "group-by type mismatch"))
                schemas[node_id] = ((g or Attribute(p.group_by_type, 1)), agg_out)
            else:
                schemas[node_id] = (agg_out,)
        else:
            schemas[node_id] = src


def validate(query: QuerySpec) -> ValidationReport:
    """Collect every invariant violation; never raises."""
    out: list[Violation] = []
    graph = query.graph
    ids = [n.id for n in graph.nodes]
    if ids != list(range(len(ids))):
        out.append(Violation(None, "node ids not dense"))
        return ValidationReport(out)
    for p, c in graph.edges:
        if not (0 <= p < len(ids) and 0 <= c < len(ids)):
            out.append(Violation(None, "unknown edge endpoint", f"({p}, {c})"))
    if out:
        return ValidationReport(out)

    for n in graph.nodes:
        if n.kind not in KINDS:
            out.append(Violation(n.id, "unknown node kind", repr(n.kind)))
        if n.placement not in INSTANCE_SIZES:
            out.append(Violation(n.id, "unknown instance size", repr(n.placement)))

    cyclic = _has_cycle(graph)
    if cyclic:
        out.append(Violation(None, "not a DAG"))

    sinks = [n.id for n in graph.nodes if n.kind == "sink"]
    if len(sinks) != 1:
        out.append(Violation(None, "exactly one sink required", f"found {len(sinks)}"))
    elif graph.sink_id != sinks[0]:
        out.append(Violation(sinks[0], "sink id mismatch"))

    indeg = defaultdict(int)
    outdeg = defaultdict(int)
    for p, c in graph.edges:
        indeg[c] += 1
        outdeg[p] += 1
    for n in graph.nodes:
        if n.kind == "sink":
            if outdeg[n.id]:
                out.append(Violation(n.id, "sink has outgoing edges"))
            if indeg[n.id] != 1:
                out.append(Violation(n.id, "sink requires 1 input"))
        elif n.kind == "source":
            if indeg[n.id]:
                out.append(Violation(n.id, "source has inputs"))
            if n.id not in query.streams:
                out.append(Violation(n.id, "missing stream spec"))
        elif n.kind in _ARITY and indeg[n.id] != _ARITY[n.kind]:
            out.append(Violation(n.id, f"{n.kind} requires {_ARITY[n.kind]} inputs",
                                 f"has {indeg[n.id]}"))
        if n.kind in KINDS:
            _check_params(n, out)

    # windowing discipline: windows feed stateful operators, which read windows
    kinds = {n.id: n.kind for n in graph.nodes}
    for p, c in graph.edges:
        if kinds[p] == "window" and kinds[c] not in ("aggregation", "join"):
            out.append(Violation(p, "window must feed aggregation or join"))
        if kinds[c] in ("aggregation", "join") and kinds[p] != "window":
            out.append(Violation(c, f"{kinds[c]} input must be a window"))

    # every node on a source -> sink path
    if not cyclic and len(sinks) == 1:
        succ = defaultdict(list)
        pred = defaultdict(list)
        for p, c in graph.edges:
            succ[p].append(c)
            pred[c].append(p)
        fwd = _reach([i for i in ids if kinds[i] == "source"], succ)
        bwd = _reach(sinks, pred)
        for i in ids:
            if i not in fwd or i not in bwd:
                out.append(Violation(i, "not on a source-to-sink path"))

    for sid, stream in query.streams.items():
        if sid >= len(ids) or kinds[sid] != "source":
            out.append(Violation(sid, "stream spec on non-source"))
        if not stream.event_rate > 0:
            out.append(Violation(sid, "event rate must be positive"))
        if stream.tuple_width < 1:
            out.append(Violation(sid, "tuple width must be at least 1"))
        for a in stream.attributes:
            if a.type not in DATA_TYPES:
                out.append(Violation(sid, "unknown value type", repr(a.type)))
            if not a.domain > 0:
                out.append(Violation(sid, "value domain must be positive"))

    if query.structure in _STRUCTURE_JOINS:
        joins = sum(1 for k in kinds.values() if k == "join")
        if joins != _STRUCTURE_JOINS[query.structure]:
            out.append(Violation(None, "structure label inconsistent with join count",
                                 f"{query.structure} has {joins} joins"))

    if not out:
        _check_attributes(query, out)
    return ValidationReport(out)


def _reach(start: list[int], adj: dict[int, list[int]]) -> set[int]:
    seen = set(start)
    stack = list(start)
    while stack:
        i = stack.pop()
        for j in adj[i]:
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return seen


# ---------------------------------------------------------------------------
# JSON interchange


def _params_to_dict(params: Params) -> Optional[dict[str, Any]]:
    if params is None:
        return None
    return dict(params.__dict__)


def query_to_dict(query: QuerySpec) -> dict[str, Any]:
    g = query.graph
    return {
        "structure": query.structure,
        "nodes": [
            {"id": n.id, "kind": n.kind, "placement": n.placement,
             "params": _params_to_dict(n.params)}
            for n in g.nodes
        ],
        "edges": [[p, c] for p, c in g.edges],
        "sink": g.sink_id,
        "streams": {
            str(sid): {
                "event_rate": s.event_rate,
                "attributes": [[a.type, a.domain] for a in s.attributes],
            }
            for sid, s in sorted(query.streams.items())
        },
        "metadata": query.metadata,
    }


def query_from_dict(doc: dict[str, Any]) -> QuerySpec:
    try:
        nodes = []
        for nd in doc["nodes"]:
            kind = nd["kind"]
            raw = nd.get("params")
            params = None
            if raw is not None:
                cls = _PARAM_CLASSES.get(kind)
                if cls is None:
                    raise QueryError(f"node {nd['id']}: {kind} takes no params")
                params = cls(**raw)
            nodes.append(OperatorNode(int(nd["id"]), kind, params, nd.get("placement", "small")))
        edges = tuple((int(p), int(c)) for p, c in doc["edges"])
        streams = {
            int(sid): StreamSpec(float(s["event_rate"]),
                                 tuple(Attribute(t, d) for t, d in s["attributes"]))
            for sid, s in doc["streams"].items()
        }
        graph = OperatorGraph(tuple(nodes), edges, int(doc["sink"]))
        return QuerySpec(graph, streams, doc["structure"], dict(doc.get("metadata") or {}))
    except (KeyError, TypeError) as exc:
        raise QueryError(f"malformed query document: {exc}") from exc


def query_from_json(text: str) -> QuerySpec:
    return query_from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# Value domains

_ALPHABET = "abcdefghijklmnopqrstuvwxyz"
STRING_LENGTH = 3  # 26**3 codes, enough for the largest string domain


def string_value(code: int) -> str:
    """Fixed-length rendering of a string code; lexicographic order == code order."""
    chars = []
    for _ in range(STRING_LENGTH):
        code, r = divmod(int(code), len(_ALPHABET))
        chars.append(_ALPHABET[r])
    return "".join(reversed(chars))
