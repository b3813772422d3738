"""Small hand-built queries and training helpers shared by the tests."""

from __future__ import annotations

from streamcost.features import Normalizer, raw_numeric
from streamcost.model import TrainConfig, train
from streamcost.query import (
    AggregationParams,
    Attribute,
    FilterParams,
    GraphBuilder,
    JoinParams,
    QuerySpec,
    StreamSpec,
    WindowParams,
)
from streamcost.workload import ParamSpace, generate_query, substream


def stream(rate: float = 1000.0, *types: str, domain: float = 100) -> StreamSpec:
    types = types or ("int",)
    return StreamSpec(rate, tuple(Attribute(t, domain) for t in types))


def passthrough(rate: float = 1000.0, placement: str = "small") -> QuerySpec:
    b = GraphBuilder()
    s = b.source(stream(rate), placement)
    b.add("sink", None, placement, [s])
    return b.build("passthrough")


def filtered(function: str = "<", literal=50, rate: float = 1000.0,
             placement: str = "small", domain: float = 100) -> QuerySpec:
    b = GraphBuilder()
    s = b.source(stream(rate, domain=domain), placement)
    f = b.add("filter", FilterParams(function, "int", 0, literal), placement, [s])
    b.add("sink", None, placement, [f])
    return b.build("filter")


def linear(window: WindowParams = WindowParams("tumbling", "count", 10),
           rate: float = 1000.0, function: str = "avg", group_by: bool = False,
           width: int = 2, placement: str = "small", domain: float = 100) -> QuerySpec:
    b = GraphBuilder()
    types = ("int",) * width
    s = b.source(stream(rate, *types, domain=domain), placement)
    w = b.add("window", window, placement, [s])
    agg = AggregationParams(function, "int", 0, "int" if group_by else "none",
                            1 if group_by else None)
    a = b.add("aggregation", agg, placement, [w])
    b.add("sink", None, placement, [a])
    return b.build("linear")


def two_way(window: WindowParams = WindowParams("tumbling", "count", 5),
            rates=(500.0, 500.0), widths=(3, 2), domain: float = 10,
            placement: str = "small") -> QuerySpec:
    b = GraphBuilder()
    s0 = b.source(stream(rates[0], *("int",) * widths[0], domain=domain), placement)
    w0 = b.add("window", window, placement, [s0])
    s1 = b.source(stream(rates[1], *("int",) * widths[1], domain=domain), placement)
    w1 = b.add("window", window, placement, [s1])
    j = b.add("join", JoinParams("int", 0, 0), placement, [w0, w1])
    w2 = b.add("window", WindowParams("tumbling", "count", 10), placement, [j])
    a = b.add("aggregation", AggregationParams("max", "int", 1, "int", 0), placement, [w2])
    b.add("sink", None, placement, [a])
    return b.build("two-way-join")


def memorize(example, epochs=100):
    """Train on 100 copies of one example. A single example makes every
    feature constant, so the normalizer bounds are widened around it."""
    return train([example] * 100, TrainConfig(epochs=epochs, patience=epochs, seed=0),
                 normalizer=spread_normalizer(example))


def spread_normalizer(example):
    bounds = {}
    for key, values in raw_numeric(example.query, example.dcs).items():
        lo, hi = min(values), max(values)
        if key.endswith("selectivity"):
            bounds[key] = (min(lo, 1e-4), 1.0 if hi < 1.0 else hi)
        else:
            bounds[key] = (0.0, 2.0 * hi if hi > 0 else 1.0)
    return Normalizer(bounds)


def random_small_runs(n: int, seed: int = 97):
    """Generated queries over four structures for selectivity checks."""
    space = ParamSpace()
    structures = ["linear", "two-way-join", "three-way-join", "2-filter-chain"]
    for i in range(n):
        yield generate_query(structures[i % len(structures)], space, substream(seed, "sel", i))
