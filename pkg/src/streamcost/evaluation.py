"""Q-error metrics and the experiment suites run against a trained model.

Every suite produces ground truth with the simulator and compares it with the
model's estimates. Percentiles use the nearest-rank definition, so a summary
always reports a value that actually occurred.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Sequence

import numpy as np

from .features import featurize
from .model import ModelParams, TrainingExample, predict_log
from .query import (
    AggregationParams,
    Attribute,
    FilterParams,
    GraphBuilder,
    JoinParams,
    QuerySpec,
    StreamSpec,
    WindowParams,
    validate,
)
from .simulator import ExecutionObservation, SimConfig, simulate_many
from .workload import (
    UNSEEN_STRUCTURES,
    generate_extrapolation_set,
    generate_unseen_structures,
)

log = logging.getLogger(__name__)

METRICS = ("latency", "throughput")


class EvaluationError(ValueError):
    pass


def q_error(c: float, c_hat: float) -> float:
    """Multiplicative deviation ``max(c / c_hat, c_hat / c)``; 1 means exact."""
    if not (c > 0 and c_hat > 0):
        raise EvaluationError(f"q-error needs positive costs, got {c} and {c_hat}")
    return max(c / c_hat, c_hat / c)


def q_errors(c: np.ndarray, c_hat: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.float64)
    c_hat = np.asarray(c_hat, dtype=np.float64)
    if np.any(c <= 0) or np.any(c_hat <= 0):
        raise EvaluationError("q-error needs positive costs")
    return np.maximum(c / c_hat, c_hat / c)


def nearest_rank(values: Sequence[float], pct: float) -> float:
    """Smallest value with at least ``pct`` percent of the data at or below it."""
    if not len(values):
        raise EvaluationError("percentile of an empty sample")
    ordered = sorted(values)
    rank = max(1, math.ceil(pct / 100.0 * len(ordered)))
    return float(ordered[rank - 1])


@dataclass(frozen=True)
class QErrorSummary:
    group: str
    metric: str
    median: float
    p95: float
    count: int
    suite: str = "test"

    def to_row(self) -> dict[str, Any]:
        return {"suite": self.suite, "group": self.group, "metric": self.metric,
                "median": self.median, "p95": self.p95, "count": self.count}


def summarize(groups: dict[str, dict[str, list[float]]], suite: str = "test"
              ) -> list[QErrorSummary]:
    out = []
    for group in sorted(groups):
        for metric in METRICS:
            qs = groups[group].get(metric, [])
            if not qs:
                log.warning("group %s has no %s examples; omitted", group, metric)
                continue
            out.append(QErrorSummary(group, metric, nearest_rank(qs, 50), nearest_rank(qs, 95),
                                     len(qs), suite))
    return out


def predict_examples(params: ModelParams, examples: Sequence[TrainingExample]) -> np.ndarray:
    """(n, 2) predicted latency (ms) and throughput."""
    graphs = [featurize(e.query, e.dcs, params.schema, params.normalizer) for e in examples]
    return np.exp(predict_log(graphs, params))


def example_q_errors(params: ModelParams, examples: Sequence[TrainingExample]) -> np.ndarray:
    """(n, 2) q-errors for latency and throughput."""
    if not examples:
        return np.zeros((0, 2))
    pred = predict_examples(params, examples)
    true = np.array([[e.latency_ms, e.throughput] for e in examples])
    return q_errors(true, pred)


def by_structure(e: TrainingExample) -> str:
    return e.query.structure


def evaluate(params: ModelParams, examples: Sequence[TrainingExample],
             group_by: Callable[[TrainingExample], str] = by_structure,
             suite: str = "test") -> list[QErrorSummary]:
    if not examples:
        raise EvaluationError("nothing to evaluate")
    q = example_q_errors(params, examples)
    groups: dict[str, dict[str, list[float]]] = {}
    for e, (ql, qt) in zip(examples, q):
        g = groups.setdefault(group_by(e), {m: [] for m in METRICS})
        g["latency"].append(float(ql))
        g["throughput"].append(float(qt))
    return summarize(groups, suite)


def label(queries: Sequence[QuerySpec], config: Optional[SimConfig] = None, jobs: int = 1
          ) -> tuple[list[TrainingExample], list[ExecutionObservation]]:
    """Simulate queries; keep those with a usable cost label as examples."""
    obs = simulate_many(queries, config, jobs)
    examples = [TrainingExample(q, o.dcs, o.latency_ms, o.throughput)
                for q, o in zip(queries, obs) if o.usable]
    if len(examples) < len(queries):
        log.info("%d of %d queries without usable labels dropped",
                 len(queries) - len(examples), len(queries))
    return examples, obs


# ---------------------------------------------------------------------------
# extrapolation


@dataclass(frozen=True)
class ExtrapolationPlan:
    dimension: str
    controls: tuple
    outside: tuple

    @property
    def values(self) -> tuple:
        return tuple(sorted(self.controls + self.outside))


DEFAULT_EXTRAPOLATION = (
    ExtrapolationPlan("event-rate", (1000.0,), (100.0, 5000.0)),
    ExtrapolationPlan("tuple-width", (3,), (6, 8)),
    ExtrapolationPlan("time-window", (1.0,), (5.0, 10.0)),
    ExtrapolationPlan("count-window", (50,), (150, 200)),
)


def run_extrapolation_suite(params: ModelParams, dimension: str, values: Sequence, n: int,
                            seed: int, config: Optional[SimConfig] = None, jobs: int = 1
                            ) -> list[QErrorSummary]:
    """One summary per (value, metric); groups are named ``dimension=value``."""
    queries = generate_extrapolation_set(dimension, values, n, seed)
    examples, _ = label(queries, config, jobs)
    if not examples:
        raise EvaluationError(f"no usable queries for {dimension}")
    return evaluate(params, examples,
                    lambda e: f"{dimension}={e.query.metadata['value']}", "extrapolation")


def run_unseen_structures(params: ModelParams, n: int, seed: int,
                          config: Optional[SimConfig] = None, jobs: int = 1,
                          kinds: Sequence[str] = UNSEEN_STRUCTURES) -> list[QErrorSummary]:
    queries = [q for kind in kinds for q in generate_unseen_structures(kind, n, seed)]
    examples, _ = label(queries, config, jobs)
    pred = predict_examples(params, examples)
    if not np.all(np.isfinite(pred)):
        raise EvaluationError("non-finite prediction for an unseen structure")
    return evaluate(params, examples, suite="structures")


# ---------------------------------------------------------------------------
# benchmarks


BENCHMARK_RATES = (250.0, 500.0, 1000.0, 1500.0, 2500.0)
BENCHMARK_PLACEMENT = "medium"


def _clicks(rate):
    # composite (ad, campaign) key, click cost, user
    return StreamSpec(rate, (Attribute("int", 10000), Attribute("double", 10.0),
                             Attribute("string", 1000)))


def _impressions(rate):
    # composite (ad, campaign) key, bid price, publisher
    return StreamSpec(rate, (Attribute("int", 10000), Attribute("double", 1.0),
                             Attribute("string", 100)))


def _ad_aggregation(name, stream) -> QuerySpec:
    b = GraphBuilder()
    src = b.source(stream, BENCHMARK_PLACEMENT)
    win = b.add("window", WindowParams("tumbling", "time", 1.0), BENCHMARK_PLACEMENT, [src])
    agg = b.add("aggregation", AggregationParams("mean", "double", 1, "int", 0),
                BENCHMARK_PLACEMENT, [win])
    b.add("sink", None, BENCHMARK_PLACEMENT, [agg])
    return b.build(name)


def advertisement_clicks(rate: float) -> QuerySpec:
    return _ad_aggregation("advertisement-clicks", _clicks(rate))


def advertisement_impressions(rate: float) -> QuerySpec:
    return _ad_aggregation("advertisement-impressions", _impressions(rate))


def advertisement_join(rate: float) -> QuerySpec:
    b = GraphBuilder()
    wins = []
    for stream in (_clicks(rate), _impressions(rate)):
        src = b.source(stream, BENCHMARK_PLACEMENT)
        wins.append(b.add("window", WindowParams("sliding", "time", 2.0, 1.0),
                          BENCHMARK_PLACEMENT, [src]))
    join = b.add("join", JoinParams("int", 0, 0), BENCHMARK_PLACEMENT, wins)
    b.add("sink", None, BENCHMARK_PLACEMENT, [join])
    return b.build("advertisement-join")


def spike_detection(rate: float) -> QuerySpec:
    """Moving average per sensor, reporting averages above a threshold."""
    b = GraphBuilder()
    src = b.source(StreamSpec(rate, (Attribute("int", 100), Attribute("double", 100.0))),
                   BENCHMARK_PLACEMENT)
    win = b.add("window", WindowParams("sliding", "count", 100, 10), BENCHMARK_PLACEMENT, [src])
    agg = b.add("aggregation", AggregationParams("avg", "double", 1, "int", 0),
                BENCHMARK_PLACEMENT, [win])
    flt = b.add("filter", FilterParams(">", "double", 1, 60.0), BENCHMARK_PLACEMENT, [agg])
    b.add("sink", None, BENCHMARK_PLACEMENT, [flt])
    return b.build("spike-detection")


SMART_GRID_WINDOW = WindowParams("sliding", "time", 300.0, 5.0)


def _smart_grid(name, group_by: bool, rate: float) -> QuerySpec:
    # household, plug, load
    stream = StreamSpec(rate, (Attribute("int", 40), Attribute("int", 20),
                               Attribute("double", 100.0)))
    b = GraphBuilder()
    src = b.source(stream, BENCHMARK_PLACEMENT)
    win = b.add("window", SMART_GRID_WINDOW, BENCHMARK_PLACEMENT, [src])
    params = (AggregationParams("avg", "double", 2, "int", 0) if group_by
              else AggregationParams("avg", "double", 2))
    agg = b.add("aggregation", params, BENCHMARK_PLACEMENT, [win])
    b.add("sink", None, BENCHMARK_PLACEMENT, [agg])
    return b.build(name)


def smart_grid_local(rate: float) -> QuerySpec:
    return _smart_grid("smart-grid-local", True, rate)


def smart_grid_global(rate: float) -> QuerySpec:
    return _smart_grid("smart-grid-global", False, rate)


BENCHMARKS: dict[str, Callable[[float], QuerySpec]] = {
    "advertisement-clicks": advertisement_clicks,
    "advertisement-impressions": advertisement_impressions,
    "advertisement-join": advertisement_join,
    "spike-detection": spike_detection,
    "smart-grid-local": smart_grid_local,
    "smart-grid-global": smart_grid_global,
}


def _time_span(query: QuerySpec) -> float:
    return max((n.params.size for n in query.graph.nodes
                if n.kind == "window" and n.params.policy == "time"), default=0.0)


def benchmark_config(query: QuerySpec, base: Optional[SimConfig] = None) -> SimConfig:
    """Delay measurement until the longest time window has filled once, keeping
    the measured span of the base config."""
    base = base or SimConfig()
    span = _time_span(query)
    if span <= base.warmup:
        return base
    warmup = base.warmup + span
    return replace(base, warmup=warmup, duration=warmup + base.duration - base.warmup)


@dataclass
class BenchmarkSuite:
    queries: dict[str, list[QuerySpec]] = field(default_factory=dict)

    @classmethod
    def default(cls, rates: Sequence[float] = BENCHMARK_RATES) -> "BenchmarkSuite":
        suite = cls({name: [build(r) for r in rates] for name, build in BENCHMARKS.items()})
        for name, qs in suite.queries.items():
            for q in qs:
                report = validate(q)
                if not report.ok:
                    raise EvaluationError(f"benchmark {name} is invalid: {report}")
        return suite


def run_benchmark_suite(params: ModelParams, suite: Optional[BenchmarkSuite] = None,
                        config: Optional[SimConfig] = None, jobs: int = 1
                        ) -> list[QErrorSummary]:
    suite = suite or BenchmarkSuite.default()
    examples = []
    for name, queries in suite.queries.items():
        for q in queries:
            ex, obs = label([q], benchmark_config(q, config), jobs)
            if not ex:
                log.warning("benchmark %s at rate %s produced no usable output", name,
                            q.streams[min(q.streams)].event_rate)
            examples.extend(ex)
    return evaluate(params, examples, suite="benchmarks")


# ---------------------------------------------------------------------------
# hardware


@dataclass(frozen=True)
class HardwareSweep:
    label: str
    mean_latency_ms: float
    mean_throughput: float
    count: int

    def to_row(self) -> dict[str, Any]:
        return {"placement": self.label, "mean_latency_ms": self.mean_latency_ms,
                "mean_throughput": self.mean_throughput, "count": self.count}


def run_hardware_sweep(params: ModelParams, examples: Sequence[TrainingExample],
                       labels: Sequence[str] = ("small", "medium", "large")
                       ) -> list[HardwareSweep]:
    """Mean predictions with every operator moved to one instance size; the
    measured data characteristics are kept as they are."""
    out = []
    for lab in labels:
        moved = [replace(e, query=e.query.with_placements(
            {n.id: lab for n in e.query.graph.nodes})) for e in examples]
        pred = predict_examples(params, moved)
        out.append(HardwareSweep(lab, float(pred[:, 0].mean()), float(pred[:, 1].mean()),
                                 len(moved)))
    return out
