"""End-to-end experiment pipeline: generate, simulate, train, evaluate, report.

All artifacts live under one work directory and are reproducible from the
configuration alone; ``manifest.json`` records the config hash and a checksum
of every artifact.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .evaluation import (
    DEFAULT_EXTRAPOLATION,
    BenchmarkSuite,
    QErrorSummary,
    evaluate,
    run_benchmark_suite,
    run_extrapolation_suite,
    run_hardware_sweep,
    run_unseen_structures,
)
from .model import (
    ModelParams,
    TrainConfig,
    TrainingExample,
    checkpoint_bytes,
    load_checkpoint,
    split_indices,
    train,
)
from .query import QueryError, QuerySpec, query_from_dict, validate
from .report import (
    SUMMARY_COLUMNS,
    bar_chart,
    csv_text,
    line_chart,
    manifest_text,
    read_csv,
    sha256_file,
    write_text,
)
from .simulator import ExecutionObservation, SimConfig, simulate_many
from .workload import GenerationConfig, ParamSpace, generate_dataset

log = logging.getLogger(__name__)

SUITES = ("test", "hardware", "extrapolation", "structures", "benchmarks")
SEED_ENV = "STREAMCOST_SEED"


class DataError(ValueError):
    """Missing or malformed input data."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


# ---------------------------------------------------------------------------
# configuration


@dataclass
class PipelineConfig:
    workdir: str = "streamcost-run"
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    simulation: SimConfig = field(default_factory=SimConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    suites: tuple[str, ...] = SUITES
    suite_seed: int = 5
    extrapolation_n: int = 50
    unseen_n: int = 30
    jobs: int = 1

    def __post_init__(self):
        self.suites = tuple(self.suites)
        unknown = set(self.suites) - set(SUITES)
        if unknown:
            raise DataError(f"unknown suites: {sorted(unknown)}")

    @property
    def specs_path(self) -> Path:
        return Path(self.workdir) / "specs.jsonl"

    @property
    def observations_path(self) -> Path:
        return Path(self.workdir) / "observations.jsonl"

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.workdir) / "model.ckpt"

    @property
    def report_dir(self) -> Path:
        return Path(self.workdir) / "report"

    def to_dict(self) -> dict[str, Any]:
        gen = self.generation
        return {
            "workdir": self.workdir,
            "generation": {"seed": gen.seed, "counts": dict(gen.counts),
                           "space": {k: list(v) for k, v in asdict(gen.space).items()}},
            "simulation": self.simulation.to_dict(),
            "training": self.training.to_dict(),
            "suites": list(self.suites),
            "suite_seed": self.suite_seed,
            "extrapolation_n": self.extrapolation_n,
            "unseen_n": self.unseen_n,
            "jobs": self.jobs,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PipelineConfig":
        known = {"workdir", "generation", "simulation", "training", "suites", "suite_seed",
                 "extrapolation_n", "unseen_n", "jobs"}
        extra = set(d) - known
        if extra:
            raise DataError(f"unknown config keys: {sorted(extra)}")
        kw: dict[str, Any] = {k: d[k] for k in known - {"generation", "simulation", "training"}
                              if k in d}
        try:
            if "generation" in d:
                g = dict(d["generation"])
                if "space" in g:
                    g["space"] = ParamSpace(**{k: tuple(v) for k, v in g["space"].items()})
                kw["generation"] = GenerationConfig(**g)
            if "simulation" in d:
                kw["simulation"] = SimConfig.from_dict(d["simulation"])
            if "training" in d:
                kw["training"] = TrainConfig(**d["training"])
        except TypeError as exc:
            raise DataError(f"bad config: {exc}") from exc
        return cls(**kw)

    def config_hash(self) -> str:
        """Hash of everything that influences artifact contents."""
        d = self.to_dict()
        d.pop("workdir")
        d.pop("jobs")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, generation=replace(self.generation, seed=seed),
                       simulation=replace(self.simulation, seed=seed),
                       training=replace(self.training, seed=seed), suite_seed=seed)


def load_config(path: Optional[str]) -> PipelineConfig:
    if path is None:
        config = PipelineConfig()
    else:
        try:
            config = PipelineConfig.from_dict(json.loads(Path(path).read_text()))
        except FileNotFoundError:
            raise DataError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"config file {path} is not JSON: {exc}") from exc
    return apply_seed_env(config)


def apply_seed_env(config: PipelineConfig) -> PipelineConfig:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return config
    try:
        return config.with_seed(int(raw))
    except ValueError:
        raise DataError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


# ---------------------------------------------------------------------------
# artifact IO


def _jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n" for r in records)


def _read_jsonl(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    out = []
    with path.open() as f:
        for n, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{n}: not JSON ({exc})") from exc
    return out


def write_specs(path, queries: Sequence[QuerySpec], config_hash: str = "") -> None:
    write_text(path, _jsonl({"config": config_hash, "index": i, "query": q.to_dict()}
                            for i, q in enumerate(queries)))


def read_specs(path) -> list[QuerySpec]:
    out = []
    for n, rec in enumerate(_read_jsonl(path)):
        doc = rec.get("query", rec)
        try:
            q = query_from_dict(doc)
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: record {n} is not a query ({exc})") from exc
        report = validate(q)
        if not report.ok:
            raise DataError(f"{path}: record {n} is invalid: {report}")
        out.append(q)
    return out


def write_observations(path, observations: Sequence[ExecutionObservation],
                       config_hash: str = "") -> None:
    write_text(path, _jsonl({"config": config_hash, "index": i, "observation": o.to_dict()}
                            for i, o in enumerate(observations)))


def read_observations(path) -> list[ExecutionObservation]:
    out = []
    for n, rec in enumerate(_read_jsonl(path)):
        try:
            out.append(ExecutionObservation.from_dict(rec.get("observation", rec)))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"{path}: record {n} is not an observation ({exc})") from exc
    return out


def build_examples(queries: Sequence[QuerySpec], observations: Sequence[ExecutionObservation]
                   ) -> list[TrainingExample]:
    """Examples for queries with usable labels, in input order."""
    if len(queries) != len(observations):
        raise DataError(f"{len(queries)} specs but {len(observations)} observations")
    return [TrainingExample(q, o.dcs, o.latency_ms, o.throughput)
            for q, o in zip(queries, observations) if o.usable]


def test_examples(examples: Sequence[TrainingExample], params: ModelParams
                  ) -> list[TrainingExample]:
    """The held-out split the checkpoint was trained without."""
    cfg = params.info.get("train_config")
    if cfg is None:
        raise DataError("checkpoint does not record its training split")
    split = split_indices(len(examples), cfg["split"], cfg["seed"])
    return [examples[i] for i in split.test]


# ---------------------------------------------------------------------------
# stages


def stage_generate(config: PipelineConfig) -> list[QuerySpec]:
    queries = generate_dataset(config.generation)
    write_specs(config.specs_path, queries, config.config_hash())
    log.info("generated %d queries", len(queries))
    return queries


def stage_simulate(config: PipelineConfig, queries: Sequence[QuerySpec]
                   ) -> list[ExecutionObservation]:
    obs = simulate_many(queries, config.simulation, config.jobs)
    write_observations(config.observations_path, obs, config.config_hash())
    log.info("simulated %d queries, %d usable", len(obs), sum(o.usable for o in obs))
    return obs


def history_csv(history: Sequence[dict[str, float]]) -> str:
    rows = [{"epoch": h["epoch"], "train_loss": h["train_loss"],
             "val_loss": h.get("val_loss", float("nan"))} for h in history]
    return csv_text(rows, ("epoch", "train_loss", "val_loss"))


def stage_train(config: PipelineConfig, examples: Sequence[TrainingExample]) -> ModelParams:
    params, result = train(examples, config.training)
    params.info["config_hash"] = config.config_hash()
    config.report_dir.mkdir(parents=True, exist_ok=True)
    write_text(config.report_dir / "history.csv", history_csv(result.history))
    path = config.checkpoint_path
    tmp = path.with_name(path.name + ".partial")
    tmp.write_bytes(checkpoint_bytes(params))
    tmp.replace(path)
    log.info("trained on %d examples, best epoch %d", len(result.split.train), result.best_epoch)
    return params


def _summary_csv(summaries: Sequence[QErrorSummary]) -> str:
    return csv_text([s.to_row() for s in summaries], SUMMARY_COLUMNS)


def run_suites(config: PipelineConfig, params: ModelParams,
               examples: Sequence[TrainingExample], out_dir: Optional[Path] = None
               ) -> dict[str, Path]:
    """Run the selected suites and write their CSV tables and charts."""
    out_dir = Path(out_dir or config.report_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sim, seed, jobs = config.simulation, config.suite_seed, config.jobs
    written: dict[str, Path] = {}
    test = test_examples(examples, params) if examples else []

    def emit(name: str, text: str) -> None:
        path = out_dir / name
        write_text(path, text)
        written[name] = path

    if "test" in config.suites and test:
        emit("test.csv", _summary_csv(evaluate(params, test)))
    if "hardware" in config.suites and test:
        sweep = run_hardware_sweep(params, test)
        emit("hardware.csv", csv_text([s.to_row() for s in sweep],
                                      ("placement", "mean_latency_ms", "mean_throughput", "count")))
    if "extrapolation" in config.suites:
        rows = []
        for plan in DEFAULT_EXTRAPOLATION:
            for s in run_extrapolation_suite(params, plan.dimension, plan.values,
                                             config.extrapolation_n, seed, sim, jobs):
                rows.append(s)
        emit("extrapolation.csv", _summary_csv(rows))
    if "structures" in config.suites:
        emit("structures.csv", _summary_csv(
            run_unseen_structures(params, config.unseen_n, seed, sim, jobs)))
    if "benchmarks" in config.suites:
        emit("benchmarks.csv", _summary_csv(
            run_benchmark_suite(params, BenchmarkSuite.default(), sim, jobs)))
    for name, text in render_charts(out_dir, config.config_hash()).items():
        emit(name, text)
    return written


def _training_range(dimension: str) -> tuple[float, float]:
    space = ParamSpace()
    return {
        "event-rate": (min(space.event_rates), max(space.event_rates)),
        "tuple-width": (min(space.tuple_widths), max(space.tuple_widths)),
        "time-window": (min(space.time_window_sizes), max(space.time_window_sizes)),
        "count-window": (min(space.count_window_sizes), max(space.count_window_sizes)),
    }[dimension]


def render_charts(report_dir, config_hash: str = "") -> dict[str, str]:
    """SVG charts for whichever summary CSVs exist in ``report_dir``."""
    report_dir = Path(report_dir)
    desc = f"config {config_hash}" if config_hash else ""
    charts: dict[str, str] = {}
    for name in ("test", "structures", "benchmarks"):
        path = report_dir / f"{name}.csv"
        if not path.exists():
            continue
        rows = read_csv(path)
        groups = sorted({r["group"] for r in rows})
        series = {m: [next(float(r["median"]) for r in rows
                           if r["group"] == g and r["metric"] == m) for g in groups]
                  for m in ("latency", "throughput")}
        charts[f"{name}.svg"] = bar_chart(f"Median q-error ({name})", groups, series,
                                          "median q-error", log=True, desc=desc)
    path = report_dir / "extrapolation.csv"
    if path.exists():
        rows = read_csv(path)
        for plan in DEFAULT_EXTRAPOLATION:
            sel = [r for r in rows if r["group"].startswith(plan.dimension + "=")]
            if not sel:
                continue
            xs = sorted({float(r["group"].split("=", 1)[1]) for r in sel})
            series = {m: [next(float(r["median"]) for r in sel if r["metric"] == m
                               and float(r["group"].split("=", 1)[1]) == x) for x in xs]
                      for m in ("latency", "throughput")}
            charts[f"extrapolation-{plan.dimension}.svg"] = line_chart(
                f"Extrapolation: {plan.dimension}", xs, series, plan.dimension,
                "median q-error", shade=_training_range(plan.dimension), desc=desc)
    path = report_dir / "hardware.csv"
    if path.exists():
        rows = read_csv(path)
        labels = [r["placement"] for r in rows]
        charts["hardware.svg"] = bar_chart(
            "Mean predicted throughput by instance size", labels,
            {"throughput": [float(r["mean_throughput"]) for r in rows]},
            "tuples/s", desc=desc)
    return charts


def write_manifest(config: PipelineConfig, artifacts: dict[str, Path],
                   out_dir: Optional[Path] = None) -> Path:
    doc = {
        "version": __version__,
        "config_hash": config.config_hash(),
        "config": {k: v for k, v in config.to_dict().items() if k not in ("workdir", "jobs")},
        "seeds": {"generation": config.generation.seed, "simulation": config.simulation.seed,
                  "training": config.training.seed, "suites": config.suite_seed},
        "artifacts": {name: sha256_file(path) for name, path in sorted(artifacts.items())},
    }
    path = Path(out_dir or config.report_dir) / "manifest.json"
    write_text(path, manifest_text(doc))
    return path


def run_pipeline(config: PipelineConfig) -> dict[str, Path]:
    """Run every stage in order; returns artifact paths by name."""
    Path(config.workdir).mkdir(parents=True, exist_ok=True)
    artifacts: dict[str, Path] = {}
    stage = "generate"
    try:
        queries = stage_generate(config)
        artifacts["specs.jsonl"] = config.specs_path
        stage = "simulate"
        obs = stage_simulate(config, queries)
        artifacts["observations.jsonl"] = config.observations_path
        stage = "train"
        examples = build_examples(queries, obs)
        params = stage_train(config, examples)
        artifacts["model.ckpt"] = config.checkpoint_path
        artifacts["history.csv"] = config.report_dir / "history.csv"
        stage = "evaluate"
        artifacts.update(run_suites(config, params, examples))
        stage = "report"
        artifacts["manifest.json"] = write_manifest(config, artifacts)
    except Exception as exc:
        for p in Path(config.workdir).rglob("*.partial"):
            p.unlink()
        raise StageError(stage, exc) from exc
    return artifacts


def load_run(config: PipelineConfig) -> tuple[list[TrainingExample], ModelParams]:
    """Examples and checkpoint of a finished pipeline run."""
    examples = build_examples(read_specs(config.specs_path),
                              read_observations(config.observations_path))
    return examples, load_checkpoint(config.checkpoint_path)


def dataset_checksum(config: PipelineConfig) -> str:
    h = hashlib.sha256()
    for path in (config.specs_path, config.observations_path):
        h.update(Path(path).read_bytes())
    return h.hexdigest()
