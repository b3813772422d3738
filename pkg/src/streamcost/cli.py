"""``streamcost`` command line.

Exit codes: 0 success, 1 usage error, 2 bad input data, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .evaluation import EvaluationError
from .features import FeatureError
from .model import (
    ModelError,
    TrainConfig,
    checkpoint_bytes,
    load_checkpoint,
    predict_query,
    train,
)
from .pipeline import (
    SEED_ENV,
    SUITES,
    DataError,
    PipelineConfig,
    StageError,
    build_examples,
    history_csv,
    load_config,
    read_observations,
    read_specs,
    render_charts,
    run_pipeline,
    run_suites,
    write_manifest,
    write_observations,
    write_specs,
)
from .query import QueryError, query_from_json, validate
from .report import write_text
from .simulator import (
    DataCharacteristics,
    SimConfig,
    SimulationError,
    simulate,
    simulate_many,
)
from .workload import (
    GenerationConfig,
    WorkloadError,
    canonical_structure,
    generate_dataset,
    parse_structure,
)

log = logging.getLogger("streamcost")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DATA_ERRORS = (DataError, QueryError, WorkloadError, FeatureError, ModelError, SimulationError,
               EvaluationError, FileNotFoundError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _seed(value: Optional[int], default: int) -> int:
    """Explicit flag, else the environment override, else the default."""
    if value is not None:
        return value
    raw = os.environ.get(SEED_ENV)
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        raise DataError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _counts(args) -> dict[str, int]:
    if args.structure:
        counts = {}
        for item in args.structure:
            label, _, n = item.partition("=")
            parse_structure(label)
            counts[canonical_structure(label)] = int(n) if n else args.per_structure
        return counts
    return {s: args.per_structure for s in ("linear", "two-way-join", "three-way-join")}


def cmd_generate(args) -> int:
    config = PipelineConfig(generation=GenerationConfig(seed=_seed(args.seed, 7),
                                                        counts=_counts(args)))
    queries = generate_dataset(config.generation)
    write_specs(args.out, queries, config.config_hash())
    log.info("wrote %d queries to %s", len(queries), args.out)
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    return SimConfig(duration=args.duration, warmup=args.warmup, seed=_seed(args.seed, 13))


def cmd_simulate(args) -> int:
    queries = read_specs(args.specs)
    obs = simulate_many(queries, _sim_config(args), args.jobs)
    write_observations(args.out, obs)
    log.info("simulated %d queries (%d usable) into %s", len(obs),
             sum(o.usable for o in obs), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    examples = build_examples(read_specs(args.specs), read_observations(args.data))
    config = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                         seed=_seed(args.seed, 42), patience=args.patience, lr=args.lr)
    params, result = train(examples, config)
    out = Path(args.out)
    tmp = out.with_name(out.name + ".partial")
    tmp.write_bytes(checkpoint_bytes(params))
    tmp.replace(out)
    if args.history:
        write_text(args.history, history_csv(result.history))
    log.info("best epoch %d of %d; checkpoint %s", result.best_epoch, len(result.history), out)
    return EXIT_OK


def cmd_predict(args) -> int:
    params = load_checkpoint(args.model)
    try:
        query = query_from_json(Path(args.spec).read_text())
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{args.spec}: not a query ({exc})") from exc
    report = validate(query)
    if not report.ok:
        raise DataError(f"{args.spec}: invalid query: {report}")
    if args.dcs:
        dcs = DataCharacteristics.from_dict(json.loads(Path(args.dcs).read_text()))
    else:
        # no measured characteristics given: take them from a simulated run
        dcs = simulate(query, SimConfig(seed=_seed(None, 13))).dcs
    est = predict_query(query, dcs, params)
    print(json.dumps(est.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    params = load_checkpoint(args.model)
    config = PipelineConfig(simulation=SimConfig(seed=_seed(args.seed, 13)),
                            suites=(args.suite,), suite_seed=_seed(args.seed, 5),
                            extrapolation_n=args.n, unseen_n=args.n, jobs=args.jobs)
    examples = []
    if args.suite in ("test", "hardware"):
        if not (args.data and args.specs):
            raise UsageError(f"suite {args.suite} needs --data and --specs")
        examples = build_examples(read_specs(args.specs), read_observations(args.data))
    out = Path(args.out)
    written = run_suites(config, params, examples, out)
    written["manifest.json"] = write_manifest(config, written, out)
    for name in sorted(written):
        print(written[name])
    return EXIT_OK


def cmd_report(args) -> int:
    report_dir = Path(args.report_dir)
    if not report_dir.is_dir():
        raise DataError(f"report directory not found: {report_dir}")
    charts = render_charts(report_dir)
    if not charts:
        raise DataError(f"no summary CSVs in {report_dir}")
    for name, text in sorted(charts.items()):
        write_text(report_dir / name, text)
        print(report_dir / name)
    return EXIT_OK


def cmd_pipeline(args) -> int:
    config = load_config(args.config)
    if args.workdir:
        config = replace(config, workdir=args.workdir)
    if args.jobs:
        config = replace(config, jobs=args.jobs)
    if args.per_structure is not None:
        counts = {k: args.per_structure for k in config.generation.counts}
        config = replace(config, generation=replace(config.generation, counts=counts))
    if args.epochs is not None:
        config = replace(config, training=replace(config.training, epochs=args.epochs))
    if args.suites:
        config = replace(config, suites=tuple(args.suites))
    if args.dump_config:
        print(json.dumps(config.to_dict(), indent=2, sort_keys=True))
        return EXIT_OK
    artifacts = run_pipeline(config)
    for name in sorted(artifacts):
        print(artifacts[name])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="streamcost", description="Zero-shot cost model for stream queries.",
                epilog=f"{SEED_ENV} overrides default seeds. Exit codes: 0 ok, 1 usage, "
                       "2 data error, 3 internal error.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate random training queries")
    g.add_argument("--out", required=True, help="output specs JSONL")
    g.add_argument("--seed", type=int, help="generation seed (default 7)")
    g.add_argument("--per-structure", type=int, default=1000,
                   help="queries per training structure (default 1000)")
    g.add_argument("--structure", action="append",
                   help="LABEL[=N] to generate instead of the three training structures; "
                        "repeatable (e.g. 4-way-join=20)")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("simulate", help="simulate queries for ground-truth costs")
    s.add_argument("--specs", required=True, help="specs JSONL")
    s.add_argument("--out", required=True, help="output observations JSONL")
    s.add_argument("--duration", type=float, default=90.0, help="simulated seconds (default 90)")
    s.add_argument("--warmup", type=float, default=10.0, help="unmeasured seconds (default 10)")
    s.add_argument("--seed", type=int, help="simulation seed (default 13)")
    s.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train a cost model")
    t.add_argument("--data", required=True, help="observations JSONL")
    t.add_argument("--specs", required=True, help="specs JSONL")
    t.add_argument("--out", required=True, help="output checkpoint")
    t.add_argument("--seed", type=int, help="training seed (default 42)")
    t.add_argument("--epochs", type=int, default=100, help="maximum epochs (default 100)")
    t.add_argument("--batch-size", type=int, default=32, help="graphs per batch (default 32)")
    t.add_argument("--patience", type=int, default=10,
                   help="early-stopping patience in epochs (default 10)")
    t.add_argument("--lr", type=float, default=1e-3, help="learning rate (default 1e-3)")
    t.add_argument("--history", help="write per-epoch losses to this CSV")
    t.set_defaults(func=cmd_train)

    pr = sub.add_parser("predict", help="estimate costs of one query")
    pr.add_argument("--model", required=True, help="checkpoint")
    pr.add_argument("--spec", required=True, help="query JSON")
    pr.add_argument("--dcs", help="data characteristics JSON (default: measure by simulation)")
    pr.set_defaults(func=cmd_predict)

    e = sub.add_parser("evaluate", help="run an evaluation suite")
    e.add_argument("--model", required=True, help="checkpoint")
    e.add_argument("--suite", required=True, choices=SUITES)
    e.add_argument("--out", required=True, help="report directory")
    e.add_argument("--data", help="observations JSONL (test and hardware suites)")
    e.add_argument("--specs", help="specs JSONL (test and hardware suites)")
    e.add_argument("--n", type=int, default=50, help="queries per suite point (default 50)")
    e.add_argument("--seed", type=int, help="suite seed (default 5)")
    e.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="render SVG charts from summary CSVs")
    r.add_argument("--report-dir", required=True, help="directory with summary CSVs")
    r.set_defaults(func=cmd_report)

    pl = sub.add_parser("pipeline", help="run generate, simulate, train, evaluate, report")
    pl.add_argument("--config", help="pipeline config JSON (default: built-in defaults)")
    pl.add_argument("--workdir", help="artifact directory (overrides config)")
    pl.add_argument("--per-structure", type=int, help="queries per training structure")
    pl.add_argument("--epochs", type=int, help="maximum training epochs")
    pl.add_argument("--suites", nargs="+", choices=SUITES, help="suites to run")
    pl.add_argument("--jobs", type=int, help="worker processes")
    pl.add_argument("--dump-config", action="store_true",
                    help="print the effective config and exit")
    pl.set_defaults(func=cmd_pipeline)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"streamcost: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as exc:
        print(f"streamcost: {exc}", file=sys.stderr)
        return EXIT_DATA if isinstance(exc.cause, DATA_ERRORS) else EXIT_INTERNAL
    except DATA_ERRORS as exc:
        print(f"streamcost: error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001 - last-resort guard for the exit code
        log.exception("internal error")
        print(f"streamcost: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
