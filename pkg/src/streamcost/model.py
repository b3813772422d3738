"""Graph cost model: per-kind encoders, bottom-up message passing, cost head.

A leaf's hidden state is its encoder output. Any other node combines its own
encoding with the sum of its children's hidden states. The node feeding the
sink is passed to a final MLP predicting log latency (ms) and log throughput
(tuples/s).

Batches of graphs are evaluated level by level: every node whose children are
all done is processed in one matrix operation per MLP.
"""

from __future__ import annotations

import base64
import binascii
import copy
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import nn
from .features import (
    FEATURE_KINDS,
    FeatureGraph,
    FeatureSchema,
    Normalizer,
    featurize,
    fit_normalizer,
)
from .query import QuerySpec
from .simulator import DataCharacteristics
from .workload import substream

log = logging.getLogger(__name__)

MODEL_VERSION = "streamcost-model/1"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class CostEstimate:
    latency_ms: float
    throughput: float

    def to_dict(self) -> dict[str, float]:
        return {"latency_ms": self.latency_ms, "throughput_eps": self.throughput}


@dataclass
class ModelParams:
    encoders: dict[str, nn.Mlp]
    combine: nn.Mlp
    final: nn.Mlp
    hidden: int
    schema: FeatureSchema
    normalizer: Optional[Normalizer]
    version: str = MODEL_VERSION
    info: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def init(cls, schema: FeatureSchema, normalizer: Optional[Normalizer], seed: int = 0,
             hidden: int = 64) -> "ModelParams":
        rng = substream(seed, "model-init")
        encoders = {k: nn.Mlp.init([schema.width(k), hidden, hidden, hidden], rng, f"enc.{k}")
                    for k in FEATURE_KINDS}
        combine = nn.Mlp.init([2 * hidden, hidden, hidden], rng, "combine")
        final = nn.Mlp.init([hidden, hidden, 32, 2], rng, "final")
        return cls(encoders, combine, final, hidden, schema, normalizer)

    def mlps(self) -> dict[str, nn.Mlp]:
        out = {f"enc.{k}": m for k, m in sorted(self.encoders.items())}
        out["combine"] = self.combine
        out["final"] = self.final
        return out

    def parameters(self) -> list[nn.Parameter]:
        return [p for m in self.mlps().values() for p in m.parameters()]

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)


# ---------------------------------------------------------------------------
# batched message passing


@dataclass
class _Batch:
    kind_x: dict[str, np.ndarray]     # stacked feature rows per kind
    kind_perm: np.ndarray             # level-order position -> row in concat(kind outputs)
    level_sizes: list[int]
    child_rows: list[np.ndarray]      # per level >= 1: level-order index of each child edge
    child_parent: list[np.ndarray]    # per level >= 1: parent's index within its level
    roots: np.ndarray                 # level-order index of each graph's root


def _compile(graphs: Sequence[FeatureGraph], schema: FeatureSchema) -> _Batch:
    kinds, vecs, children, roots = [], [], [], []
    for fg in graphs:
        base = len(kinds)
        for k, v, ch in zip(fg.kinds, fg.vectors, fg.children):
            if k not in schema.layout:
                raise ModelError(f"no encoder for node kind {k!r}")
            if len(v) != schema.width(k):
                raise ModelError(f"{k} vector has {len(v)} features, expected {schema.width(k)}")
            kinds.append(k)
            vecs.append(v)
            children.append([base + c for c in ch])
        roots.append(base + fg.root)
    n = len(kinds)
    level = np.zeros(n, dtype=np.int64)
    # graphs list nodes in topological order, so children come first
    for i, ch in enumerate(children):
        if ch:
            level[i] = 1 + max(level[c] for c in ch)
    order = np.lexsort((np.arange(n), level))
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)

    kind_x, kind_rows = {}, []
    for k in schema.layout:
        idx = [i for i in range(n) if kinds[i] == k]
        if idx:
            kind_x[k] = np.stack([vecs[i] for i in idx])
            kind_rows.extend(idx)
    # row of node i within concat(kind outputs)
    row_of = np.empty(n, dtype=np.int64)
    row_of[np.asarray(kind_rows, dtype=np.int64)] = np.arange(n)
    kind_perm = row_of[order]

    n_levels = int(level.max()) + 1 if n else 0
    level_sizes = np.bincount(level, minlength=n_levels).tolist()
    starts = np.concatenate([[0], np.cumsum(level_sizes)])
    child_rows, child_parent = [], []
    for lv in range(1, n_levels):
        rows, parents = [], []
        for pos in range(starts[lv], starts[lv + 1]):
            for c in children[order[pos]]:
                rows.append(rank[c])
                parents.append(pos - starts[lv])
        child_rows.append(np.asarray(rows, dtype=np.int64))
        child_parent.append(np.asarray(parents, dtype=np.int64))
    return _Batch(kind_x, kind_perm, level_sizes, child_rows, child_parent,
                  rank[np.asarray(roots, dtype=np.int64)])


def _root_hidden(params: ModelParams, batch: _Batch, tape: nn.Tape) -> nn.Tensor:
    enc = [nn.mlp_forward(params.encoders[k], nn.Tensor(x), tape)
           for k, x in batch.kind_x.items()]
    e_all = tape.gather(tape.concat(enc, axis=0) if len(enc) > 1 else enc[0], batch.kind_perm)
    start = batch.level_sizes[0]
    levels = [tape.gather(e_all, np.arange(start))]
    for lv in range(1, len(batch.level_sizes)):
        size = batch.level_sizes[lv]
        done = tape.concat(levels, axis=0) if len(levels) > 1 else levels[0]
        msgs = tape.segment_sum(tape.gather(done, batch.child_rows[lv - 1]),
                                batch.child_parent[lv - 1], size)
        own = tape.gather(e_all, np.arange(start, start + size))
        levels.append(nn.mlp_forward(params.combine, tape.concat([own, msgs]), tape))
        start += size
    h = tape.concat(levels, axis=0) if len(levels) > 1 else levels[0]
    return tape.gather(h, batch.roots)


def _forward(params: ModelParams, batch: _Batch, tape: nn.Tape) -> nn.Tensor:
    return nn.mlp_forward(params.final, _root_hidden(params, batch, tape), tape)


def encode_graph(fg: FeatureGraph, params: ModelParams) -> np.ndarray:
    """Hidden state of the root node."""
    return _root_hidden(params, _compile([fg], params.schema), nn.Tape()).value[0]


def predict_log(graphs: Sequence[FeatureGraph], params: ModelParams,
                batch_size: int = 256) -> np.ndarray:
    """(n, 2) array of predicted log latency (ms) and log throughput."""
    out = []
    for i in range(0, len(graphs), batch_size):
        chunk = graphs[i:i + batch_size]
        out.append(_forward(params, _compile(chunk, params.schema), nn.Tape()).value)
    return np.vstack(out) if out else np.zeros((0, 2))


def predict(fg: FeatureGraph, params: ModelParams) -> CostEstimate:
    y = predict_log([fg], params)[0]
    return CostEstimate(float(np.exp(y[0])), float(np.exp(y[1])))


def predict_many(graphs: Sequence[FeatureGraph], params: ModelParams) -> list[CostEstimate]:
    y = predict_log(graphs, params)
    return [CostEstimate(float(a), float(b)) for a, b in np.exp(y)]


def predict_query(query: QuerySpec, dcs: DataCharacteristics, params: ModelParams
                  ) -> CostEstimate:
    return predict(featurize(query, dcs, params.schema, params.normalizer), params)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainingExample:
    """A simulated query with its cost labels; featurized once the normalizer is fit."""

    query: QuerySpec
    dcs: DataCharacteristics
    latency_ms: float
    throughput: float

    def __post_init__(self):
        if not (self.latency_ms > 0 and self.throughput > 0):
            raise ModelError("cost labels must be positive")

    @property
    def target(self) -> np.ndarray:
        return np.array([math.log(self.latency_ms), math.log(self.throughput)])


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    seed: int = 42
    patience: int = 10
    lr: float = 1e-3
    hidden: int = 64
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)

    def __post_init__(self):
        self.split = tuple(float(f) for f in self.split)
        if len(self.split) != 3 or any(f < 0 for f in self.split) or not math.isclose(
                sum(self.split), 1.0, abs_tol=1e-9):
            raise ModelError("split fractions must be three non-negative numbers summing to 1")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise ModelError("epochs, batch size and patience must be positive")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["split"] = list(self.split)
        return d


@dataclass
class Split:
    train: list[int]
    val: list[int]
    test: list[int]


def split_indices(n: int, fractions: Sequence[float], seed: int) -> Split:
    perm = substream(seed, "split").permutation(n).tolist()
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    return Split(perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:])


@dataclass
class TrainResult:
    history: list[dict[str, float]]
    split: Split
    best_epoch: int


def _loss(params: ModelParams, graphs, targets, batch_size: int = 256) -> float:
    pred = predict_log(graphs, params, batch_size)
    return float(((pred - targets) ** 2).sum(axis=1).mean())


def fit(params: ModelParams, graphs: Sequence[FeatureGraph], targets: np.ndarray,
        config: TrainConfig, val_graphs: Sequence[FeatureGraph] = (),
        val_targets: Optional[np.ndarray] = None) -> tuple[ModelParams, list[dict], int]:
    """Mini-batch Adam on log-space squared error, keeping the best-validation
    parameters (or the last ones when there is no validation set)."""
    rng = substream(config.seed, "batches")
    plist = params.parameters()
    state = nn.OptimizerState(lr=config.lr)
    history: list[dict[str, float]] = []
    best, best_loss, best_epoch, stale = params.copy(), math.inf, 0, 0
    n = len(graphs)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for i in range(0, n, config.batch_size):
            idx = order[i:i + config.batch_size]
            tape = nn.Tape()
            pred = _forward(params, _compile([graphs[j] for j in idx], params.schema), tape)
            loss = tape.mse(pred, targets[idx])
            if not math.isfinite(float(loss.value)):
                raise nn.GradientError(f"non-finite training loss in epoch {epoch}")
            grads = nn.backward(tape, loss, plist)
            nn.optimizer_step(state, plist, grads)
            total += float(loss.value) * len(idx)
        row = {"epoch": epoch, "train_loss": total / n}
        if len(val_graphs):
            row["val_loss"] = _loss(params, val_graphs, val_targets)
            score = row["val_loss"]
        else:
            score = row["train_loss"]
        history.append(row)
        log.info("epoch %d %s", epoch, " ".join(f"{k}={v:.4f}" for k, v in row.items()
                                                 if k != "epoch"))
        if score < best_loss:
            best, best_loss, best_epoch, stale = params.copy(), score, epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    return best, history, best_epoch


def train(examples: Sequence[TrainingExample], config: Optional[TrainConfig] = None,
          schema: Optional[FeatureSchema] = None, normalizer: Optional[Normalizer] = None
          ) -> tuple[ModelParams, TrainResult]:
    """Split, fit the normalizer on the training part (unless one is given), and train."""
    config = config or TrainConfig()
    schema = schema or FeatureSchema()
    if len(examples) < 10:
        raise ModelError(f"need at least 10 examples, got {len(examples)}")
    split = split_indices(len(examples), config.split, config.seed)
    if not split.train or not split.val:
        raise ModelError("training or validation split is empty")
    norm = normalizer or fit_normalizer((examples[i].query, examples[i].dcs)
                                        for i in split.train)

    def graphs(idx):
        return [featurize(examples[i].query, examples[i].dcs, schema, norm) for i in idx]

    def targets(idx):
        return np.array([examples[i].target for i in idx])

    params = ModelParams.init(schema, norm, config.seed, config.hidden)
    y_train = targets(split.train)
    params.final.biases[-1].value[:] = y_train.mean(axis=0)
    best, history, best_epoch = fit(params, graphs(split.train), y_train, config,
                                    graphs(split.val), targets(split.val))
    best.info = {"train_config": config.to_dict(), "best_epoch": best_epoch,
                 "n_train": len(split.train), "n_val": len(split.val)}
    return best, TrainResult(history, split, best_epoch)


# ---------------------------------------------------------------------------
# checkpoints


def _encode_array(a: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _decode_array(s: str, shape) -> np.ndarray:
    raw = base64.b64decode(s.encode("ascii"), validate=True)
    a = np.frombuffer(raw, dtype="<f8")
    if a.size != int(np.prod(shape)):
        raise ModelError(f"weight array has {a.size} values, expected shape {shape}")
    return a.reshape(shape).astype(np.float64)


def checkpoint_dict(params: ModelParams) -> dict[str, Any]:
    return {
        "version": params.version,
        "hidden": params.hidden,
        "schema": params.schema.to_dict(),
        "normalizer": params.normalizer.to_dict() if params.normalizer else None,
        "info": params.info,
        "mlps": {name: {"sizes": m.sizes,
                        "weights": [_encode_array(w.value) for w in m.weights],
                        "biases": [_encode_array(b.value) for b in m.biases]}
                 for name, m in params.mlps().items()},
    }


def checkpoint_bytes(params: ModelParams) -> bytes:
    return (json.dumps(checkpoint_dict(params), sort_keys=True, indent=1) + "\n").encode()


def save_checkpoint(params: ModelParams, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(params))


def params_from_dict(doc: dict[str, Any]) -> ModelParams:
    if doc.get("version") != MODEL_VERSION:
        raise ModelError(f"unsupported checkpoint version {doc.get('version')!r}")
    try:
        mlps = {}
        for name, m in doc["mlps"].items():
            sizes = [int(s) for s in m["sizes"]]
            ws = [nn.Parameter(_decode_array(w, (a, b)), f"{name}.w{i}")
                  for i, (w, a, b) in enumerate(zip(m["weights"], sizes, sizes[1:]))]
            bs = [nn.Parameter(_decode_array(b, (s,)), f"{name}.b{i}")
                  for i, (b, s) in enumerate(zip(m["biases"], sizes[1:]))]
            mlps[name] = nn.Mlp(sizes, ws, bs)
        encoders = {name[4:]: m for name, m in mlps.items() if name.startswith("enc.")}
        norm = Normalizer.from_dict(doc["normalizer"]) if doc["normalizer"] else None
        return ModelParams(encoders, mlps["combine"], mlps["final"], int(doc["hidden"]),
                           FeatureSchema.from_dict(doc["schema"]), norm, doc["version"],
                           dict(doc.get("info", {})))
    except (KeyError, TypeError, ValueError, binascii.Error) as exc:
        raise ModelError(f"corrupt checkpoint: {exc}") from exc


def load_checkpoint(path) -> ModelParams:
    try:
        doc = json.loads(Path(path).read_bytes())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelError(f"corrupt checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelError(f"corrupt checkpoint {path}")
    return params_from_dict(doc)
