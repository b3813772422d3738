"""Central finite-difference oracle for the tape's reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from streamcost import nn
from streamcost.features import FEATURE_KINDS, FeatureSchema


def model_mlp_shapes(hidden: int = 64) -> dict[str, list[int]]:
    """Layer sizes of every MLP the cost model builds."""
    schema = FeatureSchema()
    shapes = {f"enc.{k}": [schema.width(k), hidden, hidden, hidden] for k in FEATURE_KINDS}
    shapes["combine"] = [2 * hidden, hidden, hidden]
    shapes["final"] = [hidden, hidden, 32, 2]
    return shapes


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """``|a - b| / max(|a|, |b|)`` in the Euclidean norm; 0 when both vanish."""
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale == 0 else float(np.linalg.norm(a - b) / scale)


def check_mlp(sizes, seed: int, h: float = 1e-6, batch: int = 4, coords: int = 48) -> float:
    """Max relative error over every parameter tensor and the input of one
    random MLP under a squared-error loss. ``coords`` entries per tensor are
    perturbed (all of them when the tensor is smaller)."""
    rng = np.random.default_rng(seed)
    mlp = nn.Mlp.init(sizes, rng, "m")
    for b in mlp.biases:
        b.value[:] = rng.normal(0.0, 0.1, b.shape)
    x = nn.Parameter(rng.uniform(-1.0, 1.0, (batch, sizes[0])), "x")
    y = rng.normal(size=(batch, sizes[-1]))

    def loss_value() -> float:
        out = nn.mlp_forward(mlp, x.value)
        return float(((out - y) ** 2).sum() / batch)

    tape = nn.Tape()
    loss = tape.mse(nn.mlp_forward(mlp, x, tape), y)
    params = mlp.parameters() + [x]
    grads = nn.backward(tape, loss, params)

    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.value.reshape(-1)
        k = min(coords, flat.size)
        picks = rng.choice(flat.size, size=k, replace=False)
        numeric = np.empty(k)
        for j, i in enumerate(picks):
            old = flat[i]
            flat[i] = old + h
            up = loss_value()
            flat[i] = old - h
            down = loss_value()
            flat[i] = old
            numeric[j] = (up - down) / (2 * h)
        worst = max(worst, relative_error(g.reshape(-1)[picks], numeric))
    return worst
