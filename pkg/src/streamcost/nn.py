"""Small dense-network toolkit on numpy: MLPs, reverse-mode gradients, Adam.

Forward passes either run plain (no bookkeeping, safe to share across threads)
or on a :class:`Tape` that records each operation with a closure computing the
input gradients from the output gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class GradientError(FloatingPointError):
    pass


class Tensor:
    """A value on the tape; ``grad`` is filled in by :meth:`Tape.backward`."""

    __slots__ = ("value", "grad")

    def __init__(self, value):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self):
        return self.value.shape

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g


class Parameter(Tensor):
    __slots__ = ("name",)

    def __init__(self, value, name: str = ""):
        super().__init__(value)
        self.name = name


class Tape:
    """Records operations for one forward pass."""

    def __init__(self):
        self._ops: list[tuple[Tensor, Callable[[np.ndarray], None]]] = []

    def _record(self, value, backward) -> Tensor:
        out = Tensor(value)
        self._ops.append((out, backward))
        return out

    def linear(self, x: Tensor, w: Tensor, b: Tensor) -> Tensor:
        if x.shape[-1] != w.shape[0]:
            raise ValueError(f"input width {x.shape[-1]} does not match layer {w.shape}")

        def back(g):
            x._accumulate(g @ w.value.T)
            w._accumulate(x.value.T @ g)
            b._accumulate(g.sum(axis=0))

        return self._record(x.value @ w.value + b.value, back)

    def relu(self, x: Tensor) -> Tensor:
        mask = x.value > 0
        return self._record(np.where(mask, x.value, 0.0), lambda g: x._accumulate(g * mask))

    def concat(self, xs: Sequence[Tensor], axis: int = 1) -> Tensor:
        cuts = np.cumsum([t.shape[axis] for t in xs])[:-1]

        def back(g):
            for t, part in zip(xs, np.split(g, cuts, axis=axis)):
                t._accumulate(part)

        return self._record(np.concatenate([t.value for t in xs], axis=axis), back)

    def gather(self, x: Tensor, idx: np.ndarray) -> Tensor:
        """Rows ``x[idx]``."""
        def back(g):
            gx = np.zeros_like(x.value)
            np.add.at(gx, idx, g)
            x._accumulate(gx)

        return self._record(x.value[idx], back)

    def segment_sum(self, x: Tensor, segments: np.ndarray, n: int) -> Tensor:
        """Row ``s`` of the result is the sum of rows of ``x`` whose segment is ``s``."""
        out = np.zeros((n,) + x.shape[1:])
        np.add.at(out, segments, x.value)
        return self._record(out, lambda g: x._accumulate(g[segments]))

    def add(self, a: Tensor, b: Tensor) -> Tensor:
        def back(g):
            a._accumulate(g)
            b._accumulate(g)

        return self._record(a.value + b.value, back)

    def mul(self, a: Tensor, b: Tensor) -> Tensor:
        def back(g):
            a._accumulate(g * b.value)
            b._accumulate(g * a.value)

        return self._record(a.value * b.value, back)

    def sum(self, x: Tensor) -> Tensor:
        return self._record(x.value.sum(), lambda g: x._accumulate(np.broadcast_to(g, x.shape)))

    def mse(self, pred: Tensor, target: np.ndarray) -> Tensor:
        """Mean over rows of the summed squared error across columns."""
        diff = pred.value - target
        n = diff.shape[0] if diff.ndim > 1 else 1
        return self._record((diff ** 2).sum() / n, lambda g: pred._accumulate(g * 2.0 * diff / n))

    def backward(self, loss: Tensor) -> None:
        if loss.value.size != 1:
            raise ValueError("backward needs a scalar loss")
        loss.grad = np.ones_like(loss.value)
        for out, back in reversed(self._ops):
            if out.grad is not None:
                back(out.grad)


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


@dataclass
class Mlp:
    """Dense layers; ReLU after every layer but the last."""

    sizes: list[int]
    weights: list[Parameter]
    biases: list[Parameter]

    def __post_init__(self):
        if len(self.weights) != len(self.sizes) - 1 or len(self.biases) != len(self.weights):
            raise ValueError("need one weight matrix and bias per layer")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.sizes[i], self.sizes[i + 1]) or b.shape != (self.sizes[i + 1],):
                raise ValueError(f"layer {i} has shape {w.shape}/{b.shape}, "
                                 f"expected {(self.sizes[i], self.sizes[i + 1])}")

    @classmethod
    def init(cls, sizes: Sequence[int], rng: np.random.Generator, name: str = "mlp") -> "Mlp":
        sizes = [int(s) for s in sizes]
        ws = [Parameter(glorot(rng, a, b), f"{name}.w{i}")
              for i, (a, b) in enumerate(zip(sizes, sizes[1:]))]
        bs = [Parameter(np.zeros(b), f"{name}.b{i}") for i, b in enumerate(sizes[1:])]
        return cls(sizes, ws, bs)

    def parameters(self) -> list[Parameter]:
        return [p for pair in zip(self.weights, self.biases) for p in pair]


def mlp_forward(mlp: Mlp, x, tape: Optional[Tape] = None):
    """Apply ``mlp`` to a vector or a batch of row vectors.

    Without a tape, works on plain arrays. With one, ``x`` may be a Tensor and
    the result is a Tensor recorded for :meth:`Tape.backward`.
    """
    last = len(mlp.weights) - 1
    if tape is None:
        h = np.asarray(x, dtype=np.float64)
        if h.shape[-1] != mlp.sizes[0]:
            raise ValueError(f"input width {h.shape[-1]} does not match MLP input {mlp.sizes[0]}")
        for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
            h = h @ w.value + b.value
            if i < last:
                h = np.maximum(h, 0.0)
        return h
    h = x if isinstance(x, Tensor) else Tensor(np.atleast_2d(x))
    for i, (w, b) in enumerate(zip(mlp.weights, mlp.biases)):
        h = tape.linear(h, w, b)
        if i < last:
            h = tape.relu(h)
    return h


def backward(tape: Tape, loss: Tensor, params: Sequence[Parameter]) -> list[np.ndarray]:
    """Gradients of ``loss`` for ``params``; zeros for parameters it does not reach."""
    for p in params:
        p.grad = None
    tape.backward(loss)
    return [p.grad if p.grad is not None else np.zeros_like(p.value) for p in params]


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def optimizer_step(state: OptimizerState, params: Sequence[Parameter],
                   grads: Sequence[np.ndarray]) -> OptimizerState:
    """One Adam update, in place on ``params``."""
    if len(grads) != len(params):
        raise ValueError("one gradient per parameter required")
    for p, g in zip(params, grads):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {p.name} {p.shape}")
        if not np.all(np.isfinite(g)):
            raise GradientError(f"non-finite gradient for {p.name or 'parameter'} "
                                f"at step {state.step + 1}")
    if not state.m:
        state.m = [np.zeros_like(p.value) for p in params]
        state.v = [np.zeros_like(p.value) for p in params]
    state.step += 1
    c1 = 1.0 - state.beta1 ** state.step
    c2 = 1.0 - state.beta2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state
