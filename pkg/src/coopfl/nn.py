"""Minimal feed-forward network with exact backprop, plus parameter-vector arithmetic.

Everything is float64 and deterministic; reproducibility beats speed at the
scale this package runs at.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PROB_FLOOR = 1e-12

_ACTIVATIONS = ("tanh", "relu")


@dataclass(frozen=True)
class ParamVector:
    """Flat, ordered array of model weights; the unit of FL exchange.

    ``layout`` is the ordered tuple of array shapes the flat vector decomposes
    into (W0, b0, W1, b1, ...). Two ParamVectors are compatible iff their
    layouts are identical; every binary op below requires compatibility.
    """

    values: np.ndarray
    layout: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        expected = sum(int(np.prod(s)) for s in self.layout)
        if self.values.ndim != 1 or self.values.size != expected:
            raise ValueError(
                f"param vector has {self.values.size} entries, layout implies {expected}"
            )

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def compatible(self, other: "ParamVector") -> bool:
        return self.layout == other.layout


def _check_compatible(a: ParamVector, b: ParamVector) -> None:
    if a.layout != b.layout:
        raise ValueError(f"incompatible layouts: {a.layout} vs {b.layout}")


def add(a: ParamVector, b: ParamVector) -> ParamVector:
    _check_compatible(a, b)
    return ParamVector(a.values + b.values, a.layout)


def subtract(a: ParamVector, b: ParamVector) -> ParamVector:
    _check_compatible(a, b)
    return ParamVector(a.values - b.values, a.layout)


def scale(a: ParamVector, factor: float) -> ParamVector:
    return ParamVector(a.values * float(factor), a.layout)


def weighted_mean(entries: list[tuple[ParamVector, float]]) -> ParamVector:
    """Convex combination of parameter vectors; weights are normalized.

    Weights must be non-negative and not all zero. A single entry is returned
    exactly (no arithmetic applied).
    """
    if not entries:
        raise ValueError("weighted_mean needs at least one entry")
    first = entries[0][0]
    for vec, w in entries:
        _check_compatible(first, vec)
        if w < 0:
            raise ValueError(f"negative weight {w}")
    total = float(sum(w for _, w in entries))
    if total == 0.0:
        raise ValueError("all aggregation weights are zero")
    if len(entries) == 1:
        return entries[0][0].copy()
    acc = np.zeros_like(first.values)
    for vec, w in entries:
        acc += (w / total) * vec.values
    return ParamVector(acc, first.layout)


def l2_distance(a: ParamVector, b: ParamVector) -> float:
    _check_compatible(a, b)
    return float(np.linalg.norm(a.values - b.values))


def cosine_similarity(a: ParamVector, b: ParamVector) -> float:
    """Cosine of the angle between two parameter vectors; 0.0 if either is zero."""
    _check_compatible(a, b)
    na = np.linalg.norm(a.values)
    nb = np.linalg.norm(b.values)
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a.values, b.values) / (na * nb))


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Temperature softmax with max-subtraction; output entries are floored at 1e-12.

    Works on a single logit vector or a batch (last axis is the distribution).
    """
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    z = np.asarray(logits, dtype=np.float64) / temperature
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / np.sum(e, axis=-1, keepdims=True)
    return np.maximum(p, PROB_FLOOR)


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats. Entries are clamped to >= 1e-12 before the logs."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    pc = np.maximum(p, PROB_FLOOR)
    qc = np.maximum(q, PROB_FLOOR)
    return max(0.0, float(np.sum(pc * (np.log(pc) - np.log(qc)))))


class Mlp:
    """Fully-connected net: tanh or relu hidden layers, identity output.

    Parameters live in per-layer (W, b) arrays and round-trip losslessly
    through :meth:`get_params` / :meth:`set_params`.
    """

    def __init__(
        self,
        layer_sizes: list[int] | tuple[int, ...],
        activation: str = "tanh",
        rng: np.random.Generator | None = None,
    ):
        sizes = tuple(int(s) for s in layer_sizes)
        if len(sizes) < 2 or any(s <= 0 for s in sizes):
            raise ValueError(f"layer sizes must be >= 2 positive ints, got {sizes}")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"activation must be one of {_ACTIVATIONS}")
        self.layer_sizes = sizes
        self.activation = activation
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            if rng is None:
                w = np.zeros((fan_out, fan_in))
            else:
                bound = np.sqrt(6.0 / (fan_in + fan_out))
                w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def layout(self) -> tuple[tuple[int, ...], ...]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w.shape)
            out.append(b.shape)
        return tuple(out)

    def _act(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return np.tanh(z)
        return np.maximum(z, 0.0)

    def _act_grad(self, a: np.ndarray, z: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            return 1.0 - a * a
        return (z > 0.0).astype(np.float64)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits (Q-values) for one input vector or a batch of rows."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        a = x[None, :] if single else x
        if a.shape[1] != self.layer_sizes[0]:
            raise ValueError(
                f"input dim {a.shape[1]} != first layer size {self.layer_sizes[0]}"
            )
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w.T + b
            if i != last:
                a = self._act(a)
        return a[0] if single else a

    def _forward_trace(self, x: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
        # activations[i] is the input to layer i; pre[i] the pre-activation output.
        a = x
        activations = [a]
        pre = []
        last = self.n_layers - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w.T + b
            pre.append(z)
            a = self._act(z) if i != last else z
            activations.append(a)
        return activations, pre

    def backward(self, x: np.ndarray, loss_grad_at_output: np.ndarray) -> ParamVector:
        """Gradient of a loss w.r.t. the parameters, given dLoss/dOutput.

        Accepts a single (input, grad) pair or matched batches; batch
        contributions are summed.
        """
        x = np.asarray(x, dtype=np.float64)
        g = np.asarray(loss_grad_at_output, dtype=np.float64)
        if x.ndim == 1:
            x = x[None, :]
            g = g[None, :]
        if x.shape[0] != g.shape[0] or g.shape[1] != self.layer_sizes[-1]:
            raise ValueError("input/gradient batch shapes do not match the net")
        activations, pre = self._forward_trace(x)
        grads_w = [np.empty(0)] * self.n_layers
        grads_b = [np.empty(0)] * self.n_layers
        delta = g
        for i in range(self.n_layers - 1, -1, -1):
            grads_w[i] = delta.T @ activations[i]
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i]) * self._act_grad(activations[i], pre[i - 1])
        flat = np.concatenate(
            [np.concatenate([w.ravel(), b.ravel()]) for w, b in zip(grads_w, grads_b)]
        )
        return ParamVector(flat, self.layout)

    def get_params(self) -> ParamVector:
        flat = np.concatenate(
            [np.concatenate([w.ravel(), b.ravel()]) for w, b in zip(self.weights, self.biases)]
        )
        return ParamVector(flat, self.layout)

    def set_params(self, params: ParamVector) -> None:
        if params.layout != self.layout:
            raise ValueError(f"param layout {params.layout} does not fit net {self.layout}")
        i = 0
        for k in range(self.n_layers):
            w, b = self.weights[k], self.biases[k]
            self.weights[k] = params.values[i : i + w.size].reshape(w.shape).copy()
            i += w.size
            self.biases[k] = params.values[i : i + b.size].copy()
            i += b.size

    def copy(self) -> "Mlp":
        dup = Mlp(self.layer_sizes, self.activation)
        dup.set_params(self.get_params())
        return dup
