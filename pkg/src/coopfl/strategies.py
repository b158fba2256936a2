"""Personalization strategies, each driven by one cooperation-tuning knob.

Every strategy interpolates between two endpoints: at cooperation level 1 it
behaves exactly like federated averaging, at 0 it leaves clients training
independently. ``map_cooperation`` is the declared contract turning the scalar
level into each strategy's own knob (cluster count, public-layer mask, mixture
weight, cloud-model coefficients, adaptation iterations, distillation weight).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .dqn import DqnAgent, ReplayBuffer, q_loss_and_grad
from .nn import Mlp, ParamVector, softmax, weighted_mean


class StrategyKind(enum.Enum):
    FEDAVG = "fedavg"
    CLUSTERING = "clustering"
    PARAM_DECOUPLING = "param_decoupling"
    INTERPOLATION = "interpolation"
    MULTI_TASK = "multi_task"
    LOCAL_ADAPTATION = "local_adaptation"
    MEME_DISTILLATION = "meme_distillation"


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True)
class TuningState:
    """Concrete knob settings derived from one cooperation level."""

    clusters: int
    public_mask: tuple[bool, ...]
    alpha: float
    cloud_matrix: np.ndarray
    adapt_iterations: int
    distill_weight: float


def map_cooperation(
    c: float,
    kind: StrategyKind,
    n_clients: int,
    n_layers: int = 2,
    adapt_max_iterations: int = 64,
) -> TuningState:
    """Map a cooperation level in [0, 1] onto every strategy's tuning knob.

    c=1 gives the fully cooperative settings (one cluster, all layers public,
    pure global mixture, uniform cloud matrix, zero adaptation, full
    distillation); c=0 gives the independent ones; interior values move each
    knob monotonically between them.
    """
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"cooperation level must be in [0, 1], got {c}")
    if n_clients < 1 or n_layers < 1:
        raise ValueError("need at least one client and one layer")
    k = _round_half_up(1 + (n_clients - 1) * (1.0 - c))
    n_public = math.ceil(c * n_layers)
    mask = tuple(i < n_public for i in range(n_layers))
    cloud = c * np.full((n_clients, n_clients), 1.0 / n_clients) + (1.0 - c) * np.eye(n_clients)
    return TuningState(
        clusters=k,
        public_mask=mask,
        alpha=c,
        cloud_matrix=cloud,
        adapt_iterations=_round_half_up(adapt_max_iterations * (1.0 - c)),
        distill_weight=c,
    )


# -- clustering --------------------------------------------------------------


def _unit_rows(vectors: list[ParamVector]) -> np.ndarray:
    stacked = np.stack([v.values for v in vectors])
    norms = np.linalg.norm(stacked, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    return stacked / safe


def cluster_assign(
    vectors: list[ParamVector], k: int, rng: np.random.Generator, max_iters: int = 50
) -> np.ndarray:
    """Cosine-distance k-means labels with farthest-point seeding.

    The first center is drawn from ``rng``; each further seed is the point
    farthest (max-min cosine distance) from the chosen ones. Ties everywhere
    break toward the lowest index, so the result is deterministic per seed.
    """
    n = len(vectors)
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if k == 1:
        return np.zeros(n, dtype=np.int64)
    if k == n:
        return np.arange(n, dtype=np.int64)
    units = _unit_rows(vectors)
    center_idx = [int(rng.integers(n))]
    while len(center_idx) < k:
        dist = 1.0 - units @ units[center_idx].T
        center_idx.append(int(np.argmax(dist.min(axis=1))))
    centers = units[center_idx].copy()
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        dist = 1.0 - units @ centers.T
        new_labels = np.argmin(dist, axis=1)
        if np.array_equal(new_labels, labels) and _ != 0:
            break
        labels = new_labels
        for j in range(k):
            members = units[labels == j]
            if len(members) == 0:
                continue
            mean = members.mean(axis=0)
            norm = np.linalg.norm(mean)
            if norm > 0:
                centers[j] = mean / norm
    return labels


def cluster_aggregate(
    updates: list[ParamVector],
    k: int,
    rng: np.random.Generator,
    weights: list[float] | None = None,
    models: list[ParamVector] | None = None,
) -> tuple[np.ndarray, list[ParamVector]]:
    """Cluster the updates, then average each cluster into its own model.

    ``models`` lets the caller cluster on one set of vectors (e.g. deltas)
    while averaging another (full parameters); by default both are the
    updates. A cluster whose weights sum to zero falls back to equal weights,
    so a singleton always gets its own model back exactly.
    """
    n = len(updates)
    if weights is None:
        weights = [1.0] * n
    if models is None:
        models = updates
    if len(weights) != n or len(models) != n:
        raise ValueError("updates, weights and models must align")
    labels = cluster_assign(updates, k, rng)
    cluster_models: list[ParamVector] = []
    for j in range(k):
        idx = [i for i in range(n) if labels[i] == j]
        if not idx:
            cluster_models.append(models[0].copy())  # empty cluster: placeholder
            continue
        w = [weights[i] for i in idx]
        if sum(w) == 0.0:
            w = [1.0] * len(idx)
        cluster_models.append(weighted_mean([(models[i], w[i]) for i, w[i] in zip(idx, w)]))
    return labels, cluster_models


# -- parameter decoupling / interpolation / cloud models ---------------------


def decoupled_merge(
    local: ParamVector, received: ParamVector, public_mask: tuple[bool, ...]
) -> ParamVector:
    """Take public layers from the received model, keep private layers local."""
    if local.layout != received.layout:
        raise ValueError("incompatible layouts")
    n_layers = len(local.layout) // 2
    if len(public_mask) != n_layers:
        raise ValueError(f"mask has {len(public_mask)} entries for {n_layers} layers")
    pieces = []
    offset = 0
    for layer in range(n_layers):
        size = int(np.prod(local.layout[2 * layer])) + int(np.prod(local.layout[2 * layer + 1]))
        source = received if public_mask[layer] else local
        pieces.append(source.values[offset : offset + size])
        offset += size
    return ParamVector(np.concatenate(pieces), local.layout)


def interpolate_models(local: ParamVector, received: ParamVector, alpha: float) -> ParamVector:
    """alpha * received + (1 - alpha) * local."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if local.layout != received.layout:
        raise ValueError("incompatible layouts")
    return ParamVector(alpha * received.values + (1.0 - alpha) * local.values, local.layout)


def cloud_models(locals_: list[ParamVector], coefficients: np.ndarray) -> list[ParamVector]:
    """Per-client linear combinations of all local models.

    ``coefficients`` must be row-stochastic (each row non-negative, summing
    to 1); row i produces client i's cloud model.
    """
    n = len(locals_)
    coefficients = np.asarray(coefficients, dtype=np.float64)
    if coefficients.shape != (n, n):
        raise ValueError(f"coefficient matrix must be {n}x{n}, got {coefficients.shape}")
    if np.any(coefficients < 0) or np.any(np.abs(coefficients.sum(axis=1) - 1.0) > 1e-9):
        raise ValueError("coefficient rows must be non-negative and sum to 1")
    layout = locals_[0].layout
    stacked = np.stack([v.values for v in locals_])
    mixed = coefficients @ stacked
    return [ParamVector(mixed[i].copy(), layout) for i in range(n)]


# -- transfer-learning style local adaptation --------------------------------


def local_adaptation(
    received: Mlp,
    buffer: ReplayBuffer,
    iterations: int,
    *,
    gamma: float,
    learning_rate: float,
    target_sync_period: int,
    batch_size: int,
    rng: np.random.Generator,
) -> Mlp:
    """Fine-tune a received model with some DQN steps on local data only."""
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    net = received.copy()
    if iterations == 0:
        return net
    worker = DqnAgent(net, gamma, learning_rate, target_sync_period, epsilon=0.0)
    for _ in range(iterations):
        worker.train_step(buffer, batch_size, rng)
    return worker.q_net


# -- mutual distillation through the meme model -------------------------------


def _kl_grad_at_logits(
    p: np.ndarray, q: np.ndarray, temperature: float
) -> tuple[float, np.ndarray]:
    # Gradient of KL(p || q) w.r.t. the logits that produced p (q frozen),
    # for p = softmax(z / T): (1/T) * p * ((ln p - ln q) - KL).
    log_ratio = np.log(p) - np.log(q)
    kl = float(np.sum(p * log_ratio))
    return max(kl, 0.0), (p * (log_ratio - kl)) / temperature


def distill_gradients(
    local: Mlp,
    meme: Mlp,
    states: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
    distill_weight: float,
    temperature: float,
) -> tuple[float, ParamVector, float, ParamVector]:
    """Losses and exact gradients of the mutual-distillation objective.

    Each side minimizes (1 - w) * TD loss + w * T^2 * mean KL(self || other),
    with the other net treated as a frozen teacher. Returns
    (local loss, local grad, meme loss, meme grad).
    """
    if not 0.0 <= distill_weight <= 1.0:
        raise ValueError(f"distill weight must be in [0, 1], got {distill_weight}")
    states = np.atleast_2d(states)
    batch = states.shape[0]
    if batch == 0:
        raise ValueError("distillation batch is empty")
    w = distill_weight
    t2 = temperature * temperature
    p_local = softmax(local.forward(states), temperature)
    p_meme = softmax(meme.forward(states), temperature)

    results = []
    for net, p, q in ((local, p_local, p_meme), (meme, p_meme, p_local)):
        td_loss, td_grad = q_loss_and_grad(net, states, actions, targets)
        kl_sum = 0.0
        grad_out = np.zeros_like(p)
        for i in range(batch):
            kl_i, g_i = _kl_grad_at_logits(p[i], q[i], temperature)
            kl_sum += kl_i
            grad_out[i] = g_i
        kl_loss = t2 * kl_sum / batch
        kl_grad = net.backward(states, (w * t2 / batch) * grad_out)
        loss = (1.0 - w) * td_loss + w * kl_loss
        grad = ParamVector((1.0 - w) * td_grad.values + kl_grad.values, td_grad.layout)
        results.append((loss, grad))
    return results[0][0], results[0][1], results[1][0], results[1][1]


def distill_step(
    local: Mlp,
    meme: Mlp,
    states: np.ndarray,
    actions: np.ndarray,
    targets: np.ndarray,
    distill_weight: float,
    temperature: float,
    learning_rate: float,
    direction: str = "both",
) -> tuple[float, float]:
    """One SGD step of mutual distillation; ``direction`` gates which side learns.

    "to_local" updates only the local net (knowledge flows meme -> local),
    "to_meme" only the meme, "both" updates the pair.
    """
    if direction not in ("both", "to_local", "to_meme"):
        raise ValueError(f"unknown direction {direction!r}")
    loss_l, grad_l, loss_m, grad_m = distill_gradients(
        local, meme, states, actions, targets, distill_weight, temperature
    )
    if direction in ("both", "to_local"):
        params = local.get_params()
        local.set_params(
            ParamVector(params.values - learning_rate * grad_l.values, params.layout)
        )
    if direction in ("both", "to_meme"):
        params = meme.get_params()
        meme.set_params(
            ParamVector(params.values - learning_rate * grad_m.values, params.layout)
        )
    return loss_l, loss_m
