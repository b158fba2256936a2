"""Cooperation choice signals: per-client cooperation level, system risk.

A client decides how closely to cooperate from three local signals against
the model it last received: output-distribution similarity (KL over
temperature-softmaxed Q-values), greedy-action agreement on its own replay
data, and raw parameter deviation. The server averages per-client risk flags
into a system risk level and tracks how much cooperation was actually applied
in aggregation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Mlp, kl_divergence, l2_distance, softmax


@dataclass(frozen=True)
class CoopConfig:
    """Thresholds and weights for cooperation analysis.

    ``kl_threshold`` (risk cutoff) must not exceed ``kl_cap`` (the KL value
    mapped to zero similarity). The three weights must sum to 1.
    """

    kl_threshold: float
    kl_cap: float
    deviation_cap: float
    w_similarity: float = 0.5
    w_validation: float = 0.3
    w_deviation: float = 0.2
    probe_batch_size: int = 64
    temperature: float = 1.0
    window_rounds: int = 5

    def __post_init__(self):
        if self.kl_threshold <= 0 or self.kl_cap <= 0 or self.deviation_cap <= 0:
            raise ValueError("thresholds and caps must be positive")
        if self.kl_threshold > self.kl_cap:
            raise ValueError(
                f"kl_threshold {self.kl_threshold} exceeds kl_cap {self.kl_cap}"
            )
        weights = (self.w_similarity, self.w_validation, self.w_deviation)
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError(f"weights must be non-negative and sum to 1, got {weights}")
        if self.probe_batch_size < 1 or self.temperature <= 0 or self.window_rounds < 1:
            raise ValueError("probe batch, temperature and window must be positive")


@dataclass
class CoopReport:
    """Per-round cooperation/risk diagnostics."""

    kl_scores: np.ndarray
    deviation_scores: np.ndarray
    validation_scores: np.ndarray
    cooperation_levels: np.ndarray
    at_risk: np.ndarray
    risk_level: float
    measured_cooperation: float
    cluster_assignment: tuple[int, ...] = field(default=())


def kl_probe(
    local: Mlp, received: Mlp, probe_states: np.ndarray, temperature: float = 1.0
) -> float:
    """Mean KL(softmax(Q_local/T) || softmax(Q_received/T)) over the probe batch."""
    states = np.atleast_2d(probe_states)
    if states.shape[0] == 0:
        raise ValueError("probe batch is empty")
    p = softmax(local.forward(states), temperature)
    q = softmax(received.forward(states), temperature)
    return float(np.mean([kl_divergence(p[i], q[i]) for i in range(states.shape[0])]))


def deviation_score(local: Mlp, received: Mlp, deviation_cap: float) -> float:
    """1 at identical parameters, falling linearly to 0 at ``deviation_cap`` distance."""
    if deviation_cap <= 0:
        raise ValueError("deviation_cap must be positive")
    dist = l2_distance(received.get_params(), local.get_params())
    return 1.0 - min(dist / deviation_cap, 1.0)


def validation_score(local: Mlp, received: Mlp, states: np.ndarray) -> float:
    """Fraction of probe states where the two nets pick the same greedy action.

    RL has no labels, so greedy-action agreement on the client's own data
    stands in for validation accuracy.
    """
    states = np.atleast_2d(states)
    if states.shape[0] == 0:
        raise ValueError("validation sample is empty")
    a_local = np.argmax(local.forward(states), axis=1)
    a_received = np.argmax(received.forward(states), axis=1)
    return float(np.mean(a_local == a_received))


def cooperation_level(
    kl: float, dev_score: float, val_score: float, config: CoopConfig
) -> float:
    """Weighted mix of the three signals, clamped to [0, 1]."""
    similarity = 1.0 - min(max(kl, 0.0) / config.kl_cap, 1.0)
    c = (
        config.w_similarity * similarity
        + config.w_validation * min(max(val_score, 0.0), 1.0)
        + config.w_deviation * min(max(dev_score, 0.0), 1.0)
    )
    return min(max(c, 0.0), 1.0)


def risk_level(kl_scores, threshold: float) -> float:
    """Fraction of clients whose probe KL exceeds the risk threshold."""
    kls = np.asarray(kl_scores, dtype=np.float64)
    if kls.size == 0:
        raise ValueError("risk_level needs at least one client")
    return float(np.mean(kls > threshold))


def measured_cooperation(applied_levels_log: list[np.ndarray], window_rounds: int) -> float:
    """Mean applied cooperation per client over the trailing window of rounds.

    ``applied_levels_log`` holds, per past round, the per-client cooperation
    weights that actually entered aggregation.
    """
    if not applied_levels_log:
        raise ValueError("participation log is empty")
    tail = applied_levels_log[-window_rounds:]
    return float(np.mean([np.mean(levels) for levels in tail]))
