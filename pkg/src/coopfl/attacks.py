"""Adversary models injected into selected clients, for robustness evaluation.

All three attackers are static (fixed client ids for a whole run); staged
experiments vary how many of the pool are active per round. Model poisoning
and free-riding transform only the uploaded update, never the attacker's
private state; data poisoning corrupts the attacker's own replay stream.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .dqn import ReplayBuffer, Transition
from .nn import ParamVector, scale


class AttackKind(enum.Enum):
    NONE = "none"
    MODEL_POISON = "model_poison"
    DATA_POISON = "data_poison"
    FREE_RIDER = "free_rider"


@dataclass(frozen=True)
class AttackSpec:
    """Which clients attack, how, and from which round onward.

    ``schedule`` (optional) is a list of active-attacker counts, one per stage
    of ``rounds_per_stage`` rounds; when set it overrides the flat count of
    ``attacker_ids`` actually active each round (always the lowest-indexed
    ids of the pool first).
    """

    kind: AttackKind = AttackKind.NONE
    attacker_ids: tuple[int, ...] = ()
    gamma: float = 1.0
    flip_probability: float = 0.5
    activation_round: int = 0
    schedule: tuple[int, ...] | None = None
    rounds_per_stage: int = 8

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not 0.0 <= self.flip_probability <= 1.0:
            raise ValueError(f"flip probability must be in [0, 1], got {self.flip_probability}")
        if self.schedule is not None:
            if self.rounds_per_stage < 1:
                raise ValueError("rounds_per_stage must be >= 1")
            if any(k > len(self.attacker_ids) for k in self.schedule):
                raise ValueError("schedule stage exceeds the attacker pool")

    def active_attackers(self, round_index: int) -> tuple[int, ...]:
        """Ids attacking in this round.

        Flat attacks switch on at the activation round. Staged attacks start
        in the first stage's configuration immediately, so rounds before the
        activation round act as warm-up under the opening attacker count.
        """
        if self.kind is AttackKind.NONE:
            return ()
        if self.schedule is None:
            if round_index < self.activation_round:
                return ()
            return self.attacker_ids
        stage = max(0, round_index - self.activation_round) // self.rounds_per_stage
        stage = min(stage, len(self.schedule) - 1)
        return self.attacker_ids[: self.schedule[stage]]


def poison_model(update: ParamVector, gamma: float) -> ParamVector:
    """Sign-flipped, scaled update: reverses the direction of the descent."""
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    return scale(update, -gamma)


def free_ride(update: ParamVector) -> ParamVector:
    """Zero update of the same layout: nothing useful contributed."""
    return ParamVector(np.zeros_like(update.values), update.layout)


def corrupt_transition(
    t: Transition, flip_probability: float, n_actions: int, rng: np.random.Generator
) -> Transition:
    """With the given probability, negate the reward and swap in a random
    different action; otherwise return the transition unchanged."""
    if rng.random() >= flip_probability:
        return t
    new_action = int((t.action + rng.integers(1, n_actions)) % n_actions)
    return Transition(t.state, new_action, -t.reward, t.next_state, t.terminal)


def poison_data(
    buffer: ReplayBuffer,
    flip_probability: float,
    rng: np.random.Generator,
    n_actions: int = 3,
) -> ReplayBuffer:
    """Corrupt each stored transition independently, in place.

    Flipped entries get their reward negated and their action replaced by a
    uniformly random different one.
    """
    if not 0.0 <= flip_probability <= 1.0:
        raise ValueError(f"flip probability must be in [0, 1], got {flip_probability}")
    if buffer.size == 0 or flip_probability == 0.0:
        return buffer
    mask = rng.random(buffer.size) < flip_probability
    n_hit = int(mask.sum())
    if n_hit:
        buffer.rewards[:buffer.size][mask] *= -1.0
        offsets = rng.integers(1, n_actions, size=n_hit)
        buffer.actions[:buffer.size][mask] = (
            buffer.actions[:buffer.size][mask] + offsets
        ) % n_actions
    return buffer
