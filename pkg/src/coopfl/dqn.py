"""Deep Q-learning agent used by every small cell for sleep control.

Plain SGD on the mean squared TD error, epsilon-greedy behaviour, and a hard
(copy) target-network sync every ``target_sync_period`` gradient steps. No
momentum and no soft updates: fewer hidden hyperparameters and every step is
easy to verify against finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import Mlp, ParamVector


@dataclass
class Transition:
    """One MDP interaction: (s, a, r, s', terminal)."""

    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool = False


class ReplayBuffer:
    """Fixed-capacity ring of transitions with uniform no-replacement sampling."""

    def __init__(self, capacity: int):
        if capacity <= 0:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.size = 0
        self._next = 0
        self.states: np.ndarray | None = None
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.next_states: np.ndarray | None = None
        self.terminals = np.zeros(capacity, dtype=bool)

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> int:
        """Store a transition, evicting the oldest once full. Returns the slot index."""
        s = np.asarray(t.state, dtype=np.float64)
        if self.states is None:
            self.states = np.zeros((self.capacity, s.size))
            self.next_states = np.zeros((self.capacity, s.size))
        idx = self._next
        self.states[idx] = s
        self.actions[idx] = int(t.action)
        self.rewards[idx] = float(t.reward)
        self.next_states[idx] = np.asarray(t.next_state, dtype=np.float64)
        self.terminals[idx] = bool(t.terminal)
        self._next = (self._next + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        return idx

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        if batch_size > self.size:
            raise ValueError(f"batch {batch_size} exceeds buffer size {self.size}")
        return rng.choice(self.size, size=batch_size, replace=False)

    def batch(self, indices: np.ndarray):
        assert self.states is not None and self.next_states is not None
        return (
            self.states[indices],
            self.actions[indices],
            self.rewards[indices],
            self.next_states[indices],
            self.terminals[indices],
        )

    def recent_indices(self, n: int) -> np.ndarray:
        """Indices of the n most recently stored transitions, oldest first."""
        n = min(n, self.size)
        start = self._next - n
        return np.arange(start, self._next) % self.capacity

    def recent_states(self, n: int) -> np.ndarray:
        assert self.states is not None
        return self.states[self.recent_indices(n)]


def select_action(agent: "DqnAgent", state: np.ndarray, rng: np.random.Generator) -> int:
    """Epsilon-greedy action; greedy ties break toward the lowest index."""
    n_actions = agent.q_net.layer_sizes[-1]
    if agent.epsilon > 0.0 and rng.random() < agent.epsilon:
        return int(rng.integers(n_actions))
    return int(np.argmax(agent.q_net.forward(state)))


def td_targets(
    rewards: np.ndarray,
    next_states: np.ndarray,
    terminals: np.ndarray,
    target_net: Mlp,
    gamma: float,
) -> np.ndarray:
    """y_i = r_i, or r_i + gamma * max_a Q_target(s'_i, a) for non-terminal steps."""
    if len(rewards) == 0:
        raise ValueError("td_targets needs a non-empty batch")
    q_next = target_net.forward(np.atleast_2d(next_states))
    bootstrap = gamma * q_next.max(axis=1)
    return np.asarray(rewards, dtype=np.float64) + np.where(terminals, 0.0, bootstrap)


def q_loss_and_grad(
    net: Mlp, states: np.ndarray, actions: np.ndarray, targets: np.ndarray
) -> tuple[float, ParamVector]:
    """Mean squared TD error over the batch and its exact parameter gradient."""
    states = np.atleast_2d(states)
    q = net.forward(states)
    batch = states.shape[0]
    errors = q[np.arange(batch), actions] - targets
    loss = float(np.mean(errors**2))
    grad_out = np.zeros_like(q)
    grad_out[np.arange(batch), actions] = 2.0 * errors / batch
    return loss, net.backward(states, grad_out)


def epsilon_at(step: int, total_steps: int, start: float, end: float, fraction: float) -> float:
    """Linear anneal from start to end over the first ``fraction`` of training."""
    horizon = max(1, int(total_steps * fraction))
    if step >= horizon:
        return end
    return start + (end - start) * (step / horizon)


class DqnAgent:
    """Q-net plus frozen target copy, with the sync/step bookkeeping."""

    def __init__(
        self,
        q_net: Mlp,
        gamma: float,
        learning_rate: float,
        target_sync_period: int,
        epsilon: float = 1.0,
    ):
        if not 0.0 <= gamma < 1.0:
            raise ValueError(f"gamma must be in [0, 1), got {gamma}")
        if learning_rate < 0.0:
            raise ValueError(f"learning rate must be >= 0, got {learning_rate}")
        if target_sync_period <= 0:
            raise ValueError(f"target sync period must be positive, got {target_sync_period}")
        self.q_net = q_net
        self.target_net = q_net.copy()
        self.gamma = float(gamma)
        self.learning_rate = float(learning_rate)
        self.target_sync_period = int(target_sync_period)
        self.epsilon = float(epsilon)
        self.train_steps = 0

    def sync_target(self) -> None:
        self.target_net.set_params(self.q_net.get_params())

    def train_step(
        self, buffer: ReplayBuffer, batch_size: int, rng: np.random.Generator
    ) -> float | None:
        """One SGD step on a sampled batch; returns the loss, or None when the
        buffer cannot fill a batch (signalling a no-op, distinct from loss 0)."""
        if len(buffer) < batch_size:
            return None
        idx = buffer.sample_indices(batch_size, rng)
        states, actions, rewards, next_states, terminals = buffer.batch(idx)
        targets = td_targets(rewards, next_states, terminals, self.target_net, self.gamma)
        loss, grad = q_loss_and_grad(self.q_net, states, actions, targets)
        if self.learning_rate != 0.0:
            params = self.q_net.get_params()
            self.q_net.set_params(
                ParamVector(params.values - self.learning_rate * grad.values, params.layout)
            )
        self.train_steps += 1
        if self.train_steps % self.target_sync_period == 0:
            self.sync_target()
        return loss
