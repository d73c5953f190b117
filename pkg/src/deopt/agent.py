"""Double-Q agent: replay memory, action selection and target computation."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from deopt.de import N_STRATEGIES, Strategy
from deopt.neural import AdamState, QNetwork, copy_weights, train_step


@dataclass
class Observation:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


@dataclass
class AgentConfig:
    epsilon: float = 0.1
    gamma: float = 0.99
    sync_period: int = 1000
    batch_size: int = 64
    warmup_size: int = 10_000
    memory_capacity: int = 100_000

    def __post_init__(self):
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.sync_period < 1:
            raise ValueError("sync period must be >= 1")


class ReplayMemory:
    """Capacity-bounded FIFO store of observations."""

    def __init__(self, capacity: int = 100_000):
        self.capacity = capacity
        self._items: deque[Observation] = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def push(self, obs: Observation) -> None:
        self._items.append(obs)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Observation]:
        """Uniform sample without replacement within one batch."""
        if len(self._items) < batch_size:
            raise ValueError(
                f"memory holds {len(self._items)} observations, need {batch_size}"
            )
        idx = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[int(j)] for j in idx]


def select_action(q: np.ndarray, epsilon: float, rng: np.random.Generator) -> Strategy:
    """Epsilon-greedy over the four Q-values; argmax breaks ties low."""
    if epsilon > 0 and rng.random() < epsilon:
        return Strategy(int(rng.integers(N_STRATEGIES)))
    return Strategy(int(np.argmax(q)))


def compute_targets(
    batch: list[Observation], primary: QNetwork, target: QNetwork, gamma: float
) -> np.ndarray:
    """Decoupled double-Q targets: primary picks the action, target scores it."""
    rewards = np.array([obs.reward for obs in batch])
    terminal = np.array([obs.terminal for obs in batch])
    targets = rewards.copy()
    if not terminal.all():
        live = np.flatnonzero(~terminal)
        next_states = np.stack([batch[j].next_state for j in live])
        best_actions = np.argmax(primary.forward(next_states), axis=1)
        q_hat = target.forward(next_states)[np.arange(live.size), best_actions]
        targets[live] += gamma * q_hat
    return targets


class DdqnAgent:
    """Owns the primary/target pair, the replay memory and the step counter."""

    def __init__(
        self,
        primary: QNetwork,
        config: AgentConfig,
        rng: np.random.Generator,
        learning_rate: float = 1e-4,
    ):
        self.primary = primary
        self.target = primary.clone()
        self.adam = AdamState(primary, learning_rate=learning_rate)
        self.config = config
        self.memory = ReplayMemory(config.memory_capacity)
        self.rng = rng
        self.step_count = 0

    def act(self, state: np.ndarray, epsilon: float | None = None) -> Strategy:
        eps = self.config.epsilon if epsilon is None else epsilon
        if eps >= 1.0:  # skip the forward pass when every action is random
            return Strategy(int(self.rng.integers(N_STRATEGIES)))
        return select_action(self.primary.forward(state), eps, self.rng)

    def observe(self, obs: Observation) -> float | None:
        """Store one observation and run one training step when possible.

        Returns the batch loss, or None while the memory is still below the
        batch size.
        """
        self.memory.push(obs)
        loss = None
        if len(self.memory) >= self.config.batch_size:
            batch = self.memory.sample(self.config.batch_size, self.rng)
            targets = compute_targets(batch, self.primary, self.target, self.config.gamma)
            states = np.stack([o.state for o in batch])
            actions = np.array([o.action for o in batch])
            loss = train_step(self.primary, self.adam, states, actions, targets)
        self.step_count += 1
        if self.step_count % self.config.sync_period == 0:
            copy_weights(self.primary, self.target)
        return loss
