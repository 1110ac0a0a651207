"""Action-selection policies and the DQN update.

Flip actions are ``0..M-1``; ``M`` is the redraw action.  Random branches of
every policy pick among the M flips only.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .dataset import Task
from .environment import extend_state
from .neuralnet import Block, NetworkSpec, QNetwork, RAdam, backward_and_step


class AgentKind(str, Enum):
    RANDOM = "random"
    STATE_EPS = "state-eps"
    STATE_PROB = "state-prob"
    BASIC = "basic"
    FUSION = "fusion"

    @property
    def trains(self) -> bool:
        return self in (AgentKind.BASIC, AgentKind.FUSION)


DEFAULT_WIDTHS = {Task.HUI: (512, 512, 512), Task.AR: (512, 512, 512), Task.FI: (4096,)}


def spec_for_task(task: Task | str, n_items: int, widths: Sequence[int] | None = None,
                  slope: float = 0.01) -> NetworkSpec:
    task = Task(task)
    widths = tuple(widths) if widths else DEFAULT_WIDTHS[task]
    is_ar = task is Task.AR
    return NetworkSpec(
        input_dim=2 * n_items if is_ar else n_items,
        output_dim=n_items + 1,
        blocks=tuple(Block(w, True, slope) for w in widths),
        input_batchnorm=is_ar,
    )


@dataclass(frozen=True)
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray


class ReplayMemory:
    """Fixed-capacity FIFO of experiences, stored as ring-buffer arrays."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self._next = 0
        self._size = 0
        self.pushes = 0

    def __len__(self) -> int:
        return self._size

    def push(self, state, action: int, reward: float, next_state) -> None:
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        self.pushes += 1

    def contents(self) -> list[Experience]:
        """Stored experiences, oldest first."""
        start = self._next if self._size == self.capacity else 0
        order = [(start + j) % self.capacity for j in range(self._size)]
        return [
            Experience(self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]),
                       self.next_states[i].copy())
            for i in order
        ]

    def sample(self, batch_size: int, rng: np.random.Generator):
        """Uniform sample with replacement."""
        idx = rng.integers(self._size, size=batch_size)
        return self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx]


@dataclass
class DecaySchedule:
    """value(k) = end + (start - end) * exp(-k / delta)."""

    start: float
    end: float
    delta: float = 200.0

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    def value(self, k_total: int) -> float:
        return self.end + (self.start - self.end) * math.exp(-k_total / self.delta)


@dataclass
class FusionSchedule(DecaySchedule):
    """Mixing weight for q' = lam * s' + (1 - lam) * q, with its own step counter."""

    k_total: int = 0

    def __post_init__(self):
        super().__post_init__()
        for v in (self.start, self.end):
            if not 0.0 <= v <= 1.0:
                raise ValueError("lambda bounds must lie in [0, 1]")

    @property
    def current(self) -> float:
        return self.value(self.k_total)


def _argmax(values: np.ndarray) -> int:
    return int(np.argmax(values))


def select_action_random(n_items: int, rng: np.random.Generator) -> int:
    return int(rng.integers(n_items))


def select_action_basic(net: QNetwork, state: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    n_items = net.spec.output_dim - 1
    if rng.random() < epsilon:
        return select_action_random(n_items, rng)
    return _argmax(net.predict(state))


def select_action_fusion(net: QNetwork, state: np.ndarray, schedule: FusionSchedule, epsilon: float,
                         rng: np.random.Generator, extended_state: np.ndarray | None = None) -> int:
    """Epsilon-greedy on q' = lam * s' + (1 - lam) * q; advances the schedule by one step."""
    n_items = net.spec.output_dim - 1
    lam = schedule.current
    schedule.k_total += 1
    if rng.random() < epsilon:
        return select_action_random(n_items, rng)
    s_ext = extend_state(state, n_items) if extended_state is None else extended_state
    q = net.predict(state)
    if s_ext.shape != q.shape:
        raise ValueError(f"extended state has {s_ext.shape[0]} dims, Q has {q.shape[0]}")
    return _argmax(lam * s_ext + (1.0 - lam) * q)


def select_action_state_eps(state: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    if rng.random() < epsilon:
        return select_action_random(len(state), rng)
    return _argmax(state)


def select_action_state_prob(state: np.ndarray, rng: np.random.Generator) -> int:
    total = float(np.sum(state))
    if total <= 0.0:
        return select_action_random(len(state), rng)
    return int(rng.choice(len(state), p=np.asarray(state) / total))


def train_step(net: QNetwork, target_net: QNetwork, memory: ReplayMemory, optimizer: RAdam,
               gamma: float, batch_size: int, rng: np.random.Generator) -> float | None:
    """One minibatch update toward r + gamma * max_a' Q_target(s', a').  None until memory fills."""
    if len(memory) < batch_size:
        return None
    states, actions, rewards, next_states = memory.sample(batch_size, rng)
    if gamma == 0.0:
        targets = rewards.copy()
    else:
        targets = rewards + gamma * target_net.predict(next_states).max(axis=1)
    return backward_and_step(net, optimizer, states, targets, actions)
