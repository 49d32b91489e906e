"""Deep Q-learning with experience replay and a periodically synced target net."""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .angles import AngleTrajectory
from .env import EnvState, ImitationEnv, Transition
from .nn import (AdamState, NetworkParams, NetworkSpec, adam_step, copy_params, forward,
                 forward_backward, init_network, mse_loss)


def substream_seed(seed: int, name: str) -> int:
    """Independent integer seed for the named random stream under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(name.encode()),))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


class ReplayBuffer:
    """Fixed-capacity ring of transitions; the oldest is evicted first."""

    def __init__(self, capacity: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.terminals = np.zeros(capacity, dtype=bool)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> None:
        i = self._next
        self.states[i] = t.state
        self.next_states[i] = t.next_state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.terminals[i] = t.terminal
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def _slot(self, i: int) -> int:
        oldest = self._next if self._size == self.capacity else 0
        return (oldest + i) % self.capacity

    def _get(self, slot: int) -> Transition:
        return Transition(self.states[slot].copy(), int(self.actions[slot]), float(self.rewards[slot]),
                          self.next_states[slot].copy(), bool(self.terminals[slot]))

    def __getitem__(self, i: int) -> Transition:
        """``i``-th oldest stored transition."""
        if not -self._size <= i < self._size:
            raise IndexError(i)
        return self._get(self._slot(i % self._size))

    def sample_slots(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self._size == 0:
            raise ValueError("cannot sample from an empty replay buffer")
        return rng.choice(self._size, size=min(n, self._size), replace=False)


def push_transition(buf: ReplayBuffer, t: Transition) -> None:
    buf.push(t)


def sample_batch(buf: ReplayBuffer, n: int, rng: np.random.Generator) -> list[Transition]:
    """Uniform sample of ``min(n, len(buf))`` distinct transitions."""
    return [buf._get(int(s)) for s in buf.sample_slots(n, rng)]


def _as_arrays(batch):
    if isinstance(batch, tuple):
        return batch
    return (np.array([t.state for t in batch]), np.array([t.action for t in batch]),
            np.array([t.reward for t in batch]), np.array([t.next_state for t in batch]),
            np.array([t.terminal for t in batch]))


def td_targets(batch, target_net: NetworkParams, gamma: float, n_actions: int | None = None) -> np.ndarray:
    """``r + gamma * max_a' Q_target(s', a')``, or just ``r`` for terminal steps.

    ``batch`` is a list of transitions or the tuple
    ``(states, actions, rewards, next_states, terminals)``.  Only the first
    ``n_actions`` outputs count as actions.
    """
    _, _, rewards, next_states, terminals = _as_arrays(batch)
    q_next = forward(target_net, next_states)
    if n_actions is not None:
        q_next = q_next[:, :n_actions]
    return rewards + gamma * np.where(terminals, 0.0, q_next.max(axis=1))


def select_action(net: NetworkParams, state, epsilon: float, rng: np.random.Generator,
                  n_actions: int | None = None) -> int:
    """Epsilon-greedy choice; ties go to the lowest index."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    n = net.spec.output_dim if n_actions is None else n_actions
    if rng.random() < epsilon:
        return int(rng.integers(n))
    return int(np.argmax(forward(net, state)[:n]))


def q_regression_step(params: NetworkParams, adam: AdamState, states, actions, targets):
    """One Adam step on the mean squared TD error of the taken actions."""
    rows = np.arange(len(actions))

    def loss_grad(out):
        loss, g = mse_loss(out[rows, actions], targets)
        full = np.zeros_like(out)
        full[rows, actions] = g
        return loss, full

    loss, grads = forward_backward(params, states, loss_grad)
    params, adam = adam_step(params, grads, adam)
    return params, adam, loss


@dataclass(frozen=True)
class TrainerConfig:
    epochs: int = 500
    gamma: float = 0.9
    batch_size: int = 64
    lr: float = 1e-3
    sync_every: int = 250
    capacity: int = 10_000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_fraction: float = 0.5
    reward_scale: float | None = None
    seed: int = 0

    def __post_init__(self):
        errors = self.validate()
        if errors:
            raise ValueError("; ".join(errors))

    def validate(self) -> list[str]:
        errors = []
        if self.epochs < 0:
            errors.append("trainer.epochs must be >= 0")
        if not 0.0 <= self.gamma <= 1.0:
            errors.append("trainer.gamma must be in [0, 1]")
        if self.batch_size < 1:
            errors.append("trainer.batch_size must be >= 1")
        if not self.lr > 0:
            errors.append("trainer.lr must be > 0")
        if self.sync_every < 1:
            errors.append("trainer.sync_every must be >= 1")
        if self.capacity < 1:
            errors.append("trainer.capacity must be >= 1")
        for name in ("eps_start", "eps_end"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                errors.append(f"trainer.{name} must be in [0, 1]")
        if not 0.0 <= self.eps_decay_fraction <= 1.0:
            errors.append("trainer.eps_decay_fraction must be in [0, 1]")
        if self.reward_scale is not None and not self.reward_scale > 0:
            errors.append("trainer.reward_scale must be > 0")
        return errors

    def epsilon(self, epoch: int) -> float:
        """Linear decay from ``eps_start`` to ``eps_end`` over the first
        ``eps_decay_fraction`` of the epochs, then constant."""
        span = round(self.eps_decay_fraction * self.epochs)
        if span <= 0 or epoch >= span:
            return self.eps_end
        return self.eps_start + (self.eps_end - self.eps_start) * (epoch / span)


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    mse: float
    rmse: float
    epsilon: float
    total_reward: float


@dataclass
class TrainResult:
    params: NetworkParams
    target: NetworkParams
    adam: AdamState
    log: list = field(default_factory=list)
    updates: int = 0


def train(env: ImitationEnv, spec: NetworkSpec, cfg: TrainerConfig,
          on_epoch: Callable[[int, TrainResult], None] | None = None,
          on_update: Callable[[TrainResult], None] | None = None) -> TrainResult:
    """Run ``cfg.epochs`` episodes of Q-learning on ``env``.

    Every environment step is followed by one minibatch update; the target
    network is refreshed every ``cfg.sync_every`` updates.  One epoch is one
    episode.  Rewards enter the replay memory multiplied by
    ``cfg.reward_scale``, by default one over the action step, so Q-values are
    measured in action steps; the log reports unscaled episode rewards.
    """
    if spec.input_dim != env.config.state_dim:
        raise ValueError(f"network input {spec.input_dim} != environment state size {env.config.state_dim}")
    if spec.output_dim < env.n_actions:
        raise ValueError(f"network has {spec.output_dim} outputs, environment needs {env.n_actions}")
    n_actions = env.n_actions
    scale = 1.0 / env.config.step if cfg.reward_scale is None else cfg.reward_scale
    params = init_network(spec, substream_seed(cfg.seed, "init"))
    result = TrainResult(params, copy_params(params), AdamState.zeros(params, lr=cfg.lr))
    explore = np.random.default_rng(substream_seed(cfg.seed, "exploration"))
    sampling = np.random.default_rng(substream_seed(cfg.seed, "sampling"))
    env_seed = substream_seed(cfg.seed, "env")
    buf = ReplayBuffer(cfg.capacity, spec.input_dim)

    for epoch in range(cfg.epochs):
        eps = cfg.epsilon(epoch)
        state = env.reset(seed=env_seed + epoch)
        s = env.encode_state(state)
        losses = []
        total = 0.0
        done = False
        while not done:
            a = select_action(result.params, s, eps, explore, n_actions)
            state, r, done = env.step(state, a)
            s2 = env.encode_state(state)
            buf.push(Transition(s, a, r * scale, s2, done))
            total += r
            s = s2

            idx = buf.sample_slots(cfg.batch_size, sampling)
            batch = (buf.states[idx], buf.actions[idx], buf.rewards[idx],
                     buf.next_states[idx], buf.terminals[idx])
            y = td_targets(batch, result.target, cfg.gamma, n_actions)
            result.params, result.adam, loss = q_regression_step(
                result.params, result.adam, batch[0], batch[1], y)
            losses.append(loss)
            result.updates += 1
            if result.updates % cfg.sync_every == 0:
                result.target = copy_params(result.params)
            if on_update is not None:
                on_update(result)
        mse = float(np.mean(losses))
        result.log.append(EpochLog(epoch, mse, math.sqrt(mse), eps, total))
        if on_epoch is not None:
            on_epoch(epoch, result)
    return result


@dataclass(frozen=True)
class Rollout:
    trajectory: AngleTrajectory
    actions: tuple
    rewards: tuple
    total_reward: float
    first_error: float
    last_error: float
    states: tuple = field(repr=False, default=())


def greedy_rollout(net: NetworkParams | Callable, env: ImitationEnv, seed: int | None = None) -> Rollout:
    """One episode always taking the highest-valued action.

    ``net`` may also be a callable mapping an encoded state to action values,
    which is handy for hand-built policies.
    """
    q = net if callable(net) else (lambda s: forward(net, s))
    state = env.reset(seed=seed)
    states: list[EnvState] = [state]
    actions, rewards = [], []
    done = False
    while not done:
        a = int(np.argmax(np.asarray(q(env.encode_state(state)))[:env.n_actions]))
        state, r, done = env.step(state, a)
        states.append(state)
        actions.append(a)
        rewards.append(r)
    first = env.error(states[0].angles, 0)
    last = env.error(states[-1].angles, states[-1].t)
    return Rollout(env.executed(states), tuple(actions), tuple(rewards), float(sum(rewards)),
                   first, last, tuple(states))

