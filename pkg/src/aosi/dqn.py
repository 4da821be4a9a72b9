"""Vanilla DQN in numpy: MLP with hand-written backprop, replay, Adam, target sync.

Checkpoint layout (``.npz``, all arrays stored verbatim so a save/load cycle
is bitwise exact):

    widths          int64[L+1]   layer widths, input first
    eval_<j>        float        evaluation params, j = 0..2L-1 as W0, b0, W1, b1, ...
    target_<j>      float        target params, same order
    adam_m_<j>      float        first-moment estimates
    adam_v_<j>      float        second-moment estimates
    adam_t          int64[1]     optimizer step count
    train_steps     int64[1]     training steps taken (drives target sync)
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .config import DqnConfig


class QNetwork:
    """Fully connected net, ReLU on hidden layers, identity output.

    Weights are stored as (fan_in, fan_out) so a batch ``x`` of shape
    (B, fan_in) maps through ``x @ W + b``.
    """

    def __init__(self, widths: Sequence[int], rng: np.random.Generator | None = None,
                 dtype=np.float64, params: Sequence[np.ndarray] | None = None):
        self.widths = tuple(int(w) for w in widths)
        self.dtype = np.dtype(dtype)
        shapes = []
        for fan_in, fan_out in zip(self.widths[:-1], self.widths[1:]):
            shapes += [(fan_in, fan_out), (fan_out,)]
        self.shapes = shapes
        # All parameters live in one flat buffer; ``params`` are views into it.
        self.flat = np.zeros(sum(int(np.prod(s)) for s in shapes), dtype=self.dtype)
        self.params = self.unflatten(self.flat)
        if params is not None:
            for dst, src in zip(self.params, params):
                dst[...] = src
            return
        if rng is None:
            rng = np.random.default_rng(0)
        for i, (fan_in, fan_out) in enumerate(zip(self.widths[:-1], self.widths[1:])):
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            self.params[2 * i][...] = rng.uniform(-limit, limit, size=(fan_in, fan_out))

    def unflatten(self, flat: np.ndarray) -> list[np.ndarray]:
        views, start = [], 0
        for shape in self.shapes:
            size = int(np.prod(shape))
            views.append(flat[start:start + size].reshape(shape))
            start += size
        return views

    @property
    def n_inputs(self) -> int:
        return self.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if x.shape[-1] != self.n_inputs:
            raise ValueError(f"state has length {x.shape[-1]}, network expects {self.n_inputs}")
        return x

    def forward(self, x) -> np.ndarray:
        x = self._check(x)
        h = x
        last = len(self.params) // 2 - 1
        for i in range(last + 1):
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < last:
                np.maximum(h, 0, out=h)
        return h

    def forward_cached(self, x) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping each layer's input for ``backward``."""
        h = self._check(x)
        inputs = []
        last = len(self.params) // 2 - 1
        for i in range(last + 1):
            inputs.append(h)
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < last:
                h = np.maximum(h, 0)
        return h, inputs

    def backward(self, inputs: list[np.ndarray], grad_out: np.ndarray,
                 out: np.ndarray | None = None) -> np.ndarray:
        """Flat gradient of sum(grad_out * output) w.r.t. all parameters."""
        flat = np.empty_like(self.flat) if out is None else out
        grads = self.unflatten(flat)
        g = grad_out
        for i in range(len(inputs) - 1, -1, -1):
            a = inputs[i]
            np.matmul(a.T, g, out=grads[2 * i])
            g.sum(axis=0, out=grads[2 * i + 1])
            if i > 0:
                g = (g @ self.params[2 * i].T) * (a > 0)
        return flat

    def copy(self) -> "QNetwork":
        return QNetwork(self.widths, dtype=self.dtype, params=[p.copy() for p in self.params])

    def load_from(self, other: "QNetwork") -> None:
        self.flat[...] = other.flat


def forward(net: QNetwork, state) -> np.ndarray:
    return net.forward(state)


class Batch(NamedTuple):
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray


def td_loss(batch: Batch, net: QNetwork, target_net: QNetwork, discount: float
            ) -> tuple[float, np.ndarray]:
    """Mean squared TD error and its flat gradient w.r.t. the evaluation net only."""
    n = len(batch.actions)
    if n == 0:
        raise ValueError("empty batch")
    target = batch.rewards + discount * target_net.forward(batch.next_states).max(axis=1)
    q, inputs = net.forward_cached(batch.states)
    rows = np.arange(n)
    diff = q[rows, batch.actions] - target
    grad_q = np.zeros_like(q)
    grad_q[rows, batch.actions] = 2.0 * diff / n
    return float(np.mean(diff * diff)), net.backward(inputs, grad_q)


class Adam:
    """Adam over a flat parameter vector (updated in place)."""

    def __init__(self, size: int, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, dtype=np.float64):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size, dtype=dtype)
        self.v = np.zeros(size, dtype=dtype)
        self.t = 0
        self._tmp = np.zeros(size, dtype=dtype)

    def step(self, flat_params: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        m, v, tmp = self.m, self.v, self._tmp
        m *= b1
        np.multiply(grad, 1 - b1, out=tmp)
        m += tmp
        v *= b2
        np.multiply(grad, grad, out=tmp)
        tmp *= 1 - b2
        v += tmp
        # lr * m_hat / (sqrt(v_hat) + eps), with the bias corrections folded into scalars
        c1, c2 = 1 - b1 ** self.t, np.sqrt(1 - b2 ** self.t)
        np.sqrt(v, out=tmp)
        tmp += self.eps * c2
        np.divide(m, tmp, out=tmp)
        tmp *= self.lr * c2 / c1
        flat_params -= tmp


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions with uniform sampling."""

    def __init__(self, capacity: int, state_dim: int, dtype=np.float64):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim), dtype=dtype)
        self.next_states = np.zeros((capacity, state_dim), dtype=dtype)
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity, dtype=dtype)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, state, action: int, reward: float, next_state) -> None:
        if len(state) != self.states.shape[1] or len(next_state) != self.states.shape[1]:
            raise ValueError("transition state length does not match buffer width")
        i = self._next
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Uniform draw with replacement."""
        idx = rng.integers(0, self._size, size=batch_size)
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx])

    def ordered(self) -> Batch:
        """All stored transitions, oldest first."""
        if self._size < self.capacity:
            idx = np.arange(self._size)
        else:
            idx = (np.arange(self.capacity) + self._next) % self.capacity
        return Batch(self.states[idx], self.actions[idx], self.rewards[idx], self.next_states[idx])


def epsilon(episode: int, eps_start: float = 0.2, eps_end: float = 0.99, episodes: int = 500) -> float:
    """Linear schedule from ``eps_start`` (first episode) to ``eps_end`` (last)."""
    if episodes <= 1:
        return eps_end
    frac = min(max(episode, 0), episodes - 1) / (episodes - 1)
    return eps_start + (eps_end - eps_start) * frac


def greedy_probability(cfg: DqnConfig, episode: int) -> float:
    value = epsilon(episode, cfg.eps_start, cfg.eps_end, cfg.episodes)
    return value if cfg.eps_is_greedy_prob else 1.0 - value


def act(net: QNetwork, state, greedy_prob: float, rng: np.random.Generator,
        mask: np.ndarray | None = None) -> int:
    """Epsilon-greedy choice; ``mask`` (bool per action) restricts both branches."""
    if rng.random() < greedy_prob:
        q = net.forward(state)
        if mask is not None:
            q = np.where(mask, q, -np.inf)
        return int(np.argmax(q))
    if mask is None:
        return int(rng.integers(net.n_outputs))
    return int(rng.choice(np.flatnonzero(mask)))


class TrainResult(NamedTuple):
    status: str           # "trained" or "warming up"
    loss: float | None
    synced: bool = False


def train_step(buffer: ReplayBuffer, net: QNetwork, target_net: QNetwork, opt: Adam,
               step_counter: int, cfg: DqnConfig, rng: np.random.Generator
               ) -> tuple[int, TrainResult]:
    """One minibatch update; copies eval -> target every ``target_sync_period`` steps."""
    if len(buffer) < max(cfg.warmup_transitions, cfg.minibatch):
        return step_counter, TrainResult("warming up", None)
    batch = buffer.sample(cfg.minibatch, rng)
    loss, grads = td_loss(batch, net, target_net, cfg.discount)
    opt.step(net.flat, grads)
    step_counter += 1
    synced = step_counter % cfg.target_sync_period == 0
    if synced:
        target_net.load_from(net)
    return step_counter, TrainResult("trained", loss, synced)


@dataclass
class DqnAgent:
    """Evaluation/target nets, optimizer, replay buffer and private RNG streams."""

    net: QNetwork
    target: QNetwork
    opt: Adam
    buffer: ReplayBuffer
    cfg: DqnConfig
    explore_rng: np.random.Generator
    sample_rng: np.random.Generator
    train_steps: int = 0
    last_loss: float | None = None

    @classmethod
    def create(cls, n_inputs: int, n_actions: int, cfg: DqnConfig,
               init_rng: np.random.Generator, explore_rng: np.random.Generator,
               sample_rng: np.random.Generator) -> "DqnAgent":
        dtype = np.dtype(cfg.precision)
        net = QNetwork((n_inputs, *cfg.hidden_layers, n_actions), init_rng, dtype=dtype)
        return cls(net, net.copy(), Adam(net.flat.size, lr=cfg.lr, dtype=dtype),
                   ReplayBuffer(cfg.buffer_capacity, n_inputs, dtype=dtype),
                   cfg, explore_rng, sample_rng)

    def act(self, state, greedy_prob: float, mask: np.ndarray | None = None) -> int:
        return act(self.net, state, greedy_prob, self.explore_rng, mask)

    def learn(self, state, action: int, reward: float, next_state) -> TrainResult:
        self.buffer.push(state, action, reward, next_state)
        self.train_steps, result = train_step(
            self.buffer, self.net, self.target, self.opt, self.train_steps, self.cfg, self.sample_rng)
        if result.loss is not None:
            self.last_loss = result.loss
        return result

    def save(self, path) -> None:
        save_checkpoint(path, self.net, self.target, self.opt, self.train_steps)

    def load(self, path) -> None:
        net, target, opt, steps = load_checkpoint(path, lr=self.cfg.lr)
        if net.widths != self.net.widths:
            raise ValueError(f"checkpoint widths {net.widths} != agent widths {self.net.widths}")
        self.net, self.target, self.opt, self.train_steps = net, target, opt, steps


def save_checkpoint(path, net: QNetwork, target: QNetwork, opt: Adam, train_steps: int) -> None:
    arrays: dict[str, np.ndarray] = {
        "widths": np.asarray(net.widths, dtype=np.int64),
        "adam_t": np.asarray([opt.t], dtype=np.int64),
        "train_steps": np.asarray([train_steps], dtype=np.int64),
    }
    for j, p in enumerate(net.params):
        arrays[f"eval_{j}"] = p
        arrays[f"target_{j}"] = target.params[j]
    for j, (m, v) in enumerate(zip(net.unflatten(opt.m), net.unflatten(opt.v))):
        arrays[f"adam_m_{j}"] = m
        arrays[f"adam_v_{j}"] = v
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}.npz")
    np.savez(tmp, **arrays)
    os.replace(tmp, path)


def load_checkpoint(path, lr: float = 0.001) -> tuple[QNetwork, QNetwork, Adam, int]:
    with np.load(path) as data:
        widths = tuple(int(w) for w in data["widths"])
        n = 2 * (len(widths) - 1)
        dtype = data["eval_0"].dtype
        net = QNetwork(widths, dtype=dtype, params=[data[f"eval_{j}"] for j in range(n)])
        target = QNetwork(widths, dtype=dtype, params=[data[f"target_{j}"] for j in range(n)])
        opt = Adam(net.flat.size, lr=lr, dtype=dtype)
        for j, (m, v) in enumerate(zip(net.unflatten(opt.m), net.unflatten(opt.v))):
            m[...] = data[f"adam_m_{j}"]
            v[...] = data[f"adam_v_{j}"]
        opt.t = int(data["adam_t"][0])
        steps = int(data["train_steps"][0])
    return net, target, opt, steps
