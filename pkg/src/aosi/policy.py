"""Action encoding, baseline schedulers and the policies the engine drives.

Sources are 0-based here; symbols per word ``k`` run from 1 to K.  The joint
action index is 0 for idle and ``1 + m*K + (k-1)`` for (source m, k).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .age import SourceServerView
from .config import SimConfig
from .dqn import DqnAgent
from .semantics import latency

if TYPE_CHECKING:
    from .engine import Observation

POLICY_NAMES = ("random", "round-robin", "max-aoi", "max-aosi", "dqn-joint")
RA_MODES = ("dqn", "myopic")


class InvalidActionError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class Action:
    source: int | None = None
    symbols_per_word: int = 1

    @property
    def idle(self) -> bool:
        return self.source is None


IDLE = Action()


@dataclass(frozen=True)
class ActionSpace:
    sources: int
    max_k: int

    @property
    def size(self) -> int:
        return self.sources * self.max_k + 1

    def encode(self, action: Action) -> int:
        self.validate(action)
        if action.source is None:
            return 0
        return 1 + action.source * self.max_k + (action.symbols_per_word - 1)

    def decode(self, index: int) -> Action:
        if not 0 <= index < self.size:
            raise InvalidActionError(f"action index {index} outside [0, {self.size - 1}]")
        if index == 0:
            return IDLE
        m, k0 = divmod(index - 1, self.max_k)
        return Action(m, k0 + 1)

    def validate(self, action: Action) -> None:
        """Constraints C1-C3: at most one source, k in [1, K]."""
        if action.source is None:
            return
        if not 0 <= action.source < self.sources:
            raise InvalidActionError(f"source {action.source} outside [0, {self.sources - 1}]")
        if not 1 <= action.symbols_per_word <= self.max_k:
            raise InvalidActionError(f"k={action.symbols_per_word} outside [1, {self.max_k}]")


def schedule_random(rng: np.random.Generator, eligible: Sequence[int]) -> int | None:
    if len(eligible) == 0:
        return None
    return int(eligible[rng.integers(len(eligible))])


def schedule_round_robin(cursor: int, sources: int, eligible: Sequence[bool] | None = None
                         ) -> tuple[int | None, int]:
    """Next eligible source at or after ``cursor`` (cyclic) and the advanced cursor."""
    for step in range(sources):
        m = (cursor + step) % sources
        if eligible is None or eligible[m]:
            return m, (m + 1) % sources
    return None, cursor


def _argmax_eligible(values: Sequence[float], eligible: Sequence[bool] | None) -> int | None:
    best, best_value = None, -np.inf
    for m, v in enumerate(values):
        if (eligible is None or eligible[m]) and v > best_value:
            best, best_value = m, v
    return best


def schedule_max_aoi(views: Sequence[SourceServerView], eligible: Sequence[bool] | None = None) -> int | None:
    return _argmax_eligible([v.aoi_at_period_start_s for v in views], eligible)


def schedule_max_aosi(views: Sequence[SourceServerView], eligible: Sequence[bool] | None = None) -> int | None:
    return _argmax_eligible([v.aosi_at_period_start for v in views], eligible)


def myopic_symbols(cfg: SimConfig, model, source: int, snr_linear: float) -> int:
    """Largest-similarity k whose packet still fits in one period (k=1 if none fits)."""
    best_k, best_xi = 1, -1.0
    for k in range(1, cfg.max_symbols_per_word + 1):
        xi = model(k, snr_linear)
        t = latency(cfg.sentences_per_packet[source], k, cfg.words_per_sentence, cfg.bandwidth_hz, xi)
        if t <= cfg.tau and xi > best_xi:
            best_k, best_xi = k, xi
    return best_k


class Policy:
    """Engine-facing interface; learning policies override ``feedback``."""

    name = ""
    learns = False

    def begin_episode(self, greedy_prob: float = 1.0, learn: bool = False) -> None:
        self.greedy_prob = greedy_prob
        self.learning = learn and self.learns

    def select(self, obs: "Observation") -> Action:
        raise NotImplementedError

    def feedback(self, obs: "Observation", action: Action, reward: float, next_obs: "Observation") -> None:
        pass


class FixedSequencePolicy(Policy):
    """Replays a precomputed action list (used by the exhaustive oracle)."""

    name = "fixed"

    def __init__(self, actions: Sequence[Action]):
        self.actions = list(actions)

    def select(self, obs):
        return self.actions[obs.period]


class JointDqnPolicy(Policy):
    """One Q-network over (source, k) pairs plus idle."""

    name = "dqn-joint"
    learns = True

    def __init__(self, space: ActionSpace, agent: DqnAgent, mask_empty: bool = False):
        self.space = space
        self.agent = agent
        self.mask_empty = mask_empty
        self.greedy_prob = 1.0
        self.learning = False
        self._last_index = 0

    def _mask(self, obs) -> np.ndarray | None:
        if not self.mask_empty:
            return None
        mask = np.zeros(self.space.size, dtype=bool)
        mask[0] = True
        for m, ok in enumerate(obs.eligible):
            if ok:
                mask[1 + m * self.space.max_k: 1 + (m + 1) * self.space.max_k] = True
        return mask

    def select(self, obs):
        self._last_index = self.agent.act(obs.state, self.greedy_prob, self._mask(obs))
        return self.space.decode(self._last_index)

    def feedback(self, obs, action, reward, next_obs):
        if self.learning:
            self.agent.learn(obs.state, self._last_index, reward, next_obs.state)


class SeparatePolicy(Policy):
    """Rule-based scheduler with separate resource allocation.

    The allocator is either a shared DQN over k (input: the global state plus
    the scheduled source's three entries) or the myopic feasibility rule.
    A transition is completed when the next allocation decision is made, so
    its next-state uses the source the rule picks then.
    """

    learns = True

    def __init__(self, scheduler: str, cfg: SimConfig, model, agent: DqnAgent | None = None,
                 rng: np.random.Generator | None = None):
        if scheduler not in ("random", "round-robin", "max-aoi", "max-aosi"):
            raise ValueError(f"unknown scheduler {scheduler!r}")
        self.name = scheduler
        self.scheduler = scheduler
        self.cfg = cfg
        self.model = model
        self.agent = agent
        self.learns = agent is not None
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.greedy_prob = 1.0
        self.learning = False
        self._cursor = 0
        self._pending: list | None = None

    @staticmethod
    def ra_input_size(sources: int) -> int:
        return 3 * sources + 3

    def begin_episode(self, greedy_prob=1.0, learn=False):
        super().begin_episode(greedy_prob, learn)
        self._cursor = 0
        self._pending = None

    def schedule(self, obs) -> int | None:
        eligible = obs.eligible
        if self.scheduler == "random":
            return schedule_random(self.rng, [m for m, ok in enumerate(eligible) if ok])
        if self.scheduler == "round-robin":
            m, self._cursor = schedule_round_robin(self._cursor, len(eligible), eligible)
            return m
        if self.scheduler == "max-aoi":
            return schedule_max_aoi(obs.views, eligible)
        return schedule_max_aosi(obs.views, eligible)

    def ra_state(self, obs, m: int | None) -> np.ndarray:
        M = len(obs.views)
        own = obs.state[[m, M + m, 2 * M + m]] if m is not None else np.zeros(3)
        return np.concatenate([obs.state, own])

    def select(self, obs):
        m = self.schedule(obs)
        if self.agent is None:
            if m is None:
                return IDLE
            return Action(m, myopic_symbols(self.cfg, self.model, m, obs.draws[m].snr))
        state = self.ra_state(obs, m)
        if self.learning and self._pending is not None and self._pending[2] is not None:
            prev_state, prev_k, reward = self._pending
            self.agent.learn(prev_state, prev_k, reward, state)
        self._pending = None
        if m is None:
            return IDLE
        k_index = self.agent.act(state, self.greedy_prob)
        self._pending = [state, k_index, None]
        return Action(m, k_index + 1)

    def feedback(self, obs, action, reward, next_obs):
        if self._pending is not None:
            self._pending[2] = reward
