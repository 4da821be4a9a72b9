"""Slotted simulation: generation, channels, action execution, AoSI accounting.

Per period ``n`` (start ``t_n = n * tau``):

1. each source independently caches a fresh packet with probability P_m,
2. all M channel gains are drawn (the state needs every SNR),
3. the policy sees the state and picks (source, k) or idle,
4. the scheduled packet, if any, is delivered when its latency fits in tau,
5. every source's period average and the reward are recorded.

Random streams are labelled per (episode, purpose, source) so two policies
run with the same seed see identical generation and fading sequences.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import age
from .age import PeriodAreas, Reception, RunningAverage, SourceServerView
from .channel import ChannelDraw, channel_draw, snr_db
from .config import DqnConfig, SimConfig, atomic_write_text, derive_seed, fingerprint, make_rng
from .dqn import DqnAgent, greedy_probability
from .policy import (POLICY_NAMES, Action, ActionSpace, JointDqnPolicy, Policy,
                     SeparatePolicy)
from .semantics import build_similarity, latency

log = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class SourceBuffer:
    gen_time_s: float
    gen_index: int


@dataclass(frozen=True)
class SystemState:
    period: int
    views: tuple[SourceServerView, ...]
    buffers: tuple[SourceBuffer | None, ...]
    gen_counts: tuple[int, ...]


def initial_state(cfg: SimConfig) -> SystemState:
    M = cfg.sources
    view = age.initial_view(cfg.initial_importance)
    return SystemState(0, (view,) * M, (None,) * M, (0,) * M)


def generate(cfg: SimConfig, state: SystemState, flags: Sequence[bool]) -> SystemState:
    """Replace cached packets of sources whose generation flag is set."""
    t_n = state.period * cfg.tau
    buffers = list(state.buffers)
    counts = list(state.gen_counts)
    for m, new in enumerate(flags):
        if new:
            buffers[m] = SourceBuffer(t_n, counts[m])
            counts[m] += 1
    return SystemState(state.period, state.views, tuple(buffers), tuple(counts))


@dataclass(frozen=True)
class StateNorm:
    """Maps raw (AoSI, AoI, SNR) to network inputs and back."""

    aoi_scale_s: float
    snr_db_scale: float = 30.0
    aoi_clip: float = 4.0
    snr_clip: tuple[float, float] = (-1.0, 2.0)

    @classmethod
    def from_config(cls, cfg: SimConfig, dqn: DqnConfig) -> "StateNorm":
        return cls(dqn.aoi_scale_periods * cfg.tau, dqn.snr_db_scale)

    def normalize(self, aosi, aoi, snr_linear) -> np.ndarray:
        aosi = np.clip(np.asarray(aosi, dtype=float) / self.aoi_scale_s, 0.0, self.aoi_clip)
        aoi = np.clip(np.asarray(aoi, dtype=float) / self.aoi_scale_s, 0.0, self.aoi_clip)
        db = np.array([snr_db(s) for s in np.atleast_1d(snr_linear)])
        snr = np.clip(db / self.snr_db_scale, *self.snr_clip)
        return np.concatenate([aosi, aoi, snr])

    def denormalize(self, vector) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Returns (AoSI, AoI, SNR in dB); exact inside the clipping bounds."""
        v = np.asarray(vector, dtype=float)
        M = v.size // 3
        return v[:M] * self.aoi_scale_s, v[M:2 * M] * self.aoi_scale_s, v[2 * M:] * self.snr_db_scale


def build_state(views: Sequence[SourceServerView], draws: Sequence[ChannelDraw], norm: StateNorm) -> np.ndarray:
    """[AoSI_1..M, AoI_1..M, SNR_1..M], normalized."""
    return norm.normalize([v.aosi_at_period_start for v in views],
                          [v.aoi_at_period_start_s for v in views],
                          [d.snr for d in draws])


@dataclass(frozen=True)
class PeriodOutcome:
    period: int
    action: Action
    draws: tuple[ChannelDraw, ...]
    latency_s: float | None
    similarity: float | None
    success: bool
    areas: tuple[PeriodAreas, ...]
    averages: tuple[float, ...]
    reward: float


def execute_period(cfg: SimConfig, model, state: SystemState, draws: Sequence[ChannelDraw],
                   action: Action, xi_noise: float = 0.0) -> tuple[PeriodOutcome, SystemState]:
    """Apply one action to one period; pure given its inputs."""
    ActionSpace(cfg.sources, cfg.max_symbols_per_word).validate(action)
    tau = cfg.tau
    n = state.period
    t_n, t_next = n * tau, (n + 1) * tau
    sched = action.source
    T = xi = None
    success = False
    areas, averages, views = [], [], []
    for m, view in enumerate(state.views):
        packet = state.buffers[m]
        reception = None
        if m == sched and packet is not None:
            xi = model(action.symbols_per_word, draws[m].snr)
            if xi_noise:
                xi = min(max(xi + xi_noise, 0.0), 1.0)
            T = latency(cfg.sentences_per_packet[m], action.symbols_per_word,
                        cfg.words_per_sentence, cfg.bandwidth_hz, xi)
            if T <= tau:
                success = True
                reception = Reception(packet.gen_time_s, packet.gen_index, xi)
        if reception is not None:
            ar = age.period_areas_success(view, T, tau, xi, packet.gen_time_s, t_n, packet.gen_index)
        else:
            ar = age.period_areas_failure(view, tau)
        areas.append(ar)
        averages.append(age.period_average(ar, tau, scheduled=(m == sched)))
        views.append(age.advance(view, tau, t_next, reception))
    reward = -(sum(averages) / cfg.sources)
    outcome = PeriodOutcome(n, action, tuple(draws), T, xi, success, tuple(areas), tuple(averages), reward)
    return outcome, SystemState(n + 1, tuple(views), state.buffers, state.gen_counts)


@dataclass(frozen=True)
class Observation:
    period: int
    views: tuple[SourceServerView, ...]
    draws: tuple[ChannelDraw, ...]
    eligible: tuple[bool, ...]
    state: np.ndarray


class Environment:
    """Owns the random streams and system state of one simulated episode."""

    def __init__(self, cfg: SimConfig, model, norm: StateNorm, seed: int):
        self.cfg = cfg
        self.model = model
        self.norm = norm
        self.seed = seed
        self.state = initial_state(cfg)

    def reset(self, label: str) -> Observation:
        M = self.cfg.sources
        self._gen = [make_rng(self.seed, f"{label}/gen/{m}") for m in range(M)]
        self._chan = [make_rng(self.seed, f"{label}/channel/{m}") for m in range(M)]
        self._noise = make_rng(self.seed, f"{label}/xi-noise")
        self.state = initial_state(self.cfg)
        return self._observe()

    def _observe(self) -> Observation:
        cfg = self.cfg
        flags = [rng.random() < p for rng, p in zip(self._gen, cfg.gen_prob)]
        self.state = generate(cfg, self.state, flags)
        self.draws = tuple(channel_draw(cfg.tx_power_w[m], float(rng.exponential(1.0)), cfg.noise_var)
                           for m, rng in enumerate(self._chan))
        views = self.state.views
        return Observation(self.state.period, views, self.draws,
                           tuple(b is not None for b in self.state.buffers),
                           build_state(views, self.draws, self.norm))

    def step(self, action: Action) -> tuple[PeriodOutcome, Observation]:
        noise_std = self.cfg.similarity_model.noise_std
        noise = float(self._noise.normal(0.0, noise_std)) if noise_std else 0.0
        outcome, self.state = execute_period(self.cfg, self.model, self.state, self.draws, action, noise)
        return outcome, self._observe()


@dataclass
class EpisodeLog:
    rewards: np.ndarray
    averages: np.ndarray                  # (periods, sources)
    actions: list[Action]
    outcomes: list[PeriodOutcome] = field(default_factory=list)
    mean_loss: float | None = None

    @property
    def mean_reward(self) -> float:
        return float(np.mean(self.rewards))

    @property
    def long_term_avg_aosi(self) -> float:
        return age.long_term_average(self.averages)


def run_episode(env: Environment, policy: Policy, label: str, steps: int,
                greedy_prob: float = 1.0, learn: bool = False, keep_outcomes: bool = False) -> EpisodeLog:
    obs = env.reset(label)
    policy.begin_episode(greedy_prob, learn)
    rewards = np.empty(steps)
    averages = np.empty((steps, env.cfg.sources))
    actions, outcomes, losses = [], [], []
    agent = getattr(policy, "agent", None)
    for n in range(steps):
        action = policy.select(obs)
        outcome, next_obs = env.step(action)
        policy.feedback(obs, action, outcome.reward, next_obs)
        rewards[n] = outcome.reward
        averages[n] = outcome.averages
        actions.append(action)
        if keep_outcomes:
            outcomes.append(outcome)
        if learn and agent is not None and agent.last_loss is not None:
            losses.append(agent.last_loss)
        obs = next_obs
    return EpisodeLog(rewards, averages, actions, outcomes, float(np.mean(losses)) if losses else None)


def make_policy(name: str, cfg: SimConfig, dqn: DqnConfig, model, seed: int, ra: str = "dqn") -> Policy:
    """Build a policy by CLI name with its agent streams derived from ``seed``."""
    if name not in POLICY_NAMES:
        raise ValueError(f"unknown policy {name!r}; choose from {', '.join(POLICY_NAMES)}")

    def agent(n_in: int, n_out: int) -> DqnAgent:
        return DqnAgent.create(n_in, n_out, dqn, make_rng(seed, "agent/init"),
                               make_rng(seed, "agent/explore"), make_rng(seed, "agent/sample"))

    M, K = cfg.sources, cfg.max_symbols_per_word
    if name == "dqn-joint":
        space = ActionSpace(M, K)
        return JointDqnPolicy(space, agent(3 * M, space.size), dqn.mask_empty_buffers)
    ra_agent = agent(SeparatePolicy.ra_input_size(M), K) if ra == "dqn" else None
    return SeparatePolicy(name, cfg, model, ra_agent, make_rng(seed, "policy/scheduler"))


@dataclass(frozen=True)
class TrainRecord:
    episode: int
    greedy_prob: float
    mean_reward: float
    long_term_avg_aosi: float
    mean_loss: float | None


def train(policy: Policy, env: Environment, dqn: DqnConfig, on_episode=None) -> list[TrainRecord]:
    records = []
    if not policy.learns:
        return records
    for e in range(dqn.episodes):
        g = greedy_probability(dqn, e)
        ep = run_episode(env, policy, f"train/{e}", dqn.steps_per_episode, g, learn=True)
        rec = TrainRecord(e, g, ep.mean_reward, ep.long_term_avg_aosi, ep.mean_loss)
        records.append(rec)
        if on_episode is not None:
            on_episode(rec)
    return records


@dataclass(frozen=True)
class EvalSummary:
    long_term_avg_aosi: float
    mean_reward: float
    episodes: int


def evaluate(policy: Policy, env: Environment, dqn: DqnConfig) -> EvalSummary:
    """Greedy evaluation over fresh episodes; long-term average pooled over all of them."""
    acc = RunningAverage()
    rewards = []
    for e in range(dqn.eval_episodes):
        ep = run_episode(env, policy, f"eval/{e}", dqn.eval_steps, 1.0, learn=False)
        for row in ep.averages:
            acc.add(row.tolist())
        rewards.append(ep.rewards)
    return EvalSummary(acc.value, float(np.mean(np.concatenate(rewards))), dqn.eval_episodes)


def train_and_evaluate(cfg: SimConfig, dqn: DqnConfig, policy_name: str, seed: int, ra: str = "dqn",
                       model=None) -> tuple[list[TrainRecord], EvalSummary, Policy]:
    model = model if model is not None else build_similarity(cfg)
    env = Environment(cfg, model, StateNorm.from_config(cfg, dqn), seed)
    policy = make_policy(policy_name, cfg, dqn, model, seed, ra)
    records = train(policy, env, dqn)
    return records, evaluate(policy, env, dqn), policy


RESULT_COLUMNS = ("policy", "M", "tau", "replication", "episode",
                  "long_term_avg_aosi", "mean_reward", "config_fingerprint")


@dataclass(frozen=True)
class ResultRow:
    policy: str
    M: int
    tau: float
    replication: int
    episode: int | None
    long_term_avg_aosi: float
    mean_reward: float
    config_fingerprint: str

    def cells(self) -> list[str]:
        return [self.policy, str(self.M), repr(self.tau), str(self.replication),
                "" if self.episode is None else str(self.episode),
                repr(self.long_term_avg_aosi), repr(self.mean_reward), self.config_fingerprint]


def results_csv(rows: Sequence[ResultRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULT_COLUMNS)
    for row in rows:
        writer.writerow(row.cells())
    return buf.getvalue()


def write_results(rows: Sequence[ResultRow], path) -> None:
    atomic_write_text(path, results_csv(rows))


def read_results(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


SWEEP_GRIDS = {
    "sources": (1, 2, 3, 4, 5),
    "tau": (0.05, 0.10, 0.15, 0.20, 0.25),
}


def grid_config(base: SimConfig, axis: str, value) -> SimConfig:
    if axis == "sources":
        return base.with_sources(int(value))
    if axis == "tau":
        return dataclasses.replace(base, sampling_interval_s=float(value))
    raise ValueError(f"unknown sweep axis {axis!r}; use 'sources' or 'tau'")


def replication_seed(master_seed: int, axis: str, value, rep: int) -> int:
    return derive_seed(master_seed, f"sweep/{axis}={value!r}/rep{rep}")


def _sweep_job(job) -> ResultRow:
    cfg, dqn, axis, value, policy_name, rep, ra = job
    seed = replication_seed(cfg.master_seed, axis, value, rep)
    _, summary, _ = train_and_evaluate(cfg, dqn, policy_name, seed, ra)
    return ResultRow(policy_name, cfg.sources, cfg.tau, rep, None,
                     summary.long_term_avg_aosi, summary.mean_reward, fingerprint(cfg, dqn))


def run_sweep(base: SimConfig, dqn: DqnConfig, axis: str, reps: int,
              policies: Sequence[str] = POLICY_NAMES, values: Sequence | None = None,
              ra: str = "dqn", jobs: int = 1) -> list[ResultRow]:
    """Train and evaluate every (grid point, policy, replication); rows sorted by key."""
    values = SWEEP_GRIDS[axis] if values is None else values
    work = [(grid_config(base, axis, v), dqn, axis, v, p, r, ra)
            for v in values for p in policies for r in range(reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_job, work))
    else:
        rows = []
        for job in work:
            rows.append(_sweep_job(job))
            log.info("sweep %s=%s policy=%s rep=%d done", axis, job[3], job[4], job[5])
    return sorted(rows, key=lambda r: (r.policy, r.M, r.tau, r.replication))


def mean_and_se(values: Sequence[float]) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se
