"""Independent checks: grid integration of the AoSI curve and brute-force optima.

``exhaustive_optimum`` walks the full action tree of a tiny instance with
``engine.execute_period`` (no second accounting path), so any policy's value
on the same instance can be compared against the true minimum.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np

from .age import Reception, SourceServerView
from .channel import channel_draw
from .config import ConfigError, DqnConfig, SimConfig, atomic_write_text, derive_seed, make_rng
from .engine import (Observation, StateNorm, SystemState, build_state, execute_period, generate,
                     initial_state, make_policy)
from .policy import POLICY_NAMES, Action, ActionSpace, FixedSequencePolicy, Policy
from .semantics import build_similarity

MAX_SEQUENCES = 5 ** 6


def integrate_aosi(view: SourceServerView, tau: float, t_n: float,
                   reception: Reception | None = None, latency_s: float | None = None,
                   points: int = 1000) -> float:
    """Trapezoid-rule area under the AoSI trajectory over [t_n, t_n + tau].

    The trajectory is rebuilt from its definition, AoI times the importance of
    the packet currently held.  The delivery instant is inserted twice (left
    and right limits) so the jump is represented exactly.
    """
    ts = np.linspace(t_n, t_n + tau, points)
    aoi0, psi_old = view.aoi_at_period_start_s, view.importance
    if reception is None:
        return float(np.trapezoid((aoi0 + (ts - t_n)) * psi_old, ts))
    d = t_n + latency_s
    before = np.append(ts[ts < d], d)
    after = np.insert(ts[ts > d], 0, d)
    x = np.concatenate([before, after])
    y = np.concatenate([(aoi0 + (before - t_n)) * psi_old,
                        (after - reception.gen_time_s) * (1.0 - reception.similarity)])
    return float(np.trapezoid(y, x))


class EnumerationBoundsError(ValueError):
    pass


@dataclass(frozen=True)
class TinyInstance:
    """Deterministic tiny problem: fixed gains and generation schedule."""

    sim: SimConfig
    gains: tuple[tuple[float, ...], ...]        # [period][source]
    generation: tuple[tuple[bool, ...], ...]    # [period][source]

    def __post_init__(self):
        M, K, N = self.sim.sources, self.sim.max_symbols_per_word, self.periods
        if M > 2 or K > 2 or N > 6:
            raise EnumerationBoundsError(f"instance M={M}, K={K}, N={N} exceeds M<=2, K<=2, N<=6")
        if (M * K + 1) ** N > MAX_SEQUENCES:
            raise EnumerationBoundsError("action-sequence space too large to enumerate")
        if len(self.generation) != N or any(len(r) != M for r in self.gains + self.generation):
            raise ValueError("gains and generation must both be periods x sources")

    @property
    def periods(self) -> int:
        return len(self.gains)

    def draws(self, n: int):
        cfg = self.sim
        return tuple(channel_draw(cfg.tx_power_w[m], g, cfg.noise_var) for m, g in enumerate(self.gains[n]))

    def permuted(self, order: Sequence[int]) -> "TinyInstance":
        return TinyInstance(self.sim,
                            tuple(tuple(row[i] for i in order) for row in self.gains),
                            tuple(tuple(row[i] for i in order) for row in self.generation))

    def describe(self) -> dict[str, Any]:
        return {
            "sources": self.sim.sources,
            "max_symbols_per_word": self.sim.max_symbols_per_word,
            "periods": self.periods,
            "tau": self.sim.tau,
            "gains": [list(r) for r in self.gains],
            "generation": [[int(b) for b in r] for r in self.generation],
        }


def random_instance(base: SimConfig, rng: np.random.Generator, periods: int = 6,
                    sources: int | None = None, max_k: int | None = None) -> TinyInstance:
    M = int(sources if sources is not None else rng.integers(1, 3))
    K = int(max_k if max_k is not None else rng.integers(1, 3))
    sim = dataclasses.replace(base.with_sources(M), max_symbols_per_word=K, horizon_periods=periods)
    gains = rng.exponential(1.0, size=(periods, M))
    gen = rng.random((periods, M)) < np.asarray(sim.gen_prob)
    return TinyInstance(sim, tuple(tuple(float(g) for g in r) for r in gains),
                        tuple(tuple(bool(b) for b in r) for r in gen))


@dataclass(frozen=True)
class OracleResult:
    value: float
    actions: tuple[Action, ...]


def exhaustive_optimum(inst: TinyInstance, model=None) -> OracleResult:
    """Minimum long-term average AoSI over all action sequences.

    Depth-first in action-index order with strict improvement, so the
    returned argmin is the lexicographically first among exact ties.
    """
    cfg = inst.sim
    model = model if model is not None else build_similarity(cfg)
    space = ActionSpace(cfg.sources, cfg.max_symbols_per_word)
    actions = [space.decode(i) for i in range(space.size)]
    N, denom = inst.periods, inst.periods * cfg.sources
    draws = [inst.draws(n) for n in range(N)]
    best_value = math.inf
    best_seq: list[Action] = []
    prefix: list[Action] = []

    def walk(state: SystemState, total: float) -> None:
        nonlocal best_value, best_seq
        n = state.period
        if n == N:
            value = total / denom
            if value < best_value:
                best_value, best_seq = value, list(prefix)
            return
        state = generate(cfg, state, inst.generation[n])
        for a in actions:
            outcome, nxt = execute_period(cfg, model, state, draws[n], a)
            prefix.append(a)
            walk(nxt, total + sum(outcome.averages))
            prefix.pop()

    walk(initial_state(cfg), 0.0)
    return OracleResult(best_value, tuple(best_seq))


def run_instance(policy: Policy, inst: TinyInstance, model=None, norm: StateNorm | None = None) -> float:
    """Long-term average AoSI of ``policy`` on the instance (greedy, no learning)."""
    cfg = inst.sim
    model = model if model is not None else build_similarity(cfg)
    norm = norm if norm is not None else StateNorm(10 * cfg.tau)
    policy.begin_episode(1.0, learn=False)
    state = initial_state(cfg)
    total = 0.0
    for n in range(inst.periods):
        state = generate(cfg, state, inst.generation[n])
        draws = inst.draws(n)
        obs = Observation(n, state.views, draws, tuple(b is not None for b in state.buffers),
                          build_state(state.views, draws, norm))
        outcome, state = execute_period(cfg, model, state, draws, policy.select(obs))
        total = total + sum(outcome.averages)
    return total / (inst.periods * cfg.sources)


def policy_gap(policy: Policy, inst: TinyInstance, optimum: OracleResult | None = None, model=None) -> float:
    optimum = optimum if optimum is not None else exhaustive_optimum(inst, model)
    return run_instance(policy, inst, model) - optimum.value


@dataclass(frozen=True)
class OracleSettings:
    instances: int = 50
    periods: int = 6

    @classmethod
    def from_dict(cls, raw: dict[str, Any] | None) -> "OracleSettings":
        raw = dict(raw or {})
        unknown = sorted(set(raw) - {"instances", "periods"})
        if unknown:
            raise ConfigError(f"oracle.{unknown[0]}", f"unknown field oracle.{unknown[0]}")
        settings = cls(**raw)
        if settings.instances < 1 or not 1 <= settings.periods <= 6:
            raise ConfigError("oracle.periods", "oracle.periods must be in [1, 6], instances >= 1")
        return settings


def oracle_report(base: SimConfig, dqn: DqnConfig, settings: OracleSettings, seed: int,
                  policies: Sequence[str] = POLICY_NAMES) -> dict[str, Any]:
    """Optimum and per-policy gaps on randomly drawn tiny instances.

    Separate baselines use the myopic allocator; ``dqn-joint`` is an
    untrained network acting greedily (the gap bound holds for any policy).
    """
    rng = make_rng(seed, "oracle/instances")
    rows = []
    for i in range(settings.instances):
        inst = random_instance(base, rng, settings.periods)
        model = build_similarity(inst.sim)
        opt = exhaustive_optimum(inst, model)
        gaps = {}
        for name in policies:
            policy = make_policy(name, inst.sim, dqn, model, derive_seed(seed, f"oracle/policy/{i}"), ra="myopic")
            gaps[name] = run_instance(policy, inst, model) - opt.value
        rows.append({
            "instance": inst.describe(),
            "optimum": opt.value,
            "argmin": [None if a.source is None else [a.source, a.symbols_per_word] for a in opt.actions],
            "argmin_replay_gap": run_instance(FixedSequencePolicy(opt.actions), inst, model) - opt.value,
            "gaps": gaps,
        })
    return {
        "seed": seed,
        "instances": rows,
        "max_argmin_replay_gap": max(abs(r["argmin_replay_gap"]) for r in rows),
        "min_gap": {p: min(r["gaps"][p] for r in rows) for p in policies},
        "mean_gap": {p: float(np.mean([r["gaps"][p] for r in rows])) for p in policies},
    }


def write_report(report: dict[str, Any], path) -> None:
    atomic_write_text(path, json.dumps(report, indent=2, sort_keys=True) + "\n")
