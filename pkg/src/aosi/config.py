"""Run parameters: validation, YAML load/save, fingerprints and seed derivation.

A config file has up to three top-level sections::

    sim:                     # physical and protocol parameters (SimConfig)
      sources: 3             # required
      sampling_interval_s: 0.1
      gen_prob: 0.8          # scalar, or one value per source
      similarity_model:
        kind: parametric     # or: {kind: table, path: xi.csv}
        ceil_rate: 0.6
        mid_db: 2.0
        slope_db: 2.0
    dqn:                     # learner hyper-parameters (DqnConfig)
      episodes: 500
    oracle:                  # tiny-instance generator for the `oracle` command
      instances: 50

Every field except ``sim.sources`` has a default; see ``SimConfig`` and
``DqnConfig`` for the full list.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

_MASK64 = (1 << 64) - 1

PER_SOURCE_FIELDS = ("gen_prob", "sentences_per_packet", "tx_power_w")


class ConfigError(ValueError):
    """Invalid or unreadable configuration; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}" if message else field_name)
        self.field = field_name


@dataclass(frozen=True)
class SimilaritySpec:
    kind: str = "parametric"
    ceil_rate: float = 0.6
    mid_db: float = 2.0
    slope_db: float = 2.0
    path: str | None = None
    noise_std: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        if self.kind == "table":
            out: dict[str, Any] = {"kind": "table", "path": self.path}
        else:
            out = {
                "kind": "parametric",
                "ceil_rate": self.ceil_rate,
                "mid_db": self.mid_db,
                "slope_db": self.slope_db,
            }
        if self.noise_std:
            out["noise_std"] = self.noise_std
        return out


@dataclass(frozen=True)
class SimConfig:
    sources: int
    bandwidth_hz: float = 1e5
    sampling_interval_s: float = 0.1
    gen_prob: tuple[float, ...] = (0.8,)
    sentences_per_packet: tuple[int, ...] = (150,)
    words_per_sentence: int = 20
    bits_per_word: int = 40
    tx_power_w: tuple[float, ...] = (0.1,)
    noise_var: float = 0.01
    max_symbols_per_word: int = 8
    semantic_info_per_sentence: float = 5.0
    horizon_periods: int = 500
    master_seed: int = 0
    initial_importance: float = 1.0
    similarity_model: SimilaritySpec = field(default_factory=SimilaritySpec)

    def __post_init__(self):
        for name in PER_SOURCE_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, tuple):
                value = tuple(value) if isinstance(value, (list, np.ndarray)) else (value,)
            if len(value) == 1 and self.sources > 1:
                value = value * self.sources
            object.__setattr__(self, name, value)
        _validate_sim(self)

    @property
    def tau(self) -> float:
        return self.sampling_interval_s

    def with_sources(self, sources: int) -> "SimConfig":
        """Copy with a different source count; per-source values must be uniform."""
        updates: dict[str, Any] = {"sources": sources}
        for name in PER_SOURCE_FIELDS:
            values = getattr(self, name)
            if len(set(values)) != 1:
                raise ConfigError(name, "per-source values differ; cannot resize source set")
            updates[name] = (values[0],) * sources
        return dataclasses.replace(self, **updates)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if f.name == "similarity_model":
                value = value.to_dict()
            elif f.name in PER_SOURCE_FIELDS:
                value = value[0] if len(set(value)) == 1 else list(value)
            out[f.name] = value
        return out


@dataclass(frozen=True)
class DqnConfig:
    hidden_layers: tuple[int, int, int] = (64, 256, 64)
    buffer_capacity: int = 10000
    minibatch: int = 64
    discount: float = 0.9
    lr: float = 0.001
    eps_start: float = 0.2
    eps_end: float = 0.99
    # True: the eps schedule is the probability of acting greedily.
    eps_is_greedy_prob: bool = True
    target_sync_period: int = 100
    episodes: int = 500
    steps_per_episode: int = 500
    warmup_transitions: int = 500
    eval_episodes: int = 20
    eval_steps: int = 500
    mask_empty_buffers: bool = False
    aoi_scale_periods: float = 10.0
    snr_db_scale: float = 30.0
    precision: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(h) for h in self.hidden_layers))
        _validate_dqn(self)

    def to_dict(self) -> dict[str, Any]:
        out = dataclasses.asdict(self)
        out["hidden_layers"] = list(self.hidden_layers)
        return out


def _fail(name: str, message: str = "out of range"):
    raise ConfigError(name, f"{name} {message}")


def _positive(name: str, value, integer: bool = False):
    if isinstance(value, bool) or not isinstance(value, (int, float, np.integer, np.floating)):
        _fail(name, "must be a number")
    if integer and int(value) != value:
        _fail(name, "must be an integer")
    if not (math.isfinite(value) and value > 0):
        _fail(name, "must be > 0")


def _validate_sim(cfg: SimConfig) -> None:
    _positive("sources", cfg.sources, integer=True)
    for name in ("bandwidth_hz", "sampling_interval_s", "noise_var", "semantic_info_per_sentence"):
        _positive(name, getattr(cfg, name))
    for name in ("words_per_sentence", "bits_per_word", "max_symbols_per_word", "horizon_periods"):
        _positive(name, getattr(cfg, name), integer=True)
    for name in PER_SOURCE_FIELDS:
        values = getattr(cfg, name)
        if len(values) != cfg.sources:
            _fail(name, f"needs {cfg.sources} values, got {len(values)}")
    for p in cfg.gen_prob:
        if isinstance(p, bool) or not isinstance(p, (int, float)) or not 0.0 <= p <= 1.0:
            _fail("gen_prob")
    for c in cfg.sentences_per_packet:
        _positive("sentences_per_packet", c, integer=True)
    for p in cfg.tx_power_w:
        _positive("tx_power_w", p)
    if not isinstance(cfg.master_seed, int) or not 0 <= cfg.master_seed <= _MASK64:
        _fail("master_seed", "must be an unsigned 64-bit integer")
    if not 0.0 <= cfg.initial_importance <= 1.0:
        _fail("initial_importance")
    sm = cfg.similarity_model
    if sm.kind == "parametric":
        _positive("similarity_model.ceil_rate", sm.ceil_rate)
        _positive("similarity_model.slope_db", sm.slope_db)
        if not math.isfinite(sm.mid_db):
            _fail("similarity_model.mid_db", "must be finite")
    elif sm.kind == "table":
        if not sm.path:
            raise ConfigError("similarity_model.path", "similarity_model.path missing for table model")
    else:
        _fail("similarity_model.kind", "must be 'parametric' or 'table'")
    if sm.noise_std < 0:
        _fail("similarity_model.noise_std")


def _validate_dqn(cfg: DqnConfig) -> None:
    if len(cfg.hidden_layers) != 3:
        _fail("hidden_layers", "must have exactly three entries")
    for h in cfg.hidden_layers:
        _positive("hidden_layers", h, integer=True)
    for name in ("buffer_capacity", "minibatch", "target_sync_period", "episodes",
                 "steps_per_episode", "eval_episodes", "eval_steps"):
        _positive(name, getattr(cfg, name), integer=True)
    _positive("lr", cfg.lr)
    _positive("aoi_scale_periods", cfg.aoi_scale_periods)
    _positive("snr_db_scale", cfg.snr_db_scale)
    if not 0.0 <= cfg.discount < 1.0:
        _fail("discount")
    for name in ("eps_start", "eps_end"):
        if not 0.0 <= getattr(cfg, name) <= 1.0:
            _fail(name)
    if cfg.eps_start > cfg.eps_end:
        _fail("eps_start", "must not exceed eps_end")
    if cfg.minibatch > cfg.buffer_capacity:
        _fail("minibatch", "must not exceed buffer_capacity")
    if not isinstance(cfg.warmup_transitions, int) or cfg.warmup_transitions < 0:
        _fail("warmup_transitions", "must be a nonnegative integer")
    if cfg.precision not in ("float32", "float64"):
        _fail("precision", "must be float32 or float64")


def _build(cls, section: dict[str, Any], prefix: str):
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(section) - known)
    if unknown:
        raise ConfigError(f"{prefix}.{unknown[0]}", f"unknown field {prefix}.{unknown[0]}")
    for key, value in section.items():
        if value is None:
            raise ConfigError(key, f"missing value for {key}")
    try:
        return cls(**section)
    except TypeError as exc:
        raise ConfigError(prefix, str(exc)) from exc


def _similarity_from(raw: Any, base_dir: Path | None) -> SimilaritySpec:
    if not isinstance(raw, dict):
        raise ConfigError("similarity_model", "similarity_model must be a mapping")
    raw = dict(raw)
    kind = raw.pop("kind", "parametric")
    known = {f.name for f in dataclasses.fields(SimilaritySpec)} - {"kind"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"similarity_model.{unknown[0]}", f"unknown field similarity_model.{unknown[0]}")
    path = raw.get("path")
    if path is not None and base_dir is not None and not os.path.isabs(path):
        raw["path"] = str(base_dir / path)
    return SimilaritySpec(kind=kind, **raw)


def config_from_dict(data: dict[str, Any], base_dir: Path | None = None) -> tuple[SimConfig, DqnConfig]:
    """Validate a parsed config mapping (``sim``/``dqn``/``oracle`` sections)."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config root must be a mapping")
    unknown = sorted(set(data) - {"sim", "dqn", "oracle"})
    if unknown:
        raise ConfigError(unknown[0], f"unknown section {unknown[0]}")
    sim_raw = dict(data.get("sim") or {})
    if "sources" not in sim_raw:
        raise ConfigError("sources", "missing field sources")
    if "similarity_model" in sim_raw:
        sim_raw["similarity_model"] = _similarity_from(sim_raw["similarity_model"], base_dir)
    sim = _build(SimConfig, sim_raw, "sim")
    dqn = _build(DqnConfig, dict(data.get("dqn") or {}), "dqn")
    return sim, dqn


def read_config_file(path: str | os.PathLike) -> dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("path", f"cannot read config file {path}: {exc.strerror}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("path", f"config file {path} is not valid YAML") from exc
    return data if data is not None else {}


def load_config(path: str | os.PathLike) -> tuple[SimConfig, DqnConfig]:
    """Load and validate ``path``; relative table paths resolve against its directory."""
    data = read_config_file(path)
    return config_from_dict(data, Path(path).resolve().parent)


def config_to_dict(sim: SimConfig, dqn: DqnConfig) -> dict[str, Any]:
    return {"sim": sim.to_dict(), "dqn": dqn.to_dict()}


def save_config(sim: SimConfig, dqn: DqnConfig, path: str | os.PathLike) -> None:
    text = yaml.safe_dump(config_to_dict(sim, dqn), sort_keys=True)
    atomic_write_text(path, text)


def fingerprint(sim: SimConfig, dqn: DqnConfig | None = None) -> str:
    """Stable 16-hex-digit hash of the canonical config (plus table contents)."""
    payload: dict[str, Any] = {"sim": sim.to_dict()}
    if dqn is not None:
        payload["dqn"] = dqn.to_dict()
    sm = sim.similarity_model
    if sm.kind == "table" and sm.path:
        payload["sim"]["similarity_model"]["path"] = os.path.basename(sm.path)
        try:
            payload["table_sha256"] = hashlib.sha256(Path(sm.path).read_bytes()).hexdigest()
        except OSError:
            payload["table_sha256"] = None
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(master_seed: int, stream_label: str) -> int:
    """Derive a 64-bit stream seed from ``master_seed`` and a text label.

    The label is hashed with BLAKE2b (8-byte digest, little-endian) and mixed
    into the splitmix64 image of the master seed, followed by one more
    splitmix64 round.
    """
    label_hash = int.from_bytes(hashlib.blake2b(stream_label.encode(), digest_size=8).digest(), "little")
    return _splitmix64(_splitmix64(master_seed & _MASK64) ^ label_hash)


def make_rng(master_seed: int, stream_label: str) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(master_seed, stream_label)))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)
