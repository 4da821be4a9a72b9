"""Quasi-static block fading and received SNR."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, slots=True)
class ChannelDraw:
    gain_sq: float
    snr: float

    @property
    def snr_db(self) -> float:
        return snr_db(self.snr)


def draw_gain(rng: np.random.Generator) -> float:
    """|h|^2 for one (source, period): unit-mean exponential (Rayleigh envelope)."""
    return float(rng.exponential(1.0))


def snr(p: float, gain_sq: float, noise_var: float) -> float:
    if p <= 0:
        raise ValueError(f"transmit power must be positive, got {p}")
    if noise_var <= 0:
        raise ValueError(f"noise variance must be positive, got {noise_var}")
    return p * gain_sq / noise_var


def snr_db(snr_linear: float) -> float:
    return 10.0 * math.log10(snr_linear) if snr_linear > 0 else -math.inf


class RayleighSampler:
    """Per-source gain sampler owning its own stream."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def draw(self) -> float:
        return draw_gain(self.rng)


def channel_draw(p: float, gain_sq: float, noise_var: float) -> ChannelDraw:
    return ChannelDraw(gain_sq, snr(p, gain_sq, noise_var))
