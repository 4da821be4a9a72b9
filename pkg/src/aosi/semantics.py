"""Semantic similarity surrogate, importance, semantic rate and latency.

Two similarity models are provided.  ``ParametricSimilarity`` is

    xi(k, snr) = (1 - exp(-r k)) * sigmoid((snr_dB - mid_dB) / slope_dB)

and ``TableSimilarity`` bilinearly interpolates a grid stored as CSV::

    k\\snr_db, -10, 0, 10, 20
    1,          0.01, 0.1, 0.4, 0.45
    2,          ...

(first row: SNR breakpoints in dB, first column: k values, body: xi).
Lookups outside the grid clamp to its edges.  Both map a linear SNR of 0
(-inf dB) to xi = 0.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .channel import snr_db
from .config import SimConfig, atomic_write_text


def _sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def _check_k(k: int, max_k: int) -> None:
    if not 1 <= k <= max_k:
        raise ValueError(f"symbols per word k={k} outside [1, {max_k}]")


@dataclass(frozen=True)
class ParametricSimilarity:
    ceil_rate: float = 0.6
    mid_db: float = 2.0
    slope_db: float = 2.0
    max_k: int = 8

    def __call__(self, k: int, snr_linear: float) -> float:
        _check_k(k, self.max_k)
        if snr_linear <= 0:
            return 0.0
        ceiling = -math.expm1(-self.ceil_rate * k)
        return ceiling * _sigmoid((snr_db(snr_linear) - self.mid_db) / self.slope_db)


class TableSimilarity:
    """Bilinear interpolation over a (k, snr_dB) grid, clamped at the edges."""

    def __init__(self, k_grid, snr_db_grid, values, max_k: int | None = None):
        self.k_grid = np.asarray(k_grid, dtype=float)
        self.snr_db_grid = np.asarray(snr_db_grid, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self.max_k = int(max_k if max_k is not None else self.k_grid[-1])
        self._validate()

    def _validate(self) -> None:
        kg, sg, v = self.k_grid, self.snr_db_grid, self.values
        if v.shape != (kg.size, sg.size):
            raise ValueError(f"table body shape {v.shape} != ({kg.size}, {sg.size})")
        if kg.size == 0 or sg.size == 0:
            raise ValueError("similarity table is empty")
        if np.any(np.diff(kg) <= 0) or np.any(np.diff(sg) <= 0):
            raise ValueError("table breakpoints must be strictly increasing")
        if not np.all(np.isfinite(v)) or v.min() < 0 or v.max() > 1:
            raise ValueError("table similarity values must lie in [0, 1]")
        if np.any(np.diff(v, axis=0) < 0):
            raise ValueError("table similarity must be nondecreasing in k")
        if np.any(np.diff(v, axis=1) < 0):
            raise ValueError("table similarity must be nondecreasing in SNR")

    def __call__(self, k: int, snr_linear: float) -> float:
        _check_k(k, self.max_k)
        if snr_linear <= 0:
            return 0.0
        row = _bracket(self.k_grid, float(k))
        col = _bracket(self.snr_db_grid, snr_db(snr_linear))
        (i0, i1, wi), (j0, j1, wj) = row, col
        v = self.values
        top = (1 - wj) * v[i0, j0] + wj * v[i0, j1]
        bottom = (1 - wj) * v[i1, j0] + wj * v[i1, j1]
        return float((1 - wi) * top + wi * bottom)

    @classmethod
    def from_csv(cls, path, max_k: int | None = None) -> "TableSimilarity":
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
        if len(rows) < 2:
            raise ValueError(f"{path}: similarity table needs a header row and at least one k row")
        snr_grid = [float(x) for x in rows[0][1:]]
        k_grid = [float(r[0]) for r in rows[1:]]
        body = [[float(x) for x in r[1:]] for r in rows[1:]]
        return cls(k_grid, snr_grid, body, max_k=max_k)

    def to_csv(self) -> str:
        return table_csv(self.k_grid, self.snr_db_grid, self.values)


def _bracket(grid: np.ndarray, x: float) -> tuple[int, int, float]:
    if x <= grid[0]:
        return 0, 0, 0.0
    if x >= grid[-1]:
        n = grid.size - 1
        return n, n, 0.0
    j = int(np.searchsorted(grid, x, side="right"))
    lo, hi = grid[j - 1], grid[j]
    return j - 1, j, (x - lo) / (hi - lo)


def table_csv(k_grid, snr_db_grid, values) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["k\\snr_db"] + [repr(float(s)) for s in snr_db_grid])
    for k, row in zip(k_grid, values):
        writer.writerow([repr(float(k))] + [repr(float(x)) for x in row])
    return buf.getvalue()


def export_table(model, k_values, snr_db_values, path) -> None:
    """Tabulate ``model`` on a grid and write it in the table CSV format."""
    values = [[model(int(k), 10 ** (s / 10)) for s in snr_db_values] for k in k_values]
    atomic_write_text(path, table_csv(k_values, snr_db_values, values))


def build_similarity(cfg: SimConfig):
    spec = cfg.similarity_model
    if spec.kind == "table":
        return TableSimilarity.from_csv(spec.path, max_k=cfg.max_symbols_per_word)
    return ParametricSimilarity(spec.ceil_rate, spec.mid_db, spec.slope_db, cfg.max_symbols_per_word)


def similarity(model, k: int, snr_linear: float) -> float:
    return model(k, snr_linear)


def importance(xi: float) -> float:
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"similarity {xi} outside [0, 1]")
    return 1.0 - xi


def semantic_rate(bandwidth_hz: float, info_per_sentence: float, k: int, words: int, xi: float) -> float:
    """Semantic units per second; 0 when xi = 0 (nothing can get through)."""
    return bandwidth_hz * info_per_sentence * xi / (k * words)


def latency(sentences: int, k: int, words: int, bandwidth_hz: float, xi: float) -> float:
    """Seconds to deliver a packet; +inf when xi = 0."""
    if xi <= 0:
        return math.inf
    return sentences * k * words / (bandwidth_hz * xi)


@dataclass(frozen=True, slots=True)
class SemanticLink:
    rate: float
    latency_s: float
    similarity: float
    importance: float
    symbols_per_word: int


def semantic_link(cfg: SimConfig, model, source: int, k: int, snr_linear: float) -> SemanticLink:
    xi = model(k, snr_linear)
    return SemanticLink(
        rate=semantic_rate(cfg.bandwidth_hz, cfg.semantic_info_per_sentence, k, cfg.words_per_sentence, xi),
        latency_s=latency(cfg.sentences_per_packet[source], k, cfg.words_per_sentence, cfg.bandwidth_hz, xi),
        similarity=xi,
        importance=1.0 - xi,
        symbols_per_word=k,
    )
