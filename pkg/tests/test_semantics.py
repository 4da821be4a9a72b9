import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from aosi.config import SimConfig, SimilaritySpec
from aosi.semantics import (ParametricSimilarity, TableSimilarity, build_similarity, export_table,
                            importance, latency, semantic_link, semantic_rate)


def db(x):
    return 10 ** (x / 10)


@pytest.fixture
def model():
    return ParametricSimilarity(0.6, 2.0, 2.0, max_k=8)


def test_similarity_examples(model):
    assert model(1, db(2.0)) == pytest.approx((1 - math.exp(-0.6)) * 0.5, rel=1e-12)
    assert model(1, db(2.0)) == pytest.approx(0.22559, abs=1e-5)
    assert model(8, db(10.0)) == pytest.approx(0.97393, abs=1e-5)
    big = ParametricSimilarity(0.6, 2.0, 2.0, max_k=200)
    assert big(200, db(200.0)) == pytest.approx(1.0, abs=1e-12)


def test_similarity_edges(model):
    assert model(3, 0.0) == 0.0
    with pytest.raises(ValueError):
        model(0, 10.0)
    with pytest.raises(ValueError):
        model(9, 10.0)


@given(k=st.integers(1, 7), g=st.floats(-20, 40))
def test_similarity_monotone(k, g):
    m = ParametricSimilarity(0.6, 2.0, 2.0, max_k=8)
    x = m(k, db(g))
    assert 0.0 <= x <= 1.0
    assert m(k + 1, db(g)) >= x
    assert m(k, db(g + 1.0)) >= x


def test_importance():
    assert importance(1.0) == 0.0
    assert importance(0.0) == 1.0
    assert importance(0.9) == pytest.approx(0.1)
    with pytest.raises(ValueError):
        importance(1.1)


def test_rate():
    assert semantic_rate(1e5, 5, 1, 20, 0.9) == pytest.approx(22500.0)
    assert semantic_rate(1e5, 5, 1, 20, 0.0) == 0.0
    assert semantic_rate(1e5, 5, 2, 20, 0.9) == pytest.approx(22500.0 / 2)


def test_latency():
    assert latency(150, 1, 20, 1e5, 0.9) == pytest.approx(1 / 30, rel=1e-12)
    assert latency(150, 1, 20, 1e5, 1.0) == pytest.approx(0.03, rel=1e-12)
    assert latency(150, 1, 20, 1e5, 0.0) == math.inf


@given(info=st.floats(0.1, 100), k=st.integers(1, 8), xi=st.floats(0.01, 1.0))
def test_latency_times_rate_is_payload(info, k, xi):
    # I cancels: T * R = c * I, so T does not depend on I.
    t = latency(150, k, 20, 1e5, xi)
    assert t * semantic_rate(1e5, info, k, 20, xi) == pytest.approx(150 * info, rel=1e-9)


def test_semantic_link(model):
    cfg = SimConfig(sources=1)
    link = semantic_link(cfg, model, 0, 2, db(10.0))
    assert link.similarity == pytest.approx(model(2, db(10.0)))
    assert link.importance == pytest.approx(1 - link.similarity)
    assert link.latency_s == pytest.approx(0.06 / link.similarity)


def test_table_interpolation_and_clamp():
    t = TableSimilarity([1, 2], [0.0, 10.0], [[0.1, 0.3], [0.2, 0.6]])
    assert t(1, db(0.0)) == pytest.approx(0.1)
    assert t(1, db(5.0)) == pytest.approx(0.2)
    assert t(2, db(5.0)) == pytest.approx(0.4)
    assert t(2, db(50.0)) == pytest.approx(0.6)
    assert t(1, db(-30.0)) == pytest.approx(0.1)
    assert t(1, 0.0) == 0.0


@pytest.mark.parametrize("values", [
    [[0.1, 0.3], [0.05, 0.6]],     # decreasing in k
    [[0.3, 0.1], [0.4, 0.6]],      # decreasing in SNR
    [[0.1, 1.3], [0.2, 1.4]],      # out of [0, 1]
    [[0.1, 0.3, 0.5], [0.2, 0.6, 0.7]],  # wrong shape
])
def test_table_validation(values):
    with pytest.raises(ValueError):
        TableSimilarity([1, 2], [0.0, 10.0], values)


def test_table_csv_roundtrip(tmp_path, model):
    path = tmp_path / "xi.csv"
    export_table(model, range(1, 9), np.arange(-10.0, 31.0, 1.0), path)
    table = TableSimilarity.from_csv(path)
    for k in (1, 4, 8):
        for g in (-10.0, 0.0, 7.0, 30.0):
            assert table(k, db(g)) == pytest.approx(model(k, db(g)), rel=1e-12)


def test_build_from_config(tmp_path, model):
    path = tmp_path / "xi.csv"
    export_table(model, range(1, 9), [0.0, 10.0, 20.0], path)
    cfg = SimConfig(sources=1, similarity_model=SimilaritySpec(kind="table", path=str(path)))
    assert isinstance(build_similarity(cfg), TableSimilarity)
    assert isinstance(build_similarity(SimConfig(sources=1)), ParametricSimilarity)
