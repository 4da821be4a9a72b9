import numpy as np
import pytest

from aosi.age import Reception, SourceServerView, initial_view, period_areas_failure, period_areas_success
from aosi.config import DqnConfig, SimConfig, make_rng
from aosi.engine import make_policy
from aosi.oracle import (EnumerationBoundsError, OracleSettings, TinyInstance, exhaustive_optimum,
                         integrate_aosi, oracle_report, random_instance, run_instance)
from aosi.policy import IDLE, Action, FixedSequencePolicy
from aosi.semantics import build_similarity


def const_model(value):
    return lambda k, snr: value


def test_integration_matches_worked_case():
    rec = Reception(0.0, 0, 0.9)
    a = period_areas_success(initial_view(), 1 / 30, 0.1, 0.9, 0.0, 0.0)
    grid = integrate_aosi(initial_view(), 0.1, 0.0, rec, 1 / 30)
    assert grid == pytest.approx(1.0e-3, abs=1e-9)
    assert grid == pytest.approx(a.q_area + a.s_area, rel=1e-9)


def test_integration_zero_importance():
    v = SourceServerView(importance=0.0, aoi_at_period_start_s=0.4)
    assert integrate_aosi(v, 0.1, 1.0, Reception(0.9, 3, 1.0), 0.05) == 0.0


def test_integration_failure_case():
    v = SourceServerView(importance=0.2, aoi_at_period_start_s=0.1)
    assert integrate_aosi(v, 0.1, 0.5) == pytest.approx(period_areas_failure(v, 0.1).q_area, rel=1e-12)


def test_bounds_enforced():
    sim = SimConfig(sources=3, max_symbols_per_word=1)
    with pytest.raises(EnumerationBoundsError):
        TinyInstance(sim, ((1.0,) * 3,), ((True,) * 3,))
    sim = SimConfig(sources=1, max_symbols_per_word=1)
    with pytest.raises(EnumerationBoundsError):
        TinyInstance(sim, ((1.0,),) * 7, ((True,),) * 7)


def test_single_period_optimum():
    sim = SimConfig(sources=1, max_symbols_per_word=1)
    inst = TinyInstance(sim, ((1.0,),), ((True,),))
    opt = exhaustive_optimum(inst, const_model(0.9))
    assert opt.value == pytest.approx(0.01, abs=1e-15)
    assert opt.actions == (Action(0, 1),)


def test_empty_buffers_all_tie():
    sim = SimConfig(sources=1, max_symbols_per_word=2)
    inst = TinyInstance(sim, ((1.0,),) * 3, ((False,),) * 3)
    opt = exhaustive_optimum(inst, const_model(0.9))
    assert opt.value == pytest.approx((0.05 + 0.15 + 0.25) / 3)
    assert opt.actions == (IDLE,) * 3


def test_permutation_invariance():
    rng = np.random.default_rng(4)
    base = SimConfig(sources=2)
    for _ in range(5):
        inst = random_instance(base, rng, periods=4, sources=2, max_k=2)
        model = build_similarity(inst.sim)
        a = exhaustive_optimum(inst, model).value
        b = exhaustive_optimum(inst.permuted([1, 0]), model).value
        assert a == pytest.approx(b, rel=1e-12)


def test_replayed_argmin_and_random_gaps():
    rng = make_rng(1, "oracle-test")
    base = SimConfig(sources=1)
    dqn = DqnConfig()
    for i in range(100):
        inst = random_instance(base, rng, periods=5)
        model = build_similarity(inst.sim)
        opt = exhaustive_optimum(inst, model)
        assert run_instance(FixedSequencePolicy(opt.actions), inst, model) - opt.value == 0.0
        rand = make_policy("random", inst.sim, dqn, model, seed=i, ra="myopic")
        assert run_instance(rand, inst, model) - opt.value >= 0.0


def test_report():
    report = oracle_report(SimConfig(sources=2), DqnConfig(), OracleSettings(instances=5, periods=4), seed=3)
    assert len(report["instances"]) == 5
    assert all(g >= 0 for g in report["min_gap"].values())
    assert set(report["min_gap"]) == {"random", "round-robin", "max-aoi", "max-aosi", "dqn-joint"}
    assert "max-aosi" in report["instances"][0]["gaps"]


def test_settings_validation():
    assert OracleSettings.from_dict(None) == OracleSettings()
    with pytest.raises(ValueError):
        OracleSettings.from_dict({"periods": 7})
    with pytest.raises(ValueError):
        OracleSettings.from_dict({"bogus": 1})
