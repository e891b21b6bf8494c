from __future__ import annotations

import json
import math

import numpy as np
import pytest

from avsched.estimator import (
    Gadget,
    GadgetSet,
    HardwareParams,
    SaturatedMemory,
    analytic_estimate,
    calibrate,
    comp_time,
    logical_cycle_time,
    qubit_budget_model,
    reference_hardware,
    scheduled_estimate,
    t_max,
    total_cycles,
    v_max,
)
from avsched.ir import Circuit, Gate

HW = HardwareParams.default()


def test_default_hardware_values():
    assert (HW.n_im, HW.r_im, HW.l_delay, HW.c_fiber, HW.p_f, HW.alpha) == (30, 1e9, 2000.0, 2e8, 0.005, 0.5)


def test_hardware_validation_and_loading(tmp_path):
    with pytest.raises(ValueError):
        HW.with_(p_f=0)
    with pytest.raises(ValueError):
        HW.with_(n_im=-1)
    p = tmp_path / "hw.toml"
    p.write_text("n_im = 60\np_f = 0.1\n")
    hw = HardwareParams.load(p)
    assert hw.n_im == 60 and hw.p_f == 0.1 and hw.r_im == 1e9
    j = tmp_path / "hw.json"
    j.write_text(json.dumps({"n_im": 30, "bogus": 1}))
    with pytest.raises(ValueError):
        HardwareParams.load(j)


def test_logical_cycle_time():
    assert logical_cycle_time(30, HW) == pytest.approx(3.0e-4, rel=1e-15)
    assert logical_cycle_time(1, HW) == pytest.approx(1.0e-5, rel=1e-15)
    assert logical_cycle_time(24, HW) == 2 * logical_cycle_time(12, HW)
    with pytest.raises(ValueError):
        logical_cycle_time(0, HW)


def test_v_max_hand_values():
    assert v_max(20, 0, HW) == pytest.approx(500.0, rel=1e-12)
    d = 10
    m_sat = 30e9 * 2000.0 / (2e8 * d * d)
    assert v_max(d, m_sat, HW) == pytest.approx(0.0, abs=1e-9)


def test_comp_time_hand_values():
    d = 7
    assert comp_time(30e9 / d**3, d, 0, HW) == pytest.approx(1.0, rel=1e-12)
    assert comp_time(3e10, 10, 0, HW) == pytest.approx(1000.0, rel=1e-12)
    with pytest.raises(SaturatedMemory):
        comp_time(1.0, 10, 30e9 * 2000.0 / (2e8 * 100), HW)


def test_t_max():
    assert t_max(20, HW) == pytest.approx(8000 / 3e10 * 500, rel=1e-12)
    for d in range(1, 61):
        ref = comp_time(v_max(d, 0, HW), d, 0, HW)
        assert abs(t_max(d, HW) - ref) <= 1e-12 * ref
    vals = [t_max(d, HW) for d in range(1, 80)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("n_im", [10, 20, 30, 45, 60])
def test_v_max_has_single_interior_maximum(n_im):
    hw = HW.with_(n_im=n_im)
    v = np.array([v_max(d, 114, hw) for d in range(1, 101)])
    i = int(np.argmax(v))
    assert 0 < i < len(v) - 1
    assert np.all(np.diff(v[: i + 1]) > 0) and np.all(np.diff(v[i:]) < 0)


def test_total_cycles():
    assert total_cycles(0, 5, 3) == 8
    assert total_cycles(15, 65, 1000) == 2_130_920


def test_qubit_budget_model():
    hw = reference_hardware()
    assert qubit_budget_model(hw, 32) == 188
    assert qubit_budget_model(hw, 16) == 4 * 188
    budgets = [qubit_budget_model(hw, d) for d in range(1, 100)]
    assert all(b <= a for a, b in zip(budgets, budgets[1:]))
    bare = 30e9 * 2000.0 / (2e8 * 32**2)
    assert hw.calibration == pytest.approx(188 / bare)
    assert calibrate(HW, 300, 20).calibration == pytest.approx(300 / (30e9 * 2000.0 / (2e8 * 400)))


def test_analytic_zero_volume():
    est = analytic_estimate(0, 0, HW)
    assert est.ok and est.distance == 1 and est.time_s == 0


def test_analytic_memory_allowance():
    assert analytic_estimate(100, 95, HW).memory == 114


def _dense_scan(V, m, hw, d_max=100):
    for d in range(1, d_max + 1):
        if V < v_max(d, m, hw):
            return d
    return None


@pytest.mark.parametrize("V", [10.0, 1e3, 3.3e5, 1e8, 1e11])
@pytest.mark.parametrize("m_max", [0, 40, 98])
def test_analytic_matches_dense_scan(V, m_max):
    est = analytic_estimate(V, m_max, HW)
    m = math.ceil(1.2 * m_max)
    d = _dense_scan(V, m, HW)
    assert est.ok == (d is not None)
    if d is not None:
        assert est.distance == d
        assert V < v_max(d, m, HW)
        assert d == 1 or V >= v_max(d - 1, m, HW)
        assert est.time_s == pytest.approx(comp_time(V, d, m, HW))


def test_analytic_failure_reports_closest_distance():
    small = HW.with_(n_im=0.001)
    est = analytic_estimate(1e12, 50, small, d_max=40)
    assert not est.ok
    gaps = [abs(1e12 - v_max(d, 60, small)) for d in range(1, 41)]
    assert est.distance == 1 + int(np.argmin(gaps))
    assert est.to_dict()["d_delta_min"] == est.distance


def _tiny_gadgets():
    c = Circuit([Gate("H", (0,)), Gate("CNOT", (1,), (0,)), Gate("T", (1,))], 2, "tiny")
    return GadgetSet([Gadget("tiny", c, 3)])


def test_scheduled_single_gadget():
    gs = _tiny_gadgets()
    est = scheduled_estimate(gs, HW, qubit_budget=lambda d: 20, descend_on_success=False)
    assert est.ok
    d = est.distance
    single = est.schedules["tiny"].n_cycles
    assert est.cycles == 3 * single
    assert est.time_s == pytest.approx(est.cycles * logical_cycle_time(d, HW))


def test_scheduled_failure_when_budget_is_tiny():
    est = scheduled_estimate(_tiny_gadgets(), HW, qubit_budget=lambda d: 1)
    assert not est.ok and est.status == "failure"
    tried = [a.distance for a in est.attempts]
    assert len(tried) == len(set(tried))


def test_scheduled_never_revisits_a_distance():
    # a budget that shrinks as the distance falls sends QOOMs downward forever
    gs = _tiny_gadgets()
    est = scheduled_estimate(gs, HW, qubit_budget=lambda d: 40 if d >= 12 else 1)
    tried = [a.distance for a in est.attempts]
    assert len(tried) == len(set(tried))


def test_gadget_set_accounting():
    gs = _tiny_gadgets()
    assert gs.pass_av == 1 + 4 + 2
    assert gs.total_av == 3 * gs.pass_av
    assert gs.m_max == 2
    with pytest.raises(ValueError):
        Gadget("bad", Circuit((), 0), 0)
