"""Hybrid simulator: integration accuracy, event handling, certification.

Long-horizon statistics of the reference scenarios live in the acceptance
suite; these tests pin the mechanics on short horizons.
"""

import math

import numpy as np
import pytest

from etcsim.errors import CertificationError, ConfigError
from etcsim.mat_core import mat_exp
from etcsim import simulate
from etcsim.simulate import (
    DelayModel,
    Disturbance,
    ScenarioConfig,
    integrate_step,
    run,
)

from conftest import TM_REF, X0_REF, make_perf, make_plant


def _cfg(**kw):
    base = dict(
        scenario="inst_bounded",
        x0=X0_REF,
        xhat0=np.zeros(2),
        horizon=5.0,
        pbar=20,
    )
    base.update(kw)
    return ScenarioConfig(**base)


# --------------------------------------------------------- exact subpaths


def test_estimate_follows_its_closed_form_flow(consts_nominal_p20):
    # x0 = xhat0 and no disturbance: the estimate is exactly e^{Abar t} x0
    # and the plant tracks it to integration accuracy, so nothing triggers
    cfg = _cfg(x0=X0_REF, xhat0=X0_REF, de0=1e-6, horizon=5.0, step=1e-3)
    trace = run(cfg, consts_nominal_p20)
    assert trace.events == []
    for i in (0, 1000, 2500, 5000):
        t = trace.t[i]
        exact = mat_exp(consts_nominal_p20.plant.Abar, t) @ X0_REF
        assert np.max(np.abs(trace.xhat[i] - exact)) < 1e-8
    # integrator truncation feeds the open-loop error flow (e^{3t} growth),
    # so the plant-state comparison is only meaningful before amplification
    for i in (0, 500, 1000):
        exact = mat_exp(consts_nominal_p20.plant.Abar, trace.t[i]) @ X0_REF
        assert np.max(np.abs(trace.x[i] - exact)) < 1e-6


def test_plant_step_has_fourth_order_accuracy():
    # Richardson: halving h shrinks the error by about 2^4 over a fixed span
    plant = make_plant()
    M = np.block([[plant.A, plant.B @ plant.K], [np.zeros((2, 2)), plant.Abar]])
    rng = np.random.default_rng(7)
    ratios = []
    for _ in range(20):
        z0 = rng.normal(size=4)
        exact = mat_exp(M, 0.02) @ z0

        def _advance(h, steps, z0=z0):
            x, xh = z0[:2].copy(), z0[2:].copy()
            t = 0.0
            for _ in range(steps):
                x, xh = integrate_step(x, xh, t, h, None, plant)
                t += h
            return np.concatenate([x, xh])

        e1 = np.max(np.abs(_advance(0.02, 1) - exact))
        e2 = np.max(np.abs(_advance(0.01, 2) - exact))
        if e1 > 1e-13:  # below this the quotient is roundoff noise
            ratios.append(e1 / e2)
    assert np.median(ratios) == pytest.approx(16.0, rel=0.35)


def test_estimate_path_is_step_independent(consts_nominal_p20):
    cfg_a = _cfg(x0=X0_REF, xhat0=X0_REF, de0=1e-6, horizon=2.0, step=1e-3)
    cfg_b = _cfg(x0=X0_REF, xhat0=X0_REF, de0=1e-6, horizon=2.0, step=2e-3)
    tr_a = run(cfg_a, consts_nominal_p20)
    tr_b = run(cfg_b, consts_nominal_p20)
    # shared grid times: every other sample of the finer run
    assert np.max(np.abs(tr_a.xhat[::2] - tr_b.xhat)) < 1e-10


def test_identical_configs_give_byte_identical_csv(tmp_path, consts_nominal_p20):
    cfg = _cfg(horizon=3.0)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    ea, eb = tmp_path / "ea.csv", tmp_path / "eb.csv"
    run(cfg, consts_nominal_p20).write_samples_csv(a)
    run(cfg, consts_nominal_p20).write_samples_csv(b)
    run(cfg, consts_nominal_p20).write_events_csv(ea)
    run(cfg, consts_nominal_p20).write_events_csv(eb)
    assert a.read_bytes() == b.read_bytes()
    assert ea.read_bytes() == eb.read_bytes()


# ----------------------------------------------------------- config gates


def test_negative_horizon_rejected():
    with pytest.raises(ConfigError):
        _cfg(horizon=-1.0)


def test_zero_horizon_yields_one_sample_and_no_events(consts_nominal_p20, tmp_path):
    trace = run(_cfg(horizon=0.0), consts_nominal_p20)
    assert trace.events == []
    assert trace.t.shape == (1,)
    trace.write_samples_csv(tmp_path / "s.csv")
    trace.write_events_csv(tmp_path / "e.csv")
    assert (tmp_path / "s.csv").read_text().count("\n") == 2  # header + one row
    assert (tmp_path / "e.csv").read_text().count("\n") == 1


def test_de0_must_cover_initial_estimate_gap():
    with pytest.raises(ConfigError):
        _cfg(de0=4.0)  # ||x0 - xhat0||_inf = 6


def test_initial_state_outside_envelope_rejected(consts_nominal_p20):
    cfg = _cfg(x0=np.array([60.0, -40.0]), de0=120.0)
    with pytest.raises(ConfigError):
        run(cfg, consts_nominal_p20)


def test_pk_override_below_minimum_rejected(consts_nominal_p20):
    # the first event of the reference 20-bit run needs 13 bits per axis
    cfg = _cfg(pk_override={1: 5})
    with pytest.raises(ConfigError, match="below the admissible minimum"):
        run(cfg, consts_nominal_p20)


def test_pk_override_above_budget_rejected(consts_nominal_p20):
    cfg = _cfg(pk_override={1: 21})
    with pytest.raises(ConfigError, match="exceeds the budget"):
        run(cfg, consts_nominal_p20)


def test_delay_beyond_ceiling_rejected(consts_nominal_p20):
    cfg = _cfg(
        scenario="noninst_bounded",
        delay=DelayModel.constant(2.0 * TM_REF),
        horizon=1.0,
    )
    with pytest.raises(ConfigError):
        run(cfg, consts_nominal_p20)


def test_proportional_delay_is_capped():
    model = DelayModel.proportional(per_bit=1e-4, cap=1e-3)
    assert model.delay(3, 2) == pytest.approx(6e-4)
    assert model.delay(20, 2) == pytest.approx(1e-3)  # 4e-3 uncapped


def test_disturbance_signal_respects_its_bound():
    dist = Disturbance.sincos(0.01)
    ts = np.linspace(0.0, 40.0, 1001)
    norms = np.linalg.norm(dist.sample_grid(ts), axis=1)
    assert np.allclose(norms, 0.01, atol=1e-15)

    table = Disturbance.table(
        knots_t=[0.0, 1.0, 2.0], knots_v=[[0.0, 0.01], [0.01, 0.0], [0.0, 0.0]], nu=0.01
    )
    assert table.sample(0.5) == pytest.approx([0.005, 0.005])
    assert table.sample(5.0) == pytest.approx([0.0, 0.0])  # clamped past the table


# --------------------------------------------------------------- the runs


def test_nonzero_start_time_offsets_the_grid(consts_nominal_p20):
    trace = run(_cfg(t0=5.0, horizon=2.0), consts_nominal_p20)
    assert trace.t[0] == 5.0
    assert trace.t[-1] == pytest.approx(7.0)
    assert trace.Vd[0] == pytest.approx(consts_nominal_p20.perf.Vd0)
    for ev in trace.events:
        assert ev.t_send > 5.0


def test_samples_csv_stride_keeps_final_row(tmp_path, consts_nominal_p20):
    trace = run(_cfg(horizon=1.0, step=1e-3), consts_nominal_p20)
    path = tmp_path / "s.csv"
    trace.write_samples_csv(path, stride=7)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:3] == ["t", "x1", "x2"]
    assert float(lines[-1].split(",")[0]) == trace.t[-1]
    # repr-exact values round-trip
    row1 = lines[1].split(",")
    assert float(row1[1]) == trace.x[0, 0]


def test_every_reception_is_synchronized(consts_disturbed):
    cfg = _cfg(
        scenario="noninst_bounded",
        horizon=4.0,
        delay=DelayModel.constant(TM_REF),
        disturbance=Disturbance.sincos(0.01),
    )
    trace = run(cfg, consts_disturbed)
    assert trace.events, "expected at least one transmission"
    for ev in trace.events:
        assert ev.received
        assert ev.sync is True
        assert ev.t_receive == pytest.approx(ev.t_send + TM_REF)


def test_event_ledger_is_strictly_ordered(consts_nominal_p20):
    trace = run(_cfg(horizon=8.0), consts_nominal_p20)
    tks = trace.transmission_times()
    assert tks.size >= 2
    assert np.all(np.diff(tks) > 0.0)
    assert np.all(np.diff(trace.reception_times()) > 0.0)
    ks = [ev.k for ev in trace.events]
    assert ks == list(range(1, len(ks) + 1))


def test_stalled_triggers_are_caught_by_certification(monkeypatch, consts_nominal_p20):
    # fault injection: silence both trigger paths; the open-loop plant must
    # then pierce the envelope and the per-block certifier must say so
    monkeypatch.setattr(
        simulate, "trigger_levels", lambda *a, **k: (0.0, -math.inf)
    )
    monkeypatch.setattr(
        simulate._Runner,
        "_levels_block",
        lambda self, B, EPS: (np.zeros_like(B), np.full_like(B, -math.inf)),
    )
    with pytest.raises(CertificationError, match="performance breach") as info:
        run(_cfg(horizon=5.0), consts_nominal_p20)
    partial = info.value.trace
    assert partial is not None
    assert partial.t.size > 0
    assert float(partial.V[-1]) > float(partial.Vd[-1])


def test_forced_overspend_delays_the_next_transmission(consts_nominal_p20):
    # spending the full budget on event 1 parks the error bound lower, so
    # the second transmission comes later than in the minimal-bits run
    cfg_min = _cfg(
        scenario="noninst_bounded", horizon=8.0, delay=DelayModel.constant(TM_REF)
    )
    cfg_over = _cfg(
        scenario="noninst_bounded",
        horizon=8.0,
        delay=DelayModel.constant(TM_REF),
        pk_override={1: 20},
    )
    tr_min = run(cfg_min, consts_nominal_p20)
    tr_over = run(cfg_over, consts_nominal_p20)
    assert tr_over.events[0].p == 20
    assert tr_min.events[0].p < 20
    assert tr_over.events[0].t_send == pytest.approx(tr_min.events[0].t_send, abs=1e-9)
    assert tr_over.events[1].t_send > tr_min.events[1].t_send
