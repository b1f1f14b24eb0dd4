"""Rate accounting: volume lower bounds, zoom upper bounds, realized curves.

Frozen floats below are hand-derived for the reference design; each one
names its oracle inline. Simulation-backed checks run short horizons; the
full-length reference runs live in the acceptance suite.
"""

import math

import numpy as np
import pytest

from etcsim import rates
from etcsim.design import PerformanceSpec, PlantSpec, derive_constants
from etcsim.errors import ConfigError
from etcsim.simulate import (
    DelayModel,
    Disturbance,
    ScenarioConfig,
    SimTrace,
    TransmissionEvent,
    run,
)

from conftest import (
    A_REF,
    BETA_REF,
    DE0_REF,
    TM_REF,
    VD0_REF,
    X0_REF,
    make_perf,
    make_plant,
)

LOG2E = math.log2(math.e)
HORIZON_SHORT = 8.0


# ------------------------------------------------------------ short runs


@pytest.fixture(scope="module")
def trace_inst_p12():
    consts = derive_constants(make_plant(), make_perf(), pbar=12)
    cfg = ScenarioConfig(
        scenario="inst_bounded",
        x0=X0_REF,
        xhat0=np.zeros(2),
        horizon=HORIZON_SHORT,
        pbar=12,
    )
    return run(cfg, consts), consts


@pytest.fixture(scope="module")
def trace_inst_p20():
    consts = derive_constants(make_plant(), make_perf(), pbar=20)
    cfg = ScenarioConfig(
        scenario="inst_bounded",
        x0=X0_REF,
        xhat0=np.zeros(2),
        horizon=HORIZON_SHORT,
        pbar=20,
    )
    return run(cfg, consts), consts


@pytest.fixture(scope="module")
def trace_noninst_clean():
    consts = derive_constants(make_plant(), make_perf(), pbar=20, TM=TM_REF)
    cfg = ScenarioConfig(
        scenario="noninst_bounded",
        x0=X0_REF,
        xhat0=np.zeros(2),
        horizon=HORIZON_SHORT,
        pbar=20,
        delay=DelayModel.constant(TM_REF),
    )
    return run(cfg, consts), consts


@pytest.fixture(scope="module")
def trace_noninst_disturbed():
    consts = derive_constants(make_plant(0.01), make_perf(), pbar=20, TM=TM_REF)
    cfg = ScenarioConfig(
        scenario="noninst_bounded",
        x0=X0_REF,
        xhat0=np.zeros(2),
        horizon=HORIZON_SHORT,
        pbar=20,
        delay=DelayModel.constant(TM_REF),
        disturbance=Disturbance.sincos(0.01),
    )
    return run(cfg, consts), consts


# ------------------------------------------------- geometry of the bounds


def test_half_integer_gamma_values_match_math_gamma():
    for n in range(17):
        exact = rates._gamma_half_plus_one(n)
        assert exact == pytest.approx(math.gamma(n / 2.0 + 1.0), rel=1e-14)


def test_unit_ball_volumes_from_identity_shape():
    # oracle: classical unit-ball volumes 2, pi, 4 pi / 3
    assert rates.ball_volume_coefficient(np.eye(1)) == pytest.approx(2.0, rel=1e-14)
    assert rates.ball_volume_coefficient(np.eye(2)) == pytest.approx(math.pi, rel=1e-14)
    assert rates.ball_volume_coefficient(np.eye(3)) == pytest.approx(
        4.0 * math.pi / 3.0, rel=1e-14
    )


def test_ellipse_area_diag_shape():
    # semi-axes 1/2 and 1/3, area pi/6
    coeff = rates.ball_volume_coefficient(np.diag([4.0, 9.0]))
    assert coeff == pytest.approx(math.pi / 6.0, rel=1e-14)


def test_ellipse_area_random_spd_matches_axis_product():
    # area computed through eigenvalue semi-axes, independent of det()
    rng = np.random.default_rng(20260822)
    for _ in range(200):
        M = rng.normal(size=(2, 2))
        P = M @ M.T + 0.5 * np.eye(2)
        lam = np.linalg.eigvalsh(P)
        area = math.pi / math.sqrt(lam[0] * lam[1])
        assert rates.ball_volume_coefficient(P) == pytest.approx(area, rel=1e-10)


def test_ball_volume_rejects_indefinite_shape():
    with pytest.raises(ValueError):
        rates.ball_volume_coefficient(np.diag([1.0, -1.0]))


# -------------------------------------------------------- necessary curve


def test_necessary_offset_at_start(consts_nominal):
    # hand-derived: vol(E0) = 24^2 = 576, c_P = 6 pi / sqrt(17),
    # offset = log2(576 / (c_P * Vd0)) with Vd0 = 1.1 * 403/3
    c_p = 6.0 * math.pi / math.sqrt(17.0)
    expect = math.log2(576.0 / (c_p * VD0_REF))
    got = rates.necessary_bits(0.0, 0.0, 576.0, VD0_REF, A_REF, BETA_REF, consts_nominal.P)
    assert float(got) == pytest.approx(expect, abs=1e-12)
    assert float(got) == pytest.approx(-0.22997925968273916, abs=1e-12)


def test_necessary_rate_without_envelope_is_open_loop_entropy():
    # beta = 0 leaves tr(A) log2(e) = 5 log2(e)
    assert rates.necessary_asymptotic_rate(A_REF, 0.0) == pytest.approx(
        5.0 * LOG2E, rel=1e-14
    )


def test_reference_asymptotic_rate_value():
    # (tr A + n beta / 2) log2(e) with beta = 0.8 * 12 / (17 + sqrt(221))
    expect = (5.0 + BETA_REF) * LOG2E
    got = rates.necessary_asymptotic_rate(A_REF, BETA_REF)
    assert got == pytest.approx(expect, rel=1e-14)
    assert got == pytest.approx(7.64810278597539, abs=1e-11)
    # the commonly quoted 7.649 carries rounded intermediates; exact
    # arithmetic from the same constants lands on 7.6481
    assert got == pytest.approx(7.649, abs=1e-3)


def test_necessary_slope_by_finite_difference(consts_nominal):
    ts = np.linspace(0.0, 40.0, 4001)
    curve = rates.necessary_bits(ts, 0.0, 576.0, VD0_REF, A_REF, BETA_REF, consts_nominal.P)
    slopes = np.diff(curve) / np.diff(ts)
    target = rates.necessary_asymptotic_rate(A_REF, BETA_REF)
    assert np.max(np.abs(slopes - target)) < 1e-9


def test_necessary_accepts_scalar_and_array(consts_nominal):
    args = (0.0, 576.0, VD0_REF, A_REF, BETA_REF, consts_nominal.P)
    arr = rates.necessary_bits(np.array([0.0, 1.0, 2.0]), *args)
    assert arr.shape == (3,)
    for i, t in enumerate([0.0, 1.0, 2.0]):
        assert float(rates.necessary_bits(t, *args)) == arr[i]


def test_hypothesis_flag_not_a_throw():
    stable = np.array([[-3.0, 0.0], [0.0, -4.0]])
    assert not rates.volume_bound_hypothesis_holds(stable, 0.1)
    assert rates.volume_bound_hypothesis_holds(A_REF, BETA_REF)
    # the bound still evaluates for the flagged plant
    val = rates.necessary_bits(1.0, 0.0, 1.0, 1.0, stable, 0.1, np.eye(2))
    assert np.isfinite(val)


# ------------------------------------------------------- sufficient curves


def test_sufficient_floor_is_one_round_of_bits(consts_nominal):
    # starting exactly at the trigger level, the bound is n bits at t = t0
    de0 = consts_nominal.c * math.sqrt(VD0_REF)
    got = rates.sufficient_bits_inst(0.0, 0.0, de0, VD0_REF, consts_nominal)
    assert float(got) == pytest.approx(consts_nominal.n, abs=1e-12)


def test_sufficient_inst_refuses_disturbed_plant():
    consts = derive_constants(make_plant(0.01), make_perf(), pbar=20, TM=TM_REF)
    with pytest.raises(ConfigError):
        rates.sufficient_bits_inst(1.0, 0.0, DE0_REF, VD0_REF, consts)


def test_scalar_plant_closes_the_rate_gap():
    # for n = 1, ||A||_inf = tr(A) so both slopes are (a + beta/2) log2(e)
    plant = PlantSpec(A=[[1.0]], B=[[1.0]], K=[[-3.0]], Q=[[1.0]], nu=0.0)
    perf = PerformanceSpec(Vd0=10.0, beta=0.5)
    consts = derive_constants(plant, perf)
    nec_slope = rates.necessary_asymptotic_rate(plant.A, 0.5)
    suf_slope = consts.n * consts.theta_bar * LOG2E
    assert nec_slope == pytest.approx(suf_slope, rel=1e-14)


def test_realized_bits_sit_between_the_bounds(trace_inst_p12, trace_inst_p20):
    for trace, consts in (trace_inst_p12, trace_inst_p20):
        tk = trace.transmission_times()
        _, totals = trace.cumulative_bits()
        nec = rates.necessary_bits(
            tk, trace.t[0], (2.0 * DE0_REF) ** 2, trace.Vd[0], A_REF, BETA_REF, consts.P
        )
        suf = rates.sufficient_bits_inst(tk, trace.t[0], DE0_REF, trace.Vd[0], consts)
        assert np.all(nec <= totals)
        assert np.all(totals <= suf)


def test_lagged_cumulative_bound_holds(trace_noninst_clean):
    trace, consts = trace_noninst_clean
    _, totals = trace.cumulative_bits()
    for k in range(1, len(trace.events) + 1):
        bound = rates.sufficient_bits_noninst(trace, k, consts)
        assert totals[k - 1] <= bound


def test_per_event_ceiling_holds_with_and_without_disturbance(
    trace_noninst_clean, trace_noninst_disturbed
):
    for trace, consts in (trace_noninst_clean, trace_noninst_disturbed):
        for k, ev in enumerate(trace.events, start=1):
            bound = rates.sufficient_pk_bound_general(trace, k, consts)
            assert ev.p <= bound


def test_per_event_ceiling_rejects_out_of_range_event(trace_noninst_clean):
    trace, consts = trace_noninst_clean
    with pytest.raises(ConfigError):
        rates.sufficient_pk_bound_general(trace, 0, consts)
    with pytest.raises(ConfigError):
        rates.sufficient_pk_bound_general(trace, len(trace.events) + 1, consts)


def test_each_transmission_divides_volume_exactly(consts_nominal_p20):
    # p bits per axis cut the box volume by 2^(n p), bit-exact
    from etcsim.codec import CodecState

    enc = CodecState(consts_nominal_p20, np.zeros(2), DE0_REF, side="encoder")
    for p in (3, 13, 20):
        before = (2.0 * enc.de_at(0.0)) ** 2
        enc.receive(enc.transmit(np.array([6.0, -4.0]), 0.0, p, 0.0))
        after = (2.0 * enc.de_at(0.0)) ** 2
        assert before / after == 2.0 ** (2 * p)


# --------------------------------------------------------- realized curve


def _synthetic_trace(events):
    cfg = ScenarioConfig(
        scenario="inst_finite", x0=(1.0,), xhat0=(1.0,), horizon=1.0
    )
    consts = derive_constants(
        PlantSpec(A=[[1.0]], B=[[1.0]], K=[[-3.0]], Q=[[1.0]], nu=0.0),
        PerformanceSpec(Vd0=10.0, beta=0.5),
    )
    z = np.zeros((2, 1))
    return SimTrace(
        scenario=cfg.scenario,
        t=np.array([0.0, 1.0]),
        x=z,
        xhat=z,
        V=np.zeros(2),
        Vd=np.array([10.0, 10.0]),
        b=np.zeros(2),
        de=np.ones(2),
        eps=np.ones(2),
        events=events,
        config=cfg,
        consts=consts,
    )


def _event(k, t, bits):
    return TransmissionEvent(
        k=k, t_send=t, t_receive=t, p=bits, bits=bits, cause="performance", index=0
    )


def test_cumulative_bits_step_series():
    # two events of 24 and 40 bits accumulate to the step series 24, 64
    trace = _synthetic_trace([_event(1, 0.25, 24), _event(2, 0.75, 40)])
    times, totals = rates.cumulative_bits(trace)
    assert list(times) == [0.25, 0.75]
    assert list(totals) == [24, 64]


def test_realized_interp_is_zero_before_first_event():
    trace = _synthetic_trace([_event(1, 0.25, 24), _event(2, 0.75, 40)])
    vals = rates.realized_interp(trace, np.array([0.0, 0.2, 0.25, 0.5, 0.75, 1.0]))
    assert vals[0] == 0.0 and vals[1] == 0.0
    assert vals[2] == 24.0
    assert vals[3] == pytest.approx(44.0)  # halfway up the 24 -> 64 ramp
    assert vals[4] == 64.0 and vals[5] == 64.0


def test_realized_interp_empty_trace():
    trace = _synthetic_trace([])
    assert np.all(rates.realized_interp(trace, np.array([0.0, 1.0])) == 0.0)


# ---------------------------------------------------------------- reports


def test_report_flags_follow_the_scenario(trace_inst_p20, trace_noninst_disturbed):
    rep = rates.rate_report(*trace_inst_p20)
    assert rep.applicability == {
        "volume_bound_hypothesis": True,
        "zero_disturbance": True,
        "instantaneous": True,
        "closed_form_sufficient": True,
    }
    assert rep.sufficient.size == len(trace_inst_p20[0].events)

    repd = rates.rate_report(*trace_noninst_disturbed)
    assert not repd.applicability["zero_disturbance"]
    assert not repd.applicability["closed_form_sufficient"]
    assert repd.sufficient.size == 0
    assert repd.volume_convention == "vol(E0) = (2 de0)^n"


def test_report_summary_totals(trace_inst_p20):
    trace, consts = trace_inst_p20
    rep = rates.rate_report(trace, consts)
    assert rep.summary()["total_bits"] == trace.stats()["total_bits"]


def test_rates_csv_columns(tmp_path, trace_inst_p20, trace_noninst_disturbed):
    inst_csv = tmp_path / "inst.csv"
    rates.write_rates_csv(*trace_inst_p20, inst_csv, num=51)
    lines = inst_csv.read_text().splitlines()
    assert lines[0] == "t,necessary,realized_interp,sufficient"
    assert len(lines) == 52
    first = lines[1].split(",")
    assert len(first) == 4 and all(first)
    # repr-exact round trip on the necessary column
    assert float(first[1]) == float(rates.rate_report(*trace_inst_p20, num=51).necessary[0])

    dist_csv = tmp_path / "dist.csv"
    rates.write_rates_csv(*trace_noninst_disturbed, dist_csv, num=51)
    rows = dist_csv.read_text().splitlines()[1:]
    assert all(r.endswith(",") for r in rows)  # sufficient column stays empty
