"""Data-rate accounting for quantized event-triggered runs.

Three curves live here. The necessary curve is a volume argument: the
decoder's uncertainty set grows at the open-loop rate e^{tr(A) t} and must
stay inside the shrinking performance ellipsoid, so the channel has to
remove at least (tr A + n beta/2) log2(e) bits per second plus a constant
that compares the initial uncertainty volume against the initial ellipsoid
volume. The sufficient curves invert the zoom scheme: each transmission
cuts the certified error box by 2^p per axis, and bounding how fast the
box can regrow bounds how many bits the minimum-bit rule can ever charge.
The realized curve is plain bookkeeping over a trace's event ledger.

Necessary and sufficient bounds are only claims under their own
hypotheses (zero disturbance for the closed-form sufficient curves, all
eigenvalues of A + beta I in the closed right half plane for the
necessary one); `rate_report` records those applicability flags instead
of silently extrapolating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .design import DesignConstants
from .errors import ConfigError
from .simulate import SimTrace
from .triggers import Scenario, alpha, btilde, rho

__all__ = [
    "RateReport",
    "ball_volume_coefficient",
    "cumulative_bits",
    "necessary_asymptotic_rate",
    "necessary_bits",
    "rate_report",
    "realized_interp",
    "sufficient_bits_inst",
    "sufficient_bits_noninst",
    "sufficient_pk_bound_general",
    "volume_bound_hypothesis_holds",
    "write_rates_csv",
]

LOG2E = math.log2(math.e)

# volume convention for the initial uncertainty set: the codec's hypercube
VOLUME_CONVENTION = "vol(E0) = (2 de0)^n"


def _gamma_half_plus_one(n: int) -> float:
    """Gamma(n/2 + 1) for integer n >= 0, exact via factorials.

    Even n: (n/2)!.  Odd n = 2m + 1: (2m + 1)!! sqrt(pi) / 2^(m+1).
    Kept table-free but exact; sized for the small dimensions this
    package targets.
    """
    if n < 0 or n != int(n):
        raise ValueError("dimension must be a nonnegative integer")
    if n > 16:
        raise ValueError("dimension above 16 is out of contract")
    if n % 2 == 0:
        return float(math.factorial(n // 2))
    m = (n - 1) // 2
    dfact = 1
    for j in range(1, 2 * m + 2, 2):
        dfact *= j
    return dfact * math.sqrt(math.pi) / 2.0 ** (m + 1)


def ball_volume_coefficient(P: np.ndarray) -> float:
    """Volume of {x : x^T P x <= 1} divided by 1 (unit level set).

    vol = sqrt(det(P^-1)) pi^(n/2) / Gamma(n/2 + 1); scaling the level to
    V gives vol = coeff * V^(n/2).
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    det_p = float(np.linalg.det(P))
    if det_p <= 0.0:
        raise ValueError("P must be positive definite")
    return math.sqrt(1.0 / det_p) * math.pi ** (n / 2.0) / _gamma_half_plus_one(n)


def volume_bound_hypothesis_holds(A: np.ndarray, beta: float) -> bool:
    """True when every eigenvalue of A + beta I has nonnegative real part.

    When false the volume bound still lower-bounds the rate, but the slow
    eigen-subspace could be discounted; callers get a flag, not a throw.
    """
    eigs = np.linalg.eigvals(np.asarray(A, dtype=float))
    return bool(np.min(eigs.real) + beta >= -1e-12)


def necessary_bits(t, t0: float, vol_e0: float, vd0: float, A, beta: float, P) -> np.ndarray:
    """Lower bound on bits that must cross the channel over [t0, t].

    (tr A + n beta/2) log2(e) (t - t0) + log2(vol_e0 / (c_P vd0^(n/2))).
    The log term is constant in t, so the curve is affine; accepts scalar
    or array t and returns matching shape.
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if not vol_e0 > 0.0 or not vd0 > 0.0:
        raise ValueError("vol_e0 and vd0 must be positive")
    slope = (float(np.trace(A)) + 0.5 * n * beta) * LOG2E
    c_p = ball_volume_coefficient(P)
    offset = math.log2(vol_e0 / (c_p * vd0 ** (n / 2.0)))
    return slope * (np.asarray(t, dtype=float) - t0) + offset


def necessary_asymptotic_rate(A, beta: float) -> float:
    """Asymptotic bits-per-second floor: (tr A + n beta/2) log2(e)."""
    A = np.asarray(A, dtype=float)
    return (float(np.trace(A)) + 0.5 * A.shape[0] * beta) * LOG2E


def sufficient_bits_inst(t_k, t0: float, de0: float, vd0: float, consts: DesignConstants) -> np.ndarray:
    """Upper bound on cumulative bits through the event at t_k, zero disturbance.

    n (||A||_inf + beta/2) log2(e) (t_k - t0) + n log2(de0 / (c sqrt(vd0))) + n.
    Valid for instantaneous runs under the minimum-bit rule; refuses
    disturbed plants, whose bound needs the event history instead.
    """
    if consts.plant.nu > 0.0:
        raise ConfigError(
            "closed-form sufficient bits need nu = 0; "
            "use sufficient_pk_bound_general for disturbed runs"
        )
    n = consts.n
    eps0 = de0 / (consts.c * math.sqrt(vd0))
    return (
        n * consts.theta_bar * LOG2E * (np.asarray(t_k, dtype=float) - t0)
        + n * math.log2(eps0)
        + n
    )


def sufficient_bits_noninst(trace: SimTrace, k: int, consts: DesignConstants) -> float:
    """Upper bound on cumulative bits through event k, noninstantaneous, nu = 0.

    Adds the one-shot communication-lag transient
    n log2(e^{theta_bar TM} / rho_T(btilde(TM, b, eps))) + n to the
    instantaneous bound; the transient is nonpositive once TM = 0.
    """
    if consts.plant.nu > 0.0:
        raise ConfigError("closed-form sufficient bits need nu = 0")
    if consts.TM is None:
        raise ConfigError("noninstantaneous bound needs TM in the constants")
    ev = trace.events[k - 1]
    n = consts.n
    t0 = float(trace.t[0])
    vd0 = float(trace.Vd[0])
    eps0 = trace.config.resolved_de0() / (consts.c * math.sqrt(vd0))
    bt = btilde(consts.TM, ev.b_pre, ev.eps_pre, consts)
    transient = math.log2(math.exp(consts.theta_bar * consts.TM) / rho(bt, consts))
    return n * (
        transient
        + 1.0
        + consts.theta_bar * LOG2E * (ev.t_send - t0)
        + math.log2(eps0)
    )


def sufficient_pk_bound_general(trace: SimTrace, k: int, consts: DesignConstants) -> float:
    """Per-axis bit ceiling for event k from the run's own history.

    Works with disturbance: the error box regrows at e^{theta_bar tau}
    plus the accumulated residual alpha between past events, and the
    minimum-bit rule can never charge more than what shrinks that box
    back under the trigger level within the lag budget TM.
    """
    if consts.TM is None:
        raise ConfigError("general per-event bound needs TM in the constants")
    if k < 1 or k > len(trace.events):
        raise ConfigError(f"event {k} is outside the trace history")
    ev = trace.events[k - 1]
    send_times = [float(trace.t[0])] + [e.t_send for e in trace.events[: k]]
    gaps = np.diff(send_times)  # T_0 .. T_{k-1}
    p_hist = [e.p for e in trace.events[: k - 1]]  # p_1 .. p_{k-1}
    tb = consts.theta_bar

    t0 = float(trace.t[0])
    vd0 = float(trace.Vd[0])
    eps0 = trace.config.resolved_de0() / (consts.c * math.sqrt(vd0))
    lead = math.exp(tb * (ev.t_send - t0)) * eps0
    for p in p_hist:
        lead /= 2.0 ** p
    resid = 0.0
    for i in range(k):
        factor = 1.0
        for j in range(i + 1, k):  # j indexes T_j and p_j, both 1-based past events
            factor *= math.exp(tb * gaps[j]) / 2.0 ** p_hist[j - 1]
        resid += factor * alpha(float(gaps[i]), consts)
    inner = lead + resid

    bt = btilde(consts.TM, ev.b_pre, ev.eps_pre, consts)
    denom = rho(bt, consts) - alpha(consts.TM, consts)
    if not denom > 0.0:
        raise ConfigError("lag budget TM leaves no admissible bit count")
    head = math.log2(math.exp(tb * consts.TM) / denom) + 1.0
    return head + math.log2(inner)


def cumulative_bits(trace: SimTrace) -> tuple[np.ndarray, np.ndarray]:
    """Step series of total transmitted bits: (event times, running totals).

    Linear interpolation between the returned nodes (0 before the first
    event) is the smoothed comparison curve; `realized_interp` applies it.
    """
    return trace.cumulative_bits()


def realized_interp(trace: SimTrace, ts) -> np.ndarray:
    """Cumulative bit count interpolated linearly between event times."""
    times, totals = trace.cumulative_bits()
    ts = np.asarray(ts, dtype=float)
    if times.size == 0:
        return np.zeros_like(ts)
    return np.interp(ts, times, totals.astype(float), left=0.0)


@dataclass
class RateReport:
    """Necessary/sufficient/realized rate curves for one trace."""

    necessary_t: np.ndarray
    necessary: np.ndarray
    necessary_asymptotic: float
    sufficient_t: np.ndarray  # event times; empty when no closed form applies
    sufficient: np.ndarray
    realized_t: np.ndarray
    realized: np.ndarray
    applicability: dict = field(default_factory=dict)
    volume_convention: str = VOLUME_CONVENTION

    def summary(self) -> dict:
        horizon = float(self.necessary_t[-1] - self.necessary_t[0])
        total = float(self.realized[-1]) if self.realized.size else 0.0
        return {
            "necessary_asymptotic": self.necessary_asymptotic,
            "realized_average": total / horizon if horizon > 0.0 else math.nan,
            "total_bits": total,
            **{k: v for k, v in self.applicability.items()},
        }


def rate_report(trace: SimTrace, consts: DesignConstants, num: int = 2001) -> RateReport:
    """Assemble all three curves for a finished trace.

    The sufficient curve is populated only where a closed-form cumulative
    bound exists (zero disturbance); otherwise it is left empty and the
    per-event `sufficient_pk_bound_general` remains available.
    """
    t0 = float(trace.t[0])
    t_end = float(trace.t[-1])
    de0 = trace.config.resolved_de0()
    vd0 = float(trace.Vd[0])
    A = consts.plant.A
    n = consts.n
    vol_e0 = (2.0 * de0) ** n

    grid = np.linspace(t0, t_end, num) if t_end > t0 else np.array([t0])
    nec = necessary_bits(grid, t0, vol_e0, vd0, A, consts.beta, consts.P)

    zero_dist = consts.plant.nu == 0.0
    inst = trace.scenario is not Scenario.NONINST_BOUNDED
    tk = trace.transmission_times()
    if zero_dist and tk.size:
        if inst:
            suff = sufficient_bits_inst(tk, t0, de0, vd0, consts)
        else:
            suff = np.array(
                [sufficient_bits_noninst(trace, k, consts) for k in range(1, tk.size + 1)]
            )
    else:
        tk = np.array([])
        suff = np.array([])

    times, totals = trace.cumulative_bits()
    return RateReport(
        necessary_t=grid,
        necessary=np.asarray(nec, dtype=float),
        necessary_asymptotic=necessary_asymptotic_rate(A, consts.beta),
        sufficient_t=tk,
        sufficient=suff,
        realized_t=times,
        realized=totals.astype(float) if totals.size else np.array([]),
        applicability={
            "volume_bound_hypothesis": volume_bound_hypothesis_holds(A, consts.beta),
            "zero_disturbance": zero_dist,
            "instantaneous": inst,
            "closed_form_sufficient": bool(suff.size),
        },
    )


def write_rates_csv(trace: SimTrace, consts: DesignConstants, path, num: int = 2001) -> RateReport:
    """Write (t, necessary, realized_interp, sufficient) on a uniform grid.

    The sufficient column holds the zero-disturbance formula evaluated on
    the grid when it applies and stays empty otherwise; all floats use
    repr-exact %.17g.
    """
    report = rate_report(trace, consts, num=num)
    grid = report.necessary_t
    realized = realized_interp(trace, grid)
    if report.applicability["closed_form_sufficient"] and report.applicability["instantaneous"]:
        suff_col = sufficient_bits_inst(
            grid, float(trace.t[0]), trace.config.resolved_de0(), float(trace.Vd[0]), consts
        )
        suff_fmt = [f"{v:.17g}" for v in suff_col]
    else:
        suff_fmt = ["" for _ in grid]
    with open(path, "w") as fh:
        fh.write("t,necessary,realized_interp,sufficient\n")
        for i, t in enumerate(grid):
            fh.write(
                f"{t:.17g},{report.necessary[i]:.17g},{realized[i]:.17g},{suff_fmt[i]}\n"
            )
    return report
