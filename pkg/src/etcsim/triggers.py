"""Analytic trigger machinery.

All runtime decision functions live here: the performance ratio b and its
certified upper envelope btilde, the recovery-time map Gamma_1, the channel
trigger functions h_ch / hbar_ch and their crossing time Gamma_2~, the phi
family with the packet-budget horizon T*, the three trigger predicates, and
the three minimum-bit formulas.

Everything is a pure function of (inputs, DesignConstants). Crossing times
are computed by bracket doubling plus bisection; the threshold structure
(the sub-level set {tau : f(tau) < 1} is an interval [0, crossing)) makes
that exact to the time tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .design import NORM_A_TINY, DesignConstants
from .errors import CertificationError
from .mat_core import exp_rise, inf_norm, mat_exp

__all__ = [
    "Scenario",
    "TriggerSnapshot",
    "perf_ratio",
    "btilde",
    "gamma1",
    "rho",
    "h_ch",
    "hbar_ch",
    "inf_norm_growth",
    "alpha",
    "gamma2_tilde",
    "phi_family",
    "t_star",
    "min_bits",
    "trigger_levels",
    "trigger_check",
    "ceil_log2",
]

# Absolute time tolerance for every crossing bisection (seconds).
BISECT_TOL = 1e-9
# Initial bracket width for doubling scans (seconds).
_BRACKET0 = 1e-3
# Relative slack subtracted inside ceil(log2(.)) so that values landing a
# rounding error above an exact power of two do not get charged a full bit.
_CEIL_EPS = 1e-9


class Scenario(str, Enum):
    """Communication regimes, in increasing generality."""

    INST_FINITE = "inst_finite"  # instantaneous reception, finite bits per event
    INST_BOUNDED = "inst_bounded"  # instantaneous reception, per-axis budget pbar
    NONINST_BOUNDED = "noninst_bounded"  # reception delayed up to TM, budget pbar

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value))
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ValueError(f"unknown scenario {value!r}; expected one of {names}") from None


@dataclass(frozen=True)
class TriggerSnapshot:
    """State of the trigger quantities at one instant.

    b = V(x)/V_d(t), eps = de/(c sqrt(V_d(t))); de is the certified bound on
    the encoding error just before any pending jump.
    """

    t: float
    b: float
    eps: float
    de: float
    Vd: float


def snapshot(x, de: float, t: float, consts: DesignConstants, t0: float = 0.0) -> TriggerSnapshot:
    """Build a TriggerSnapshot from raw state."""
    Vd = consts.vd(t, t0)
    b = consts.v_of(x) / Vd
    eps = de / (consts.c * math.sqrt(Vd))
    return TriggerSnapshot(t=t, b=b, eps=eps, de=de, Vd=Vd)


def perf_ratio(x, t: float, consts: DesignConstants, t0: float = 0.0) -> float:
    """b(t) = V(x)/V_d(t)."""
    return consts.v_of(x) / consts.vd(t, t0)


# ----------------------------------------------------------- growth helpers


_eov = exp_rise  # (e^{s tau} - 1)/s with its removable limit; shared helper


def _eov_ds_at(w: float, s: float, tau: float) -> float:
    """(Eov(w+s, tau) - Eov(w, tau))/s, with its s -> 0 limit.

    Carries the c2 terms of btilde in a form that stays finite as
    ||A|| -> 0 (where c2 itself diverges but c2*||A|| does not).
    """
    if abs(s) >= NORM_A_TINY:
        return (_eov(w + s, tau) - _eov(w, tau)) / s
    # d/du (e^{u tau} - 1)/u at u = w
    return (tau * math.exp(w * tau) * w - math.expm1(w * tau)) / (w * w)


def _eov_minus_tau_over(s: float, tau: float) -> float:
    """(Eov(s, tau) - tau)/s, with its s -> 0 limit tau^2/2."""
    if abs(s) >= NORM_A_TINY:
        return (_eov(s, tau) - tau) / s
    return 0.5 * tau * tau


def alpha(tau: float, consts: DesignConstants) -> float:
    """Residual growth nu (e^{||A|| tau} - 1)/(c ||A|| sqrt(V0)); 0 when nu = 0."""
    if consts.alpha_scale == 0.0:
        return 0.0
    return consts.alpha_scale * _eov(consts.norm_A2, tau)


# ------------------------------------------------------------------ btilde


def btilde(tau: float, b0: float, eps0: float, consts: DesignConstants) -> float:
    """Certified upper envelope of b(t_k + tau) given b(t_k) = b0, eps(t_k) = eps0.

    Closed-form solution of
        db/dtau = -w b + W eps0 e^{theta tau} + c1 + c2 (e^{||A|| tau} - 1),
    b(0) = b0; the disturbance constants c1, c2 vanish when nu = 0.
    """
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    w = consts.w
    f1 = (
        b0
        + consts.W * eps0 * _eov(w + consts.theta, tau)
        + consts.c1 * _eov(w, tau)
        + consts.c2a * _eov_ds_at(w, consts.norm_A2, tau)
    )
    return f1 * math.exp(-w * tau)


def _first_crossing(f, horizon: float, lo: float = 0.0) -> float:
    """Smallest tau >= lo with f(tau) >= 1, or +inf if none up to horizon.

    Assumes the sub-level set {f < 1} is an interval ending at the crossing
    (the one-sided threshold structure of the trigger functions). A positive
    lo asserts f(lo) < 1 and starts the scan there.
    """
    if lo == 0.0 and f(0.0) >= 1.0:
        return 0.0
    hi = max(2.0 * lo, _BRACKET0)
    while f(hi) < 1.0:
        lo = hi
        hi *= 2.0
        if hi > horizon:
            if f(horizon) < 1.0:
                return math.inf
            hi = horizon
            break
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if f(mid) >= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def _search_horizon(consts: DesignConstants) -> float:
    cap = 700.0 / (consts.w + consts.theta)
    if math.isnan(consts.gamma11):
        return cap  # first Gamma_1(1,1) computation: overflow cap only
    return consts.horizon()


def gamma1(b0: float, eps0: float, consts: DesignConstants) -> float:
    """First upward crossing of 1 by tau -> btilde(tau, b0, eps0); +inf if none.

    The sub-level set {tau : btilde < 1} is the interval [0, Gamma_1), so the
    first crossing with nonnegative slope is the first time btilde reaches 1.
    """
    if not -1e-12 <= b0 <= 1.0 + 1e-12:
        raise ValueError("b0 must lie in [0, 1]")
    if eps0 < 0.0:
        raise ValueError("eps0 must be nonnegative")
    f = lambda tau: btilde(tau, b0, eps0, consts)
    if b0 >= 1.0:
        # at the boundary the crossing is immediate iff btilde does not dip
        slope0 = -consts.w * b0 + consts.W * eps0 + consts.c1
        if slope0 >= 0.0:
            return 0.0
        # btilde dips below 1 first; start the scan inside the dip
        lo = _BRACKET0
        while f(lo) >= 1.0:
            lo *= 0.5
            if lo < BISECT_TOL:
                return 0.0
        return _first_crossing(f, _search_horizon(consts), lo=lo)
    return _first_crossing(f, _search_horizon(consts))


# ----------------------------------------------------------- channel family


def rho(b0: float, consts: DesignConstants) -> float:
    """rho_T(b0) = c3 (1 - b0) + 1; affine, equals 1 at b0 = 1."""
    return consts.c3 * (1.0 - b0) + 1.0


def h_ch(snap: TriggerSnapshot, consts: DesignConstants) -> float:
    """Channel trigger function eps/rho_T(b): quantizer bound vs spec margin."""
    return snap.eps / rho(snap.b, consts)


def inf_norm_growth(tau: float, consts: DesignConstants) -> float:
    """Worst-case growth of eps over tau: ||e^{A tau}||_inf e^{(beta/2) tau}."""
    return inf_norm(mat_exp(consts.plant.A, tau)) * math.exp(0.5 * consts.beta * tau)


def hbar_ch(
    tau: float, b0: float, eps0: float, psi0: float, consts: DesignConstants
) -> float:
    """Certified upper envelope of h_ch(t_k + tau) given the snapshot at t_k.

    psi0 is the post-encoding value of eps (eps0/2^p for a p-bit packet).
    """
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    r = rho(btilde(tau, b0, eps0, consts), consts)
    return (inf_norm_growth(tau, consts) * psi0 + alpha(tau, consts)) / r


def gamma2_tilde(
    b0: float, eps0: float, psi0: float, consts: DesignConstants
) -> float:
    """First crossing of 1 by tau -> hbar_ch(tau, b0, eps0, psi0).

    The envelope certifies the channel function only while the state
    certificate holds, tau <= min(Gamma_1(b0, eps0), T); past that point
    the margin line can change sign and the function loses meaning. The
    search is capped there, and +inf means the window is crossing-free.
    """
    window = min(gamma1(b0, eps0, consts), consts.T, _search_horizon(consts))
    return _first_crossing(
        lambda tau: hbar_ch(tau, b0, eps0, psi0, consts), window
    )


# -------------------------------------------------------------- phi family


def phi_family(
    tau: float, phi0: float, consts: DesignConstants
) -> tuple[float, float, float]:
    """(phi, phi1, phi2) at (tau, phi0).

    phi upper-bounds hbar_ch(tau, b0, eps0, psi0) for psi0/rho_T(b0) = phi0
    on the constrained grid (eps0 <= rho_T(b0), tau below the look-ahead),
    and defines T* through phi(T*, 2^-pbar) = 1.
    """
    if tau < 0.0:
        raise ValueError("tau must be nonnegative")
    rho0 = rho(0.0, consts)
    bracket = (
        consts.W * rho0 * _eov(consts.theta, tau)
        + consts.c1 * tau
        + consts.c2a * _eov_minus_tau_over(consts.norm_A2, tau)
    )
    phi1 = phi0 + phi0 * rho0 * consts.c3 * bracket
    phi2 = 0.0
    if consts.alpha_scale != 0.0:
        phi2 = consts.alpha_scale * _eov(consts.norm_A2, tau) / rho(
            btilde(tau, 1.0, 1.0, consts), consts
        )
    growth = inf_norm(mat_exp(consts.plant.A, tau)) * math.exp(0.5 * consts.beta * tau)
    return growth * phi1 + phi2, phi1, phi2


def t_star(pbar: int, consts: DesignConstants) -> float:
    """First tau with phi(tau, 2^-pbar) = 1; +inf if the bracket never closes."""
    if pbar < 1:
        raise ValueError("pbar must be at least 1")
    phi0 = 2.0 ** (-pbar)
    return _first_crossing(
        lambda tau: phi_family(tau, phi0, consts)[0], _search_horizon(consts)
    )


# ----------------------------------------------------------- bit selection


def ceil_log2(z: float) -> int:
    """ceil(log2 z) with a relative epsilon guard.

    Event localization can land a rounding error above an exact crossing
    (where z is an exact power of two); the guard keeps the result from
    jumping a full bit there.
    """
    if z <= 0.0:
        return 0
    return math.ceil(math.log2(z) - _CEIL_EPS)


def min_bits(
    scenario: Scenario | str,
    snap: TriggerSnapshot,
    consts: DesignConstants,
    pbar: int | None = None,
) -> int:
    """Per-axis minimum admissible bit count at a transmission instant.

    The snapshot is taken just before encoding (de and eps pre-jump). Always
    at least 1: the hypercube partition needs one bit per axis, and extra
    bits only strengthen every certified bound.
    """
    scenario = Scenario.parse(scenario)
    if scenario is Scenario.INST_FINITE:
        return max(1, ceil_log2(snap.eps))
    if pbar is None:
        pbar = consts.pbar

    if scenario is Scenario.INST_BOUNDED:
        p = max(1, ceil_log2(h_ch(snap, consts)))
    else:
        # Non-instantaneous: smallest p with hbar_ch(TM, b, eps, eps/2^p) <= 1.
        if consts.TM is None:
            raise ValueError("non-instantaneous min_bits needs TM in the constants")
        TM = consts.TM
        r = rho(btilde(TM, snap.b, snap.eps, consts), consts)
        growth = inf_norm_growth(TM, consts)
        headroom = r - alpha(TM, consts)
        if headroom <= 0.0:
            raise CertificationError(
                "no bit count can certify the next window: rho - alpha(TM) <= 0"
            )
        p = max(1, ceil_log2(growth * snap.eps / headroom))
        # closed form and the monotone scan agree; verify and repair defensively
        while hbar_ch(TM, snap.b, snap.eps, snap.eps / 2.0**p, consts) > 1.0 + 1e-9:
            p += 1
            if pbar is not None and p > pbar:
                break

    # a correctly timed trigger never needs more than the per-axis budget
    if pbar is not None and p > pbar:
        raise CertificationError(
            f"minimum admissible bit count {p} exceeds the budget pbar = {pbar}"
        )
    return p


# ------------------------------------------------------------- predicates


def trigger_levels(
    scenario: Scenario | str,
    snap: TriggerSnapshot,
    consts: DesignConstants,
    pbar: int | None = None,
) -> tuple[float, float]:
    """(performance level, channel level); a level >= 1 means the clause holds.

    InstFinite has no channel clause (level -inf). The performance clause's
    "db/dt >= 0" side condition is realized upstream as upward-crossing
    detection between samples.
    """
    scenario = Scenario.parse(scenario)
    if pbar is None:
        pbar = consts.pbar
    if scenario is Scenario.INST_FINITE:
        return snap.b, -math.inf
    if scenario is Scenario.INST_BOUNDED:
        if pbar is None:
            raise ValueError("bounded scenarios need pbar")
        return snap.b, h_ch(snap, consts) / 2.0**pbar
    if consts.TM is None:
        raise ValueError("non-instantaneous triggering needs TM in the constants")
    if pbar is None:
        raise ValueError("bounded scenarios need pbar")
    perf_level = btilde(consts.TM, snap.b, snap.eps, consts)
    chan_level = hbar_ch(
        consts.TM, snap.b, snap.eps, snap.eps / 2.0**pbar, consts
    )
    return perf_level, chan_level


def trigger_check(
    scenario: Scenario | str,
    snap: TriggerSnapshot,
    consts: DesignConstants,
    pbar: int | None = None,
) -> bool:
    """True when the scenario's trigger condition holds at the snapshot."""
    perf_level, chan_level = trigger_levels(scenario, snap, consts, pbar)
    return perf_level >= 1.0 or chan_level >= 1.0
