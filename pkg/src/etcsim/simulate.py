"""Closed-loop simulation of event-triggered control over a bit-budgeted link.

The plant state integrates with a fixed-step RK4 map between events while
the controller estimate flows exactly. Two codec replicas jump at reception
times. Trigger levels are monitored on the integration grid; a crossing is
localized by bisection and the event fires just below the threshold, so the
transmitted bit count is taken from the admissible side of the crossing.
"""

import math
from dataclasses import dataclass

import numpy as np

from .codec import CodecState, Packet, states_match
from .design import DesignConstants, PlantSpec
from .errors import CertificationError, ConfigError
from .mat_core import mat_exp
from .triggers import (
    Scenario,
    TriggerSnapshot,
    alpha,
    btilde,
    h_ch,
    hbar_ch,
    inf_norm_growth,
    min_bits,
    t_star,
    trigger_levels,
)

__all__ = [
    "STEP_DEFAULT",
    "DelayModel",
    "Disturbance",
    "ScenarioConfig",
    "SimTrace",
    "TransmissionEvent",
    "integrate_step",
    "run",
]

STEP_DEFAULT = 1e-4
# bisection window for event times (s)
EVENT_TOL = 1e-9
# grid steps integrated per vector block
_CHUNK = 8192
# knot norms may exceed the bound by this relative slack (rounding only)
_KNOT_SLACK = 1e-12


# ------------------------------------------------------------- disturbance


@dataclass(frozen=True)
class Disturbance:
    """Disturbance signal v(t) with certified bound ||v(t)||_2 <= nu.

    Three kinds: "zero", "sincos" (nu * (sin(omega t), cos(omega t)),
    two-dimensional), and "table" (piecewise-linear interpolation of knots;
    the norm bound is checked at the knots and holds between them because
    the norm is convex along each segment). Outside the knot range a table
    holds its end values.
    """

    kind: str
    dim: int
    nu: float = 0.0
    omega: float = 0.5
    knots_t: np.ndarray | None = None
    knots_v: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("zero", "sincos", "table"):
            raise ConfigError(f"unknown disturbance kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigError("disturbance dimension must be at least 1")
        if self.nu < 0.0:
            raise ConfigError("disturbance bound nu must be nonnegative")
        if self.kind == "sincos" and self.dim != 2:
            raise ConfigError("the sin/cos disturbance is two-dimensional")
        if self.kind == "table":
            ts = np.asarray(self.knots_t, dtype=float)
            vs = np.asarray(self.knots_v, dtype=float)
            if ts.ndim != 1 or ts.size < 2:
                raise ConfigError("a disturbance table needs at least two knots")
            if np.any(np.diff(ts) <= 0.0):
                raise ConfigError("table knot times must be strictly increasing")
            if vs.shape != (ts.size, self.dim):
                raise ConfigError(
                    f"table values must have shape ({ts.size}, {self.dim})"
                )
            norms = np.sqrt((vs * vs).sum(axis=1))
            if np.any(norms > self.nu * (1.0 + _KNOT_SLACK)):
                raise ConfigError("table knot exceeds the disturbance bound nu")
            object.__setattr__(self, "knots_t", ts)
            object.__setattr__(self, "knots_v", vs)

    @classmethod
    def zero(cls, dim: int) -> "Disturbance":
        return cls(kind="zero", dim=dim, nu=0.0)

    @classmethod
    def sincos(cls, nu: float, omega: float = 0.5) -> "Disturbance":
        return cls(kind="sincos", dim=2, nu=nu, omega=omega)

    @classmethod
    def table(cls, knots_t, knots_v, nu: float) -> "Disturbance":
        knots_v = np.asarray(knots_v, dtype=float)
        return cls(
            kind="table",
            dim=knots_v.shape[1] if knots_v.ndim == 2 else 0,
            nu=nu,
            knots_t=knots_t,
            knots_v=knots_v,
        )

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.nu == 0.0

    def sample_grid(self, ts: np.ndarray) -> np.ndarray:
        """Values at each time in ts, shape (len(ts), dim)."""
        ts = np.asarray(ts, dtype=float)
        if self.kind == "sincos":
            return self.nu * np.stack(
                [np.sin(self.omega * ts), np.cos(self.omega * ts)], axis=1
            )
        if self.kind == "table":
            cols = [
                np.interp(ts, self.knots_t, self.knots_v[:, j])
                for j in range(self.dim)
            ]
            return np.stack(cols, axis=1)
        return np.zeros((ts.size, self.dim))

    def sample(self, t: float) -> np.ndarray:
        return self.sample_grid(np.array([float(t)]))[0]


# ------------------------------------------------------------------ delay


@dataclass(frozen=True)
class DelayModel:
    """Communication delay of a packet carrying n*p payload bits.

    "zero" has no delay, "constant" always takes `value` seconds, and
    "proportional" takes `value` seconds per payload bit, clamped at `cap`
    so the worst-case packet still meets the delay ceiling.
    """

    kind: str = "zero"
    value: float = 0.0
    cap: float = math.inf

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "proportional"):
            raise ConfigError(f"unknown delay kind {self.kind!r}")
        if self.value < 0.0:
            raise ConfigError("delay value must be nonnegative")
        if not self.cap > 0.0:
            raise ConfigError("delay cap must be positive")

    @classmethod
    def zero(cls) -> "DelayModel":
        return cls(kind="zero")

    @classmethod
    def constant(cls, value: float) -> "DelayModel":
        return cls(kind="constant", value=value)

    @classmethod
    def proportional(cls, per_bit: float, cap: float) -> "DelayModel":
        return cls(kind="proportional", value=per_bit, cap=cap)

    def delay(self, p: int, n: int) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.value
        return min(self.value * (n * p), self.cap)


# ----------------------------------------------------------- configuration


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything one closed-loop run needs besides the design constants."""

    scenario: Scenario
    x0: np.ndarray
    xhat0: np.ndarray
    horizon: float
    step: float = STEP_DEFAULT
    t0: float = 0.0
    de0: float | None = None
    pbar: int | None = None
    delay: DelayModel = DelayModel.zero()
    disturbance: Disturbance | None = None
    pk_override: dict[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "scenario", Scenario.parse(self.scenario))
        x0 = np.asarray(self.x0, dtype=float).copy()
        xhat0 = np.asarray(self.xhat0, dtype=float).copy()
        if x0.ndim != 1 or x0.shape != xhat0.shape:
            raise ConfigError("x0 and xhat0 must be vectors of the same length")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "xhat0", xhat0)
        if self.horizon < 0.0:
            raise ConfigError("horizon must be nonnegative")
        if not self.step > 0.0:
            raise ConfigError("step must be positive")
        if self.de0 is not None:
            gap = float(np.max(np.abs(x0 - xhat0)))
            if self.de0 < gap:
                raise ConfigError("de0 must cover ||x0 - xhat0||_inf")
        if self.pbar is not None and self.pbar < 1:
            raise ConfigError("pbar must be a positive integer")
        if self.pk_override:
            for k, p in self.pk_override.items():
                if k < 1 or p < 1:
                    raise ConfigError("pk_override entries must be positive")

    def resolved_de0(self) -> float:
        """Initial error bound; default twice the initial estimate gap."""
        if self.de0 is not None:
            return float(self.de0)
        return 2.0 * float(np.max(np.abs(self.x0 - self.xhat0)))


# ----------------------------------------------------------------- results


@dataclass
class TransmissionEvent:
    k: int
    t_send: float
    t_receive: float
    p: int
    bits: int
    cause: str  # "performance" | "channel"
    index: int
    received: bool = False
    sync: bool | None = None
    # state just before encoding; rate bounds re-evaluate their formulas here
    b_pre: float = math.nan
    eps_pre: float = math.nan
    de_pre: float = math.nan


@dataclass
class SimTrace:
    """Grid samples plus the transmission record of one run.

    Samples sit on the uniform integration grid; event instants carry their
    own precise rows in `events`. Sample rows at an event time hold the
    pre-jump state.
    """

    scenario: Scenario
    t: np.ndarray
    x: np.ndarray
    xhat: np.ndarray
    V: np.ndarray
    Vd: np.ndarray
    b: np.ndarray
    de: np.ndarray
    eps: np.ndarray
    events: list[TransmissionEvent]
    config: ScenarioConfig
    consts: DesignConstants

    def transmission_times(self) -> np.ndarray:
        return np.array([ev.t_send for ev in self.events])

    def reception_times(self) -> np.ndarray:
        return np.array([ev.t_receive for ev in self.events if ev.received])

    def gaps(self) -> np.ndarray:
        return np.diff(self.transmission_times())

    def reception_gaps(self) -> np.ndarray:
        return np.diff(self.reception_times())

    def stats(self) -> dict:
        """Transmission count and gap statistics over the run."""
        gaps = self.gaps()
        return {
            "transmissions": len(self.events),
            "mean_gap": float(gaps.mean()) if gaps.size else math.nan,
            "min_gap": float(gaps.min()) if gaps.size else math.nan,
            "total_bits": int(sum(ev.bits for ev in self.events)),
        }

    def cumulative_bits(self) -> tuple[np.ndarray, np.ndarray]:
        """(transmission times, running bit totals) as a step series."""
        times = self.transmission_times()
        totals = np.cumsum([ev.bits for ev in self.events])
        return times, totals

    def bits_at(self, t: float) -> int:
        """Total bits transmitted up to and including time t."""
        times, totals = self.cumulative_bits()
        idx = int(np.searchsorted(times, t, side="right"))
        return int(totals[idx - 1]) if idx else 0

    def write_samples_csv(self, path, stride: int = 1) -> None:
        """Write every stride-th sample row; the final row is always kept."""
        if stride < 1:
            raise ValueError("stride must be at least 1")
        n = self.x.shape[1]
        header = (
            ["t"]
            + [f"x{j + 1}" for j in range(n)]
            + [f"xhat{j + 1}" for j in range(n)]
            + ["V", "Vd", "b", "de", "eps"]
        )
        rows = list(range(0, self.t.size, stride))
        if rows[-1] != self.t.size - 1:
            rows.append(self.t.size - 1)
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for i in rows:
                vals = (
                    [self.t[i]]
                    + list(self.x[i])
                    + list(self.xhat[i])
                    + [self.V[i], self.Vd[i], self.b[i], self.de[i], self.eps[i]]
                )
                fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")

    def write_events_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,tk,rk,pk,bits,cause,cumulative_bits\n")
            total = 0
            for ev in self.events:
                total += ev.bits
                fh.write(
                    f"{ev.k},{ev.t_send:.17g},{ev.t_receive:.17g},"
                    f"{ev.p},{ev.bits},{ev.cause},{total}\n"
                )


# --------------------------------------------------------------- step maps


@dataclass(frozen=True)
class _StepMap:
    """Affine RK4 advance of x over one step plus the exact estimate flow.

    x+ = Rxx x + Rxh xhat + Sv1 v(t) + Sv2 v(t+h/2) + Sv3 v(t+h)
    xhat+ = Ehat xhat
    """

    h: float
    Rxx: np.ndarray
    Rxh: np.ndarray
    Sv1: np.ndarray
    Sv2: np.ndarray
    Sv3: np.ndarray
    Ehat: np.ndarray


def _make_step_map(plant: PlantSpec, h: float) -> _StepMap:
    A = plant.A
    M = plant.B @ plant.K
    eye = np.eye(plant.n)
    E1 = mat_exp(plant.Abar, h)
    Eh = mat_exp(plant.Abar, 0.5 * h)

    # stage-coefficient recurrences of the classical RK4 rule
    K1 = A
    K2 = A + 0.5 * h * (A @ K1)
    K3 = A + 0.5 * h * (A @ K2)
    K4 = A + h * (A @ K3)
    Rxx = eye + (h / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)

    k1h = M
    k2h = 0.5 * h * (A @ k1h) + M @ Eh
    k3h = 0.5 * h * (A @ k2h) + M @ Eh
    k4h = h * (A @ k3h) + M @ E1
    Rxh = (h / 6.0) * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)

    s2 = 0.5 * h * A
    s3 = 0.5 * h * (A @ s2)
    s4 = h * (A @ s3)
    Sv1 = (h / 6.0) * (eye + 2.0 * s2 + 2.0 * s3 + s4)
    u3 = eye + 0.5 * h * A
    u4 = h * (A @ u3)
    Sv2 = (h / 6.0) * (2.0 * eye + 2.0 * u3 + u4)
    Sv3 = (h / 6.0) * eye

    return _StepMap(h=h, Rxx=Rxx, Rxh=Rxh, Sv1=Sv1, Sv2=Sv2, Sv3=Sv3, Ehat=E1)


def integrate_step(x, xhat, t: float, h: float, disturbance, plant: PlantSpec):
    """One RK4 step of the plant flow with the exact controller flow.

    The estimate advances by the closed-form flow of its autonomous
    dynamics, so its path does not depend on h. `disturbance` may be None.
    """
    if not h > 0.0:
        raise ValueError("step h must be positive")
    x = np.asarray(x, dtype=float)
    xhat = np.asarray(xhat, dtype=float)
    smap = _make_step_map(plant, h)
    x_new = smap.Rxx @ x + smap.Rxh @ xhat
    if disturbance is not None and not disturbance.is_zero:
        v = disturbance.sample_grid(np.array([t, t + 0.5 * h, t + h]))
        x_new = x_new + smap.Sv1 @ v[0] + smap.Sv2 @ v[1] + smap.Sv3 @ v[2]
    return x_new, smap.Ehat @ xhat


# ------------------------------------------------------------------ runner


class _Runner:
    """Single-run event loop: vector blocks between events, scalar repair
    steps around them. Samples land on the uniform grid t0 + i*step."""

    def __init__(self, config: ScenarioConfig, consts: DesignConstants):
        self.config = config
        self.consts = consts
        self.scenario = config.scenario
        self.n = consts.n
        self.h = float(config.step)
        self.t0 = float(config.t0)

        steps = round(config.horizon / self.h)
        if abs(steps * self.h - config.horizon) > 1e-9:
            raise ConfigError("horizon must be an integral number of steps")
        self.N = steps  # 0 is allowed: the trace is the initial sample alone

        self.pbar = config.pbar if config.pbar is not None else consts.pbar
        if self.scenario is not Scenario.INST_FINITE and self.pbar is None:
            raise ConfigError("bounded scenarios need the per-axis budget pbar")

        self.dist = config.disturbance or Disturbance.zero(self.n)
        if self.dist.dim != self.n:
            raise ConfigError("disturbance dimension does not match the plant")
        if self.dist.nu > consts.nu * (1.0 + 1e-12):
            raise ConfigError("disturbance bound exceeds the design bound nu")

        self._validate_delay()

        x0, xhat0 = config.x0, config.xhat0
        if x0.shape != (self.n,):
            raise ConfigError(f"x0 must have shape ({self.n},)")
        de0 = config.resolved_de0()
        if de0 < float(np.max(np.abs(x0 - xhat0))):
            raise ConfigError("de0 must cover ||x0 - xhat0||_inf")

        self.enc = CodecState(consts, xhat0, de0, self.t0, side="encoder")
        self.dec = CodecState(consts, xhat0, de0, self.t0, side="decoder")

        self._check_initial_state(x0, de0)

        # trace storage on the integration grid
        total = self.N + 1
        self.Xs = np.empty((total, self.n))
        self.XHs = np.empty((total, self.n))
        self.Vs = np.empty(total)
        self.Vds = np.empty(total)
        self.Bs = np.empty(total)
        self.DEs = np.empty(total)
        self.EPSs = np.empty(total)

        self.events: list[TransmissionEvent] = []
        self.i = 0
        self.t_cur = self.t0
        self.x = x0.copy()
        self.xh = xhat0.copy()

        self._full_map = _make_step_map(consts.plant, self.h)
        self._EAh = mat_exp(consts.plant.A, self.h)

    # ------------------------------------------------------------- set-up

    def _validate_delay(self):
        delay = self.config.delay
        if self.scenario is not Scenario.NONINST_BOUNDED:
            if delay.delay(max(self.pbar or 1, 1), self.n) != 0.0:
                raise ConfigError("instantaneous scenarios take a zero delay")
            return
        TM = self.consts.TM
        if TM is None:
            raise ConfigError("non-instantaneous runs need TM in the constants")
        worst = delay.delay(self.pbar, self.n)
        if worst > TM * (1.0 + 1e-12):
            raise ConfigError("worst-case delay exceeds the ceiling TM")
        budget = min(
            self.consts.gamma11, self.consts.T, t_star(self.pbar, self.consts)
        )
        if not TM < budget:
            raise ConfigError("TM must stay below the trigger look-ahead budget")

    def _check_initial_state(self, x0, de0):
        snap = self._snapshot(self.t0, x0, de0)
        if snap.b > 1.0:
            raise ConfigError("initial state violates V(x0) <= Vd(t0)")
        if self.scenario is Scenario.INST_BOUNDED:
            if h_ch(snap, self.consts) > 2.0**self.pbar:
                raise ConfigError("initial channel demand exceeds the bit budget")
        elif self.scenario is Scenario.NONINST_BOUNDED:
            level = hbar_ch(
                self.consts.TM,
                snap.b,
                snap.eps,
                snap.eps / 2.0**self.pbar,
                self.consts,
            )
            if level > 1.0:
                raise ConfigError("initial channel demand exceeds the bit budget")

    # ------------------------------------------------------------ helpers

    def _grid_t(self, i: int) -> float:
        return self.t0 + i * self.h

    def _snapshot(self, t: float, x, de: float) -> TriggerSnapshot:
        Vd = self.consts.vd(t, self.t0)
        V = self.consts.v_of(x)
        eps = de / (self.consts.c * math.sqrt(Vd))
        return TriggerSnapshot(t=t, b=V / Vd, eps=eps, de=de, Vd=Vd)

    def _levels_at(self, t: float, x) -> tuple[float, float]:
        snap = self._snapshot(t, x, self.enc.de_at(t))
        return trigger_levels(self.scenario, snap, self.consts, self.pbar)

    def _state_at_offset(self, tau: float):
        """Flow the cursor state forward by tau (one partial RK4 step)."""
        if tau == 0.0:
            return self.x, self.xh
        return integrate_step(
            self.x, self.xh, self.t_cur, tau, self.dist, self.consts.plant
        )

    def _advance_cursor(self, tau: float):
        if tau == 0.0:
            return
        self.x, self.xh = self._state_at_offset(tau)
        self.t_cur = self.t_cur + tau

    # ------------------------------------------------------------- blocks

    def _integrate_block(self, i0: int, m: int):
        """m full steps from grid index i0; returns (m+1, n) state arrays."""
        smap = self._full_map
        X = np.empty((m + 1, self.n))
        XH = np.empty((m + 1, self.n))
        X[0] = self.x
        XH[0] = self.xh
        if not self.dist.is_zero:
            base = self.t0 + self.h * np.arange(i0, i0 + m)
            F = (
                self.dist.sample_grid(base) @ smap.Sv1.T
                + self.dist.sample_grid(base + 0.5 * self.h) @ smap.Sv2.T
                + self.dist.sample_grid(base + self.h) @ smap.Sv3.T
            )
            for q in range(m):
                X[q + 1] = smap.Rxx @ X[q] + smap.Rxh @ XH[q] + F[q]
                XH[q + 1] = smap.Ehat @ XH[q]
        else:
            for q in range(m):
                X[q + 1] = smap.Rxx @ X[q] + smap.Rxh @ XH[q]
                XH[q + 1] = smap.Ehat @ XH[q]
        return X, XH

    def _de_block(self, i0: int, m: int) -> np.ndarray:
        """Certified error bound at grid points i0..i0+m under the current law."""
        base = mat_exp(self.consts.plant.A, self._grid_t(i0) - self.enc.ref_t)
        pows = np.empty((m + 1, self.n, self.n))
        pows[0] = np.eye(self.n)
        for q in range(m):
            pows[q + 1] = pows[q] @ self._EAh
        norms = np.abs(pows @ base).sum(axis=2).max(axis=1)
        de = norms * self.enc.ref_delta
        nu = self.consts.nu
        if nu > 0.0:
            s = self.consts.norm_A2
            taus = (self._grid_t(i0) - self.enc.ref_t) + self.h * np.arange(m + 1)
            rise = np.expm1(s * taus) / s if s > 0.0 else taus.copy()
            de = de + nu * rise
        return de

    def _levels_block(self, B: np.ndarray, EPS: np.ndarray):
        """Vectorized trigger levels; mirrors trigger_levels pointwise."""
        c = self.consts
        if self.scenario is Scenario.INST_FINITE:
            return B, np.full_like(B, -math.inf)
        if self.scenario is Scenario.INST_BOUNDED:
            chan = EPS / (c.c3 * (1.0 - B) + 1.0) / 2.0**self.pbar
            return B, chan
        bt = self._bt_cb * B + self._bt_ce * EPS + self._bt_cc
        chan = (self._hb_k1 * EPS / 2.0**self.pbar + self._hb_k2) / (
            c.c3 * (1.0 - bt) + 1.0
        )
        return bt, chan

    def _prepare_level_coeffs(self):
        """Affine coefficients of the look-ahead levels in (b, eps)."""
        c = self.consts
        if self.scenario is Scenario.NONINST_BOUNDED:
            TM = c.TM
            self._bt_cc = btilde(TM, 0.0, 0.0, c)
            self._bt_cb = btilde(TM, 1.0, 0.0, c) - self._bt_cc
            self._bt_ce = btilde(TM, 0.0, 1.0, c) - self._bt_cc
            self._hb_k1 = inf_norm_growth(TM, c)
            self._hb_k2 = alpha(TM, c)

    # ------------------------------------------------------ event handling

    def _commit_row(self, idx: int, x, xh):
        t = self._grid_t(idx)
        V = self.consts.v_of(x)
        Vd = self.consts.vd(t, self.t0)
        de = self.enc.de_at(t)
        self.Xs[idx] = x
        self.XHs[idx] = xh
        self.Vs[idx] = V
        self.Vds[idx] = Vd
        self.Bs[idx] = V / Vd
        self.DEs[idx] = de
        self.EPSs[idx] = de / (self.consts.c * math.sqrt(Vd))
        self._check_invariants(idx, idx)

    def _check_invariants(self, lo: int, hi: int):
        V = self.Vs[lo : hi + 1]
        Vd = self.Vds[lo : hi + 1]
        bad = np.flatnonzero(V > Vd * (1.0 + 1e-6))
        if bad.size:
            idx = lo + int(bad[0])
            raise CertificationError(
                f"performance breach: V exceeds Vd at t = {self._grid_t(idx):.6f}",
                trace=self._build_trace(upto=idx),
            )
        xe = np.abs(self.Xs[lo : hi + 1] - self.XHs[lo : hi + 1]).max(axis=1)
        bad = np.flatnonzero(xe > self.DEs[lo : hi + 1])
        if bad.size:
            idx = lo + int(bad[0])
            raise CertificationError(
                f"encoding-error breach: ||x_e|| exceeds de at t = {self._grid_t(idx):.6f}",
                trace=self._build_trace(upto=idx),
            )

    def _apply_reception(self, packet: Packet):
        self.enc.receive(packet)
        self.dec.receive(packet)
        ev = self.events[-1]
        ev.received = True
        ev.sync = states_match(self.enc, self.dec)
        if not ev.sync:
            raise CertificationError(
                f"encoder and decoder disagree after reception {packet.k}",
                trace=self._build_trace(upto=self.i),
            )
        self.xh = self.dec.xhat_seg.copy()

    def _fire(self, cause: str):
        """Transmit at the cursor; apply the jump now if the delay is zero."""
        t_send = self.t_cur
        if self.events and not t_send > self.events[-1].t_send:
            raise CertificationError(
                f"non-increasing transmission times at t = {t_send:.6f}",
                trace=self._build_trace(upto=self.i),
            )

        de = self.enc.de_at(t_send)
        snap = self._snapshot(t_send, self.x, de)
        k_next = self.enc.k + 1
        p = min_bits(self.scenario, snap, self.consts, self.pbar)
        override = (self.config.pk_override or {}).get(k_next)
        if override is not None:
            if override < p:
                raise ConfigError(
                    f"pk_override[{k_next}] = {override} is below the admissible minimum {p}"
                )
            if self.pbar is not None and override > self.pbar:
                raise ConfigError(
                    f"pk_override[{k_next}] = {override} exceeds the budget pbar"
                )
            p = override

        delta = self.config.delay.delay(p, self.n)
        if self.scenario is Scenario.NONINST_BOUNDED:
            if delta > self.consts.TM * (1.0 + 1e-12):
                raise ConfigError("per-event delay exceeds the ceiling TM")
        t_recv = t_send + delta
        if self.events and not t_recv > self.events[-1].t_receive:
            raise CertificationError(
                f"non-increasing reception times at t = {t_send:.6f}",
                trace=self._build_trace(upto=self.i),
            )
        packet = self.enc.transmit(self.x, t_send, p, t_recv)
        self.events.append(
            TransmissionEvent(
                k=packet.k,
                t_send=t_send,
                t_receive=t_recv,
                p=p,
                bits=self.n * p,
                cause=cause,
                index=packet.index,
                b_pre=snap.b,
                eps_pre=snap.eps,
                de_pre=snap.de,
            )
        )
        if delta == 0.0:
            self._apply_reception(packet)

    def _maybe_fire_at_cursor(self) -> bool:
        """Fire immediately when a clause already holds at the cursor."""
        if self.enc.pending is not None:
            return False
        perf, chan = self._levels_at(self.t_cur, self.x)
        if perf < 1.0 and chan < 1.0:
            return False
        cause = "performance" if perf >= chan else "channel"
        self._fire(cause)
        return True

    def _try_fire_within(self, width: float) -> bool:
        """Bisect (0, width] from the cursor; fire just below the crossing."""
        x_hi, _ = self._state_at_offset(width)
        perf_hi, chan_hi = self._levels_at(self.t_cur + width, x_hi)
        if perf_hi < 1.0 and chan_hi < 1.0:
            return False
        lo, hi = 0.0, width
        while hi - lo > EVENT_TOL:
            mid = 0.5 * (lo + hi)
            x_mid, _ = self._state_at_offset(mid)
            perf_m, chan_m = self._levels_at(self.t_cur + mid, x_mid)
            if perf_m >= 1.0 or chan_m >= 1.0:
                hi = mid
                perf_hi, chan_hi = perf_m, chan_m
            else:
                lo = mid
        cause = "performance" if perf_hi >= chan_hi else "channel"
        self._advance_cursor(lo)
        self._fire(cause)
        return True

    def _walk_to_next_grid(self):
        """Advance an off-grid cursor to the next grid point, honoring any
        reception and any trigger crossing inside the remaining sliver."""
        target_idx = self.i + 1
        target = self._grid_t(target_idx)
        while True:
            pend = self.enc.pending
            r = pend.t_receive if pend is not None else math.inf
            if r <= target:
                self._advance_cursor(r - self.t_cur)
                self.t_cur = r  # pin the reception instant exactly
                self._apply_reception(pend)
                self._maybe_fire_at_cursor()
                continue
            if pend is None and self.t_cur < target:
                if self._try_fire_within(target - self.t_cur):
                    continue
            self._advance_cursor(target - self.t_cur)
            self.i = target_idx
            self.t_cur = target
            self._commit_row(target_idx, self.x, self.xh)
            return

    # --------------------------------------------------------- main phases

    def _advance_monitored(self):
        i0 = self.i
        m = min(_CHUNK, self.N - i0)
        X, XH = self._integrate_block(i0, m)
        DE = self._de_block(i0, m)
        T = self.t0 + self.h * np.arange(i0, i0 + m + 1)
        V = np.einsum("ij,jk,ik->i", X, self.consts.P, X)
        Vd = (self.consts.perf.Vd0 - self.consts.V0) * np.exp(
            -self.consts.beta * (T - self.t0)
        ) + self.consts.V0
        B = V / Vd
        EPS = DE / (self.consts.c * np.sqrt(Vd))
        perf, chan = self._levels_block(B, EPS)
        lev = np.maximum(perf, chan)
        cross = np.flatnonzero((lev[:-1] < 1.0) & (lev[1:] >= 1.0))
        upto = int(cross[0]) if cross.size else m

        sl = slice(i0 + 1, i0 + upto + 1)
        self.Xs[sl] = X[1 : upto + 1]
        self.XHs[sl] = XH[1 : upto + 1]
        self.Vs[sl] = V[1 : upto + 1]
        self.Vds[sl] = Vd[1 : upto + 1]
        self.Bs[sl] = B[1 : upto + 1]
        self.DEs[sl] = DE[1 : upto + 1]
        self.EPSs[sl] = EPS[1 : upto + 1]
        self.i = i0 + upto
        self.t_cur = self._grid_t(self.i)
        self.x = X[upto].copy()
        self.xh = XH[upto].copy()
        if upto > 0:
            self._check_invariants(i0 + 1, i0 + upto)

        if cross.size:
            # crossing flagged inside step (t_i, t_i + h]; the scalar pass
            # re-checks it and either fires or advances past a razor edge
            if not self._try_fire_within(self.h):
                self._advance_cursor(self.h)
                self.i += 1
                self.t_cur = self._grid_t(self.i)
                self._commit_row(self.i, self.x, self.xh)
                return
            self._walk_to_next_grid()

    def _advance_flight(self):
        r = self.enc.pending.t_receive
        i0 = self.i
        if r > self._grid_t(self.N):
            # reception beyond the horizon: integrate out the grid
            m = min(_CHUNK, self.N - i0)
            self._commit_plain_block(i0, m)
            return
        j = int(math.ceil((r - self.t0) / self.h - 1e-12)) - 1
        j = max(i0, min(j, self.N - 1))
        if j > i0:
            m = min(_CHUNK, j - i0)
            self._commit_plain_block(i0, m)
            if self.i < j:
                return
        self._walk_to_next_grid()

    def _commit_plain_block(self, i0: int, m: int):
        X, XH = self._integrate_block(i0, m)
        DE = self._de_block(i0, m)
        T = self.t0 + self.h * np.arange(i0, i0 + m + 1)
        V = np.einsum("ij,jk,ik->i", X, self.consts.P, X)
        Vd = (self.consts.perf.Vd0 - self.consts.V0) * np.exp(
            -self.consts.beta * (T - self.t0)
        ) + self.consts.V0
        sl = slice(i0 + 1, i0 + m + 1)
        self.Xs[sl] = X[1:]
        self.XHs[sl] = XH[1:]
        self.Vs[sl] = V[1:]
        self.Vds[sl] = Vd[1:]
        self.Bs[sl] = (V / Vd)[1:]
        self.DEs[sl] = DE[1:]
        self.EPSs[sl] = (DE / (self.consts.c * np.sqrt(Vd)))[1:]
        self.i = i0 + m
        self.t_cur = self._grid_t(self.i)
        self.x = X[m].copy()
        self.xh = XH[m].copy()
        self._check_invariants(i0 + 1, i0 + m)

    # -------------------------------------------------------------- driver

    def run(self) -> SimTrace:
        self._prepare_level_coeffs()
        self._commit_row(0, self.x, self.xh)
        self._maybe_fire_at_cursor()
        while self.i < self.N:
            if self.enc.pending is not None:
                self._advance_flight()
            else:
                self._advance_monitored()
        return self._build_trace()

    def _build_trace(self, upto: int | None = None) -> SimTrace:
        end = (upto if upto is not None else self.i) + 1
        t = self.t0 + self.h * np.arange(end)
        return SimTrace(
            scenario=self.scenario,
            t=t,
            x=self.Xs[:end].copy(),
            xhat=self.XHs[:end].copy(),
            V=self.Vs[:end].copy(),
            Vd=self.Vds[:end].copy(),
            b=self.Bs[:end].copy(),
            de=self.DEs[:end].copy(),
            eps=self.EPSs[:end].copy(),
            events=list(self.events),
            config=self.config,
            consts=self.consts,
        )


def run(config: ScenarioConfig, consts: DesignConstants) -> SimTrace:
    """Simulate one closed-loop run and return its trace.

    Raises ConfigError when the configuration violates a standing
    assumption, and CertificationError (with the partial trace attached)
    when a certified invariant breaks mid-run.
    """
    return _Runner(config, consts).run()
