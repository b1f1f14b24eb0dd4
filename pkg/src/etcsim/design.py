"""Controller and trigger design constants.

Given a plant (A, B, K, Q, disturbance bound nu) and a performance target
(initial envelope Vd0, residual level V0, decay rate beta, margins a and
sigma), this module derives every constant the trigger machinery consumes:

    P                solution of P Abar + Abar' P = -Q, Abar = A + B K
    W                lam_min(Q)/lam_max(P) - a*beta   (must be positive)
    w                lam_min(Q)/lam_max(P) - beta
    theta            ||A||_2 + beta/2
    theta_bar        ||A||_inf + beta/2
    c                W sqrt(lam_min(P)) / (2 sqrt(n) ||P B K||_2)
    c1               2 ||P||_2 nu / (sqrt(lam_min(P)) sqrt(V0))   [0 if nu = 0]
    c2               W nu / (c ||A||_2 sqrt(V0))                  [0 if nu = 0]
    c3               (w + theta) / (W (e^{(w+theta) T} - 1))
    gamma11          Gamma_1(1, 1), the worst-case performance recovery time
    T                look-ahead horizon (default 0.5 * gamma11)
    t_star           first tau with phi(tau, 2^-pbar) = 1 (needs pbar)

The disturbance terms c1, c2 and every nu/||A|| growth term are identically
zero when nu = 0, regardless of V0 (including V0 = 0): with no disturbance
the quantization error bound contracts with no additive inflation, so the
residual level never enters the comparison dynamics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DesignError
from .mat_core import (
    inf_norm,
    is_hurwitz,
    solve_lyapunov,
    spectral_norm,
    sym_eig_extrema,
)

__all__ = [
    "PlantSpec",
    "PerformanceSpec",
    "DesignConstants",
    "AssumptionCheck",
    "v0_equality_level",
    "derive_constants",
    "validate_assumptions",
]

# Below this induced 2-norm of A, nu/||A|| growth factors use their
# removable-singularity limit (nu * tau).
NORM_A_TINY = 1e-12


@dataclass(frozen=True)
class PlantSpec:
    """Plant dx/dt = A x + B u + v with u = K xhat and ||v(t)||_2 <= nu."""

    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    Q: np.ndarray
    nu: float = 0.0

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        n = A.shape[0]
        if A.shape != (n, n):
            raise DesignError(f"A must be square, got {A.shape}")
        if B.shape[0] != n:
            raise DesignError(f"B must have {n} rows, got {B.shape}")
        m = B.shape[1]
        if K.shape != (m, n):
            raise DesignError(f"K must be {m}x{n}, got {K.shape}")
        if Q.shape != (n, n):
            raise DesignError(f"Q must be {n}x{n}, got {Q.shape}")
        if not np.allclose(Q, Q.T, atol=1e-9):
            raise DesignError("Q must be symmetric")
        if self.nu < 0.0:
            raise DesignError("nu must be nonnegative")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def Abar(self) -> np.ndarray:
        return self.A + self.B @ self.K


@dataclass(frozen=True)
class PerformanceSpec:
    """Prescribed envelope V_d(t) = (Vd0 - V0) e^{-beta (t - t0)} + V0.

    V0 = None asks the design to pick it: 0 when nu = 0, the smallest
    admissible level (disturbance condition at equality) when nu > 0.
    """

    Vd0: float
    beta: float
    a: float = 1.2
    sigma: float = 0.9
    V0: float | None = None

    def __post_init__(self):
        if self.Vd0 <= 0.0:
            raise DesignError("Vd0 must be positive")
        if self.beta <= 0.0:
            raise DesignError("beta must be positive")
        if self.a <= 1.0:
            raise DesignError("margin constant a must exceed 1")
        if not 0.0 < self.sigma < 1.0:
            raise DesignError("sigma must lie in (0, 1)")
        if self.V0 is not None:
            if self.V0 < 0.0:
                raise DesignError("V0 must be nonnegative")
            if self.Vd0 <= self.V0:
                raise DesignError("Vd0 must exceed V0")

    def vd(self, t: float, t0: float = 0.0, v0: float | None = None) -> float:
        """Envelope value at time t (closed form, never integrated)."""
        v0 = self.V0 if v0 is None else v0
        if v0 is None:
            v0 = 0.0
        return (self.Vd0 - v0) * math.exp(-self.beta * (t - t0)) + v0


@dataclass(frozen=True)
class DesignConstants:
    """Everything the triggers consume, derived once and immutable."""

    plant: PlantSpec
    perf: PerformanceSpec
    P: np.ndarray
    lam_m_P: float
    lam_M_P: float
    lam_m_Q: float
    norm_P2: float
    norm_A2: float
    norm_Ainf: float
    W: float
    w: float
    theta: float
    theta_bar: float
    c: float
    c1: float
    c2: float
    V0: float
    gamma11: float
    T: float
    c3: float
    t_star: float | None = None
    TM: float | None = None
    pbar: int | None = None
    # c2 * ||A||_2; stays finite when ||A|| -> 0 and carries the c2 terms there
    c2a: float = field(default=0.0)
    # nu / (c sqrt(V0)); scales every residual growth term; 0 when nu = 0
    alpha_scale: float = field(default=0.0)

    @property
    def n(self) -> int:
        return self.plant.n

    @property
    def beta(self) -> float:
        return self.perf.beta

    @property
    def nu(self) -> float:
        return self.plant.nu

    def vd(self, t: float, t0: float = 0.0) -> float:
        return (self.perf.Vd0 - self.V0) * math.exp(-self.beta * (t - t0)) + self.V0

    def v_of(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(x @ self.P @ x)

    def horizon(self) -> float:
        """Search horizon for crossing, beyond which +inf is declared."""
        cap = 700.0 / (self.w + self.theta)  # exp overflow guard
        return min(1e4 * max(self.gamma11, self.T), cap)


def v0_equality_level(
    norm_P2: float, lam_m_P: float, nu: float, sigma: float, a: float, beta: float
) -> float:
    """Smallest admissible residual level V0 for a given disturbance bound.

    sqrt(V0) >= 2 ||P|| nu / (sigma (a - 1) beta sqrt(lam_min(P))), squared
    at equality.
    """
    root = 2.0 * norm_P2 * nu / (sigma * (a - 1.0) * beta * math.sqrt(lam_m_P))
    return root * root


def derive_constants(
    plant: PlantSpec,
    perf: PerformanceSpec,
    T: float | None = None,
    pbar: int | None = None,
    TM: float | None = None,
) -> DesignConstants:
    """Derive the full constant set; raises DesignError on infeasibility.

    T = None uses the default look-ahead 0.5 * Gamma_1(1,1). pbar is needed
    only when t_star (and hence a non-instantaneous TM budget) is wanted.
    """
    if not is_hurwitz(plant.Abar):
        raise DesignError("A + B K is not Hurwitz")
    lam_m_Q, _ = sym_eig_extrema(plant.Q)
    if lam_m_Q <= 0.0:
        raise DesignError("Q must be positive definite")
    P = solve_lyapunov(plant.Abar, plant.Q)
    lam_m_P, lam_M_P = sym_eig_extrema(P)
    norm_P2 = spectral_norm(P)
    norm_A2 = spectral_norm(plant.A)
    norm_Ainf = inf_norm(plant.A)

    beta = perf.beta
    W = lam_m_Q / lam_M_P - perf.a * beta
    if W <= 0.0:
        raise DesignError(
            f"convergence rate infeasible: W = lam_m(Q)/lam_M(P) - a*beta = {W:.6g} <= 0"
        )
    w = lam_m_Q / lam_M_P - beta
    theta = norm_A2 + beta / 2.0
    theta_bar = norm_Ainf + beta / 2.0

    n = plant.n
    norm_PBK = spectral_norm(P @ plant.B @ plant.K)
    if norm_PBK <= 0.0:
        raise DesignError("P B K vanishes: the feedback path is degenerate")
    c = W * math.sqrt(lam_m_P) / (2.0 * math.sqrt(n) * norm_PBK)

    nu = plant.nu
    if nu == 0.0:
        V0 = 0.0 if perf.V0 is None else float(perf.V0)
        c1 = 0.0
        c2 = 0.0
        c2a = 0.0
        alpha_scale = 0.0
    else:
        v0_min = v0_equality_level(norm_P2, lam_m_P, nu, perf.sigma, perf.a, beta)
        V0 = v0_min if perf.V0 is None else float(perf.V0)
        if V0 < v0_min * (1.0 - 1e-12):
            raise DesignError(
                f"disturbance/V0 incompatible: V0 = {V0:.6g} below the "
                f"admissible floor {v0_min:.6g}"
            )
        sqrt_V0 = math.sqrt(V0)
        c1 = 2.0 * norm_P2 * nu / (math.sqrt(lam_m_P) * sqrt_V0)
        c2a = W * nu / (c * sqrt_V0)
        c2 = c2a / norm_A2 if norm_A2 >= NORM_A_TINY else math.inf
        alpha_scale = nu / (c * sqrt_V0)
    if perf.Vd0 <= V0:
        raise DesignError(f"Vd0 = {perf.Vd0:.6g} must exceed V0 = {V0:.6g}")

    consts = DesignConstants(
        plant=plant,
        perf=perf,
        P=P,
        lam_m_P=lam_m_P,
        lam_M_P=lam_M_P,
        lam_m_Q=lam_m_Q,
        norm_P2=norm_P2,
        norm_A2=norm_A2,
        norm_Ainf=norm_Ainf,
        W=W,
        w=w,
        theta=theta,
        theta_bar=theta_bar,
        c=c,
        c1=c1,
        c2=c2,
        c2a=c2a,
        alpha_scale=alpha_scale,
        V0=V0,
        gamma11=math.nan,
        T=math.nan,
        c3=math.nan,
        pbar=pbar,
    )

    from . import triggers  # deferred: triggers type-annotates against this module

    gamma11 = triggers.gamma1(1.0, 1.0, consts)
    if not gamma11 > 0.0:
        raise DesignError("Gamma_1(1,1) is not positive: design infeasible")
    T_val = 0.5 * gamma11 if T is None else float(T)
    if T_val <= 0.0:
        raise DesignError("look-ahead horizon T must be positive")
    c3 = (w + theta) / (W * math.expm1((w + theta) * T_val))
    consts = replace(consts, gamma11=gamma11, T=T_val, c3=c3)

    t_star_val = None
    if pbar is not None:
        if pbar < 1:
            raise DesignError("pbar must be at least 1")
        t_star_val = triggers.t_star(pbar, consts)
        consts = replace(consts, t_star=t_star_val)

    if TM is not None:
        if TM < 0.0:
            raise DesignError("TM must be nonnegative")
        if TM > 0.0:
            budget = min(gamma11, T_val, t_star_val if t_star_val is not None else math.inf)
            if TM >= budget:
                raise DesignError(
                    f"Assumption (A) violated: TM = {TM:.6g} is not below "
                    f"min(Gamma_1(1,1), T, T*) = {budget:.6g}"
                )
        consts = replace(consts, TM=float(TM))

    return consts


@dataclass(frozen=True)
class AssumptionCheck:
    name: str
    passed: bool
    detail: str


def validate_assumptions(
    plant: PlantSpec,
    perf: PerformanceSpec,
    consts: DesignConstants | None = None,
) -> list[AssumptionCheck]:
    """Pass/fail table of the standing assumptions. Reports, never raises.

    Recomputes the basic quantities from (plant, perf) so that infeasible
    designs (where derive_constants refuses) still produce a full table;
    consts, when given, adds the checks that need derived quantities (TM
    budget, resolved V0).
    """
    checks: list[AssumptionCheck] = []

    hurwitz = is_hurwitz(plant.Abar)
    checks.append(
        AssumptionCheck(
            "Abar Hurwitz",
            hurwitz,
            "all eigenvalues of A + B K have negative real part"
            if hurwitz
            else "A + B K has an eigenvalue with nonnegative real part",
        )
    )

    lam_m_Q, _ = sym_eig_extrema(plant.Q)
    checks.append(
        AssumptionCheck(
            "Q positive definite",
            lam_m_Q > 0.0,
            f"lam_min(Q) = {lam_m_Q:.6g}",
        )
    )

    if hurwitz and lam_m_Q > 0.0:
        P = consts.P if consts is not None else solve_lyapunov(plant.Abar, plant.Q)
        lam_m_P, lam_M_P = sym_eig_extrema(P)
        norm_P2 = spectral_norm(P)
        W = lam_m_Q / lam_M_P - perf.a * perf.beta
        w = lam_m_Q / lam_M_P - perf.beta
        checks.append(
            AssumptionCheck(
                "W > 0",
                W > 0.0,
                f"W = lam_m(Q)/lam_M(P) - a*beta = {W:.6g}",
            )
        )
        checks.append(
            AssumptionCheck(
                "w > 0",
                w > 0.0,
                f"w = lam_m(Q)/lam_M(P) - beta = {w:.6g}",
            )
        )

        if plant.nu > 0.0:
            v0_min = v0_equality_level(
                norm_P2, lam_m_P, plant.nu, perf.sigma, perf.a, perf.beta
            )
            v0 = consts.V0 if consts is not None else (perf.V0 if perf.V0 is not None else v0_min)
            checks.append(
                AssumptionCheck(
                    "V0 admissible for nu",
                    v0 >= v0_min * (1.0 - 1e-12),
                    f"V0 = {v0:.6g}, floor = {v0_min:.6g}",
                )
            )
        else:
            v0 = consts.V0 if consts is not None else (perf.V0 if perf.V0 is not None else 0.0)
        checks.append(
            AssumptionCheck(
                "Vd0 > V0",
                perf.Vd0 > v0,
                f"Vd0 = {perf.Vd0:.6g}, V0 = {v0:.6g}",
            )
        )

    if consts is not None and consts.TM is not None:
        budget = min(
            consts.gamma11,
            consts.T,
            consts.t_star if consts.t_star is not None else math.inf,
        )
        checks.append(
            AssumptionCheck(
                "TM < min(Gamma_1(1,1), T, T*)",
                consts.TM < budget,
                f"TM = {consts.TM:.6g}, budget = {budget:.6g}",
            )
        )

    # Applicability of the necessary-rate bound: no eigenvalue of A decays
    # faster than the prescribed envelope.
    min_re = float(np.min(np.linalg.eigvals(plant.A).real))
    checks.append(
        AssumptionCheck(
            "necessary-rate bound applicable",
            min_re >= -perf.beta,
            f"min Re(eig(A)) = {min_re:.6g} vs -beta = {-perf.beta:.6g}",
        )
    )

    return checks
