"""Shared fixtures: the second-order reference design used across the suite.

The plant is open-loop unstable, single-input, stabilized by static state
feedback; the envelope decays at 80 percent of the closed-loop Lyapunov
rate. Exact rational/irrational oracle values for this design live in the
individual test modules next to the assertions that use them.
"""

import numpy as np
import pytest

from etcsim.design import PerformanceSpec, PlantSpec, derive_constants

A_REF = np.array([[1.0, -2.0], [1.0, 4.0]])
B_REF = np.array([[0.0], [1.0]])
K_REF = np.array([[2.0, -8.0]])
Q_REF = np.eye(2)

# quadratic-formula eigenvalues of the exact Lyapunov solution
LAM_MIN_P = (17.0 - np.sqrt(221.0)) / 12.0
LAM_MAX_P = (17.0 + np.sqrt(221.0)) / 12.0
# beta = 0.8 * lam_min(Q)/lam_max(P)
BETA_REF = 0.8 / LAM_MAX_P

X0_REF = np.array([6.0, -4.0])
V_X0 = 403.0 / 3.0  # x0' P x0 by exact arithmetic
VD0_REF = 1.1 * V_X0
DE0_REF = 12.0
NU_REF = 0.01
TM_REF = 1.1e-3


def make_plant(nu: float = 0.0) -> PlantSpec:
    return PlantSpec(A=A_REF, B=B_REF, K=K_REF, Q=Q_REF, nu=nu)


def make_perf() -> PerformanceSpec:
    return PerformanceSpec(Vd0=VD0_REF, beta=BETA_REF)


@pytest.fixture(scope="session")
def consts_nominal():
    """Reference design, no disturbance, default look-ahead."""
    return derive_constants(make_plant(), make_perf())


@pytest.fixture(scope="session")
def consts_nominal_p20():
    """Reference design, no disturbance, 20-bit budget, delay budget TM."""
    return derive_constants(make_plant(), make_perf(), pbar=20, TM=TM_REF)


@pytest.fixture(scope="session")
def consts_disturbed():
    """Reference design with nu = 0.01, 20-bit budget, delay budget TM."""
    return derive_constants(make_plant(NU_REF), make_perf(), pbar=20, TM=TM_REF)
