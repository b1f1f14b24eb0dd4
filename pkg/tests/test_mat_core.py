"""Unit tests for the dense linear-algebra primitives.

Derived expected values are frozen from independent oracles, named inline:
quadratic formula for 2x2 symmetric eigenvalues, power iteration for the
spectral norm, residual substitution for the Lyapunov solve.
"""

import numpy as np
import pytest

from etcsim.errors import DesignError
from etcsim.mat_core import (
    inf_norm,
    is_hurwitz,
    mat_exp,
    solve_lyapunov,
    spectral_norm,
    sym_eig_extrema,
)

RNG = np.random.default_rng(20240901)


# ---------------------------------------------------------------- mat_exp


def test_mat_exp_zero_matrix_is_identity_exact():
    for n in (1, 2, 5):
        E = mat_exp(np.zeros((n, n)), 3.7)
        assert np.array_equal(E, np.eye(n))


def test_mat_exp_diagonal():
    E = mat_exp(np.diag([1.0, 2.0]), 1.0)
    expected = np.diag([np.e, np.e**2])
    assert np.allclose(E, expected, rtol=1e-13, atol=0)


def test_mat_exp_inverse_composition():
    # e^{M tau} e^{-M tau} = I, random M with entries in [-2, 2]
    for _ in range(50):
        n = int(RNG.integers(1, 6))
        M = RNG.uniform(-2.0, 2.0, size=(n, n))
        tau = float(RNG.uniform(0.0, 1.0))
        E = mat_exp(M, tau) @ mat_exp(M, -tau)
        assert np.max(np.abs(E - np.eye(n))) < 1e-10


def test_mat_exp_semigroup():
    M = np.array([[1.0, -2.0], [3.0, -4.0]])
    lhs = mat_exp(M, 0.3) @ mat_exp(M, 0.9)
    rhs = mat_exp(M, 1.2)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-14)


def test_mat_exp_norm_bound():
    # ||e^{M tau}|| <= e^{||M|| tau} for tau >= 0, both induced norms
    for _ in range(25):
        M = RNG.uniform(-2.0, 2.0, size=(3, 3))
        tau = float(RNG.uniform(0.0, 1.5))
        E = mat_exp(M, tau)
        assert spectral_norm(E) <= np.exp(spectral_norm(M) * tau) * (1 + 1e-12)
        assert inf_norm(E) <= np.exp(inf_norm(M) * tau) * (1 + 1e-12)


def test_mat_exp_rejects_bad_input():
    with pytest.raises(ValueError):
        mat_exp(np.ones((2, 3)), 1.0)
    with pytest.raises(ValueError):
        mat_exp(np.array([[np.nan, 0.0], [0.0, 1.0]]), 1.0)
    with pytest.raises(ValueError):
        mat_exp(np.eye(2), np.inf)


# ---------------------------------------------------------- sym_eig_extrema


def test_sym_eig_identity():
    assert sym_eig_extrema(np.eye(4)) == (1.0, 1.0)


def test_sym_eig_diagonal():
    lam_m, lam_M = sym_eig_extrema(np.diag([-3.0, 5.0]))
    assert lam_m == pytest.approx(-3.0, abs=1e-12)
    assert lam_M == pytest.approx(5.0, abs=1e-12)


def test_sym_eig_reference_matrix():
    # Quadratic-formula oracle on the 2x2 characteristic polynomial of
    # P = [[9/4, -11/12], [-11/12, 7/12]]: tr = 17/6, det = 17/36,
    # lambda = (17 +/- sqrt(221))/12.
    P = np.array([[9.0 / 4.0, -11.0 / 12.0], [-11.0 / 12.0, 7.0 / 12.0]])
    lam_m, lam_M = sym_eig_extrema(P)
    assert lam_m == pytest.approx((17.0 - np.sqrt(221.0)) / 12.0, abs=1e-10)
    assert lam_M == pytest.approx((17.0 + np.sqrt(221.0)) / 12.0, abs=1e-10)
    # four-decimal anchors: 0.17783, 2.65551
    assert lam_m == pytest.approx(0.177827604, abs=1e-8)
    assert lam_M == pytest.approx(2.655505729, abs=1e-8)


def test_sym_eig_returns_true_eigenvalues():
    # det(S - lambda I) = 0 within tolerance, random symmetric S
    for _ in range(40):
        n = int(RNG.integers(2, 7))
        X = RNG.uniform(-3.0, 3.0, size=(n, n))
        S = 0.5 * (X + X.T)
        lam_m, lam_M = sym_eig_extrema(S)
        assert lam_m <= lam_M
        scale = max(np.max(np.abs(S)), 1.0)
        for lam in (lam_m, lam_M):
            assert abs(np.linalg.det(S - lam * np.eye(n))) < 1e-8 * scale**n


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(ValueError):
        sym_eig_extrema(np.array([[0.0, 1.0], [0.5, 0.0]]))


# -------------------------------------------------------------- norms


def test_spectral_norm_basics():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-12)
    assert spectral_norm(np.diag([2.0, -7.0])) == pytest.approx(7.0, abs=1e-12)
    assert spectral_norm(np.zeros((2, 2))) == 0.0


def test_spectral_norm_vs_power_iteration():
    # Power-iteration oracle on M^T M
    for _ in range(20):
        M = RNG.uniform(-4.0, 4.0, size=(3, 3))
        S = M.T @ M
        v = RNG.uniform(0.1, 1.0, size=3)
        for _ in range(2000):
            v = S @ v
            v /= np.linalg.norm(v)
        oracle = np.sqrt(v @ S @ v)
        assert spectral_norm(M) == pytest.approx(oracle, abs=1e-8)


def test_inf_norm_basics():
    assert inf_norm(np.eye(3)) == 1.0
    # row sums of [[1, -2], [1, 4]] are 3 and 5
    assert inf_norm(np.array([[1.0, -2.0], [1.0, 4.0]])) == 5.0
    assert inf_norm(np.zeros((3, 3))) == 0.0
    assert inf_norm(np.array([1.0, -9.0, 2.0])) == 9.0


# ----------------------------------------------------------- solve_lyapunov


def test_lyapunov_negative_identity():
    # P(-I) + (-I)^T P = -2P = -Q  =>  P = Q/2
    P = solve_lyapunov(-np.eye(2), np.eye(2))
    assert np.allclose(P, 0.5 * np.eye(2), atol=1e-14)


def test_lyapunov_reference_solution():
    # Hand elimination of the 3-unknown symmetric system for
    # Abar = [[1, -2], [3, -4]], Q = I gives P = [[9/4, -11/12], [-11/12, 7/12]].
    Abar = np.array([[1.0, -2.0], [3.0, -4.0]])
    P = solve_lyapunov(Abar, np.eye(2))
    expected = np.array([[9.0 / 4.0, -11.0 / 12.0], [-11.0 / 12.0, 7.0 / 12.0]])
    assert np.max(np.abs(P - expected)) < 1e-12


def test_lyapunov_residual_random_stable():
    # Residual-substitution oracle on random Hurwitz matrices
    count = 0
    while count < 30:
        n = int(RNG.integers(2, 6))
        M = RNG.uniform(-2.0, 2.0, size=(n, n)) - 3.0 * np.eye(n)
        if not is_hurwitz(M):
            continue
        count += 1
        X = RNG.uniform(-1.0, 1.0, size=(n, n))
        Q = X @ X.T + 0.5 * np.eye(n)
        P = solve_lyapunov(M, Q)
        residual = inf_norm(P @ M + M.T @ P + Q)
        assert residual <= 1e-9 * inf_norm(Q)
        assert np.allclose(P, P.T, atol=0)


def test_lyapunov_positive_definite():
    Abar = np.array([[1.0, -2.0], [3.0, -4.0]])
    P = solve_lyapunov(Abar, np.eye(2))
    for _ in range(100):
        x = RNG.uniform(-5.0, 5.0, size=2)
        if np.linalg.norm(x) < 1e-9:
            continue
        assert x @ P @ x > 0.0


def test_lyapunov_norm_sandwich():
    # sqrt(lam_m) ||x|| <= sqrt(x'Px) <= sqrt(lam_M) ||x||
    Abar = np.array([[1.0, -2.0], [3.0, -4.0]])
    P = solve_lyapunov(Abar, np.eye(2))
    lam_m, lam_M = sym_eig_extrema(P)
    for _ in range(100):
        x = RNG.uniform(-5.0, 5.0, size=2)
        nx = np.linalg.norm(x)
        v = np.sqrt(x @ P @ x)
        assert np.sqrt(lam_m) * nx <= v * (1 + 1e-12)
        assert v <= np.sqrt(lam_M) * nx * (1 + 1e-12)


def test_lyapunov_rejects_non_hurwitz():
    with pytest.raises(DesignError):
        solve_lyapunov(np.array([[1.0, 0.0], [0.0, -1.0]]), np.eye(2))


def test_lyapunov_rejects_asymmetric_q():
    with pytest.raises(ValueError):
        solve_lyapunov(-np.eye(2), np.array([[1.0, 0.5], [0.0, 1.0]]))


def test_is_hurwitz():
    assert is_hurwitz(np.array([[1.0, -2.0], [3.0, -4.0]]))
    assert not is_hurwitz(np.array([[1.0, -2.0], [1.0, 4.0]]))
