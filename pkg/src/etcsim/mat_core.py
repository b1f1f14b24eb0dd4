"""Dense real linear algebra primitives for small systems (n ~ 2..10).

Everything here is deterministic and dependency-free beyond numpy arrays as
the value type: matrix exponential by scaling and squaring, symmetric
eigen-extrema by cyclic Jacobi rotations, induced norms, and the continuous
Lyapunov equation by Kronecker vectorization. Sizes are tiny, so clarity and
reproducibility win over asymptotics everywhere.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DesignError

__all__ = [
    "mat_exp",
    "exp_rise",
    "sym_eig_extrema",
    "spectral_norm",
    "inf_norm",
    "solve_lyapunov",
    "is_hurwitz",
]

# Below this |s|, (e^{s tau} - 1)/s uses its removable limit tau.
_EXP_RISE_TINY = 1e-12


def exp_rise(s: float, tau: float) -> float:
    """(e^{s tau} - 1)/s, the integral of e^{s sigma} over [0, tau].

    The removable singularity at s = 0 returns the limit tau, so growth
    terms scaled by a vanishing system norm stay finite.
    """
    if abs(s) < _EXP_RISE_TINY:
        return tau
    return math.expm1(s * tau) / s

# Scaled 2-norm kept below this before the series is summed.
_EXP_SCALE_LIMIT = 0.5
# Truncation order of the Taylor series on the scaled matrix. With
# ||M|| < 0.5 the first neglected term is ||M||^18/18! < 4e-21, far
# below double-precision resolution of e^M (which has norm >= e^-0.5).
_EXP_SERIES_ORDER = 17

_JACOBI_TOL = 1e-12
_JACOBI_MAX_SWEEPS = 60


def _as_square(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    return M


def mat_exp(M, tau: float = 1.0) -> np.ndarray:
    """Matrix exponential e^{M tau} by scaling and squaring.

    tau may be negative (backward flow). The argument is scaled by powers
    of two until its 2-norm is below 0.5, the truncated Taylor series is
    summed by Horner's rule, and the result is squared back up.
    """
    M = _as_square(M)
    if not np.isfinite(tau):
        raise ValueError("tau must be finite")
    n = M.shape[0]
    A = M * tau
    norm = spectral_norm(A)
    s = 0
    if norm >= _EXP_SCALE_LIMIT:
        s = int(np.ceil(np.log2(norm / _EXP_SCALE_LIMIT))) + 1
    A = A / (2.0**s)

    E = np.eye(n) / float(_EXP_SERIES_ORDER)
    for k in range(_EXP_SERIES_ORDER - 1, 0, -1):
        E = A @ E + np.eye(n)
        E /= float(k)
    E = A @ E + np.eye(n)

    for _ in range(s):
        E = E @ E
    return E


def sym_eig_extrema(S) -> tuple[float, float]:
    """Smallest and largest eigenvalue of a symmetric matrix.

    Cyclic Jacobi rotations until the off-diagonal Frobenius mass falls
    below 1e-12 relative to the matrix scale.
    """
    S = _as_square(S)
    if not np.allclose(S, S.T, atol=1e-9):
        raise ValueError("matrix is not symmetric within 1e-9")
    A = 0.5 * (S + S.T)  # exact symmetry for the rotations
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0]), float(A[0, 0])

    scale = max(float(np.max(np.abs(A))), 1.0)
    for _ in range(_JACOBI_MAX_SWEEPS):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2) * 2.0)
        if off <= _JACOBI_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                # classical Jacobi rotation annihilating A[p, q]
                tau_pq = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(tau_pq) / (abs(tau_pq) + np.sqrt(1.0 + tau_pq**2))
                if tau_pq == 0.0:
                    t = 1.0
                cth = 1.0 / np.sqrt(1.0 + t**2)
                sth = t * cth
                G = np.eye(n)
                G[p, p] = cth
                G[q, q] = cth
                G[p, q] = sth
                G[q, p] = -sth
                A = G.T @ A @ G
                A = 0.5 * (A + A.T)
    diag = np.diag(A)
    return float(np.min(diag)), float(np.max(diag))


def spectral_norm(M) -> float:
    """Induced 2-norm: sqrt of the largest eigenvalue of M^T M."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    if M.ndim == 1:
        return float(np.sqrt(np.dot(M, M)))
    if np.all(M == 0.0):
        return 0.0
    _, lam_max = sym_eig_extrema(M.T @ M)
    return float(np.sqrt(max(lam_max, 0.0)))


def inf_norm(M) -> float:
    """Induced infinity norm: maximum absolute row sum (max |entry| for vectors)."""
    M = np.asarray(M, dtype=float)
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix entries must be finite")
    if M.ndim == 1:
        return float(np.max(np.abs(M))) if M.size else 0.0
    return float(np.max(np.sum(np.abs(M), axis=1)))


def is_hurwitz(M) -> bool:
    """True iff all eigenvalues of M have strictly negative real part."""
    M = _as_square(M)
    return bool(np.all(np.linalg.eigvals(M).real < 0.0))


def solve_lyapunov(Abar, Q) -> np.ndarray:
    """Solve P Abar + Abar^T P = -Q for symmetric positive definite P.

    Vectorizes to (I (x) Abar^T + Abar^T (x) I) vec(P) = -vec(Q) and solves
    the dense n^2 x n^2 system by elimination with partial pivoting. The
    result is symmetrized and validated: residual below 1e-9 * ||Q|| and
    positive definiteness via the eigen-extrema.
    """
    Abar = _as_square(Abar)
    Q = _as_square(Q)
    n = Abar.shape[0]
    if Q.shape != Abar.shape:
        raise ValueError("Abar and Q must have the same shape")
    if not np.allclose(Q, Q.T, atol=1e-9):
        raise ValueError("Q must be symmetric")
    if not is_hurwitz(Abar):
        raise DesignError("Abar is not Hurwitz: the Lyapunov equation is ill-posed")

    eye = np.eye(n)
    # vec(P Abar) = (Abar^T (x) I) vec(P), vec(Abar^T P) = (I (x) Abar^T) vec(P)
    lhs = np.kron(Abar.T, eye) + np.kron(eye, Abar.T)
    vecP = np.linalg.solve(lhs, -Q.reshape(n * n))
    P = vecP.reshape(n, n)
    P = 0.5 * (P + P.T)

    residual = inf_norm(P @ Abar + Abar.T @ P + Q)
    if residual > 1e-9 * max(inf_norm(Q), 1e-300):
        raise DesignError(f"Lyapunov residual {residual:.3e} exceeds tolerance")
    lam_min, _ = sym_eig_extrema(P)
    if lam_min <= 0.0:
        raise DesignError("computed P is not positive definite")
    return P
