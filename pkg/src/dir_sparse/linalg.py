"""Dense linear-algebra kernels shared by the solvers.

Least-norm solves go through the thin QR of A.T; the spectral bound on
A A.T uses power iteration with a deterministic start; the prox/projection
operators are exact closed forms or exact breakpoint searches.
"""

import warnings

import numpy as np


class AccuracyWarning(UserWarning):
    """Raised when an iterative kernel stops before reaching its tolerance."""


# Rank tolerance for the triangular factor in the least-norm solve.
_RANK_RTOL = 1e-10

_POWER_MAX_ITER = 10_000
_POWER_RTOL = 1e-10


def least_norm_solution(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Minimum-norm solution of A x = b for a full-row-rank wide matrix.

    Uses the thin QR of A.T: with A.T = Q R, the solution is Q (R^-T b).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    Q, R = np.linalg.qr(A.T)
    rdiag = np.abs(np.diag(R))
    if rdiag.min() <= _RANK_RTOL * max(rdiag.max(), np.finfo(float).tiny):
        raise np.linalg.LinAlgError(
            "matrix is numerically rank deficient; least-norm solve is singular")
    y = np.linalg.solve(R.T, b)
    return Q @ y


def lambda_max_gram(A: np.ndarray) -> float:
    """Largest eigenvalue of A A.T by power iteration.

    Starts from the all-ones vector; one seeded random restart guards
    against a start vector orthogonal to the leading eigenvector.  Emits
    an AccuracyWarning (keeping the best estimate) if the Rayleigh
    quotient has not settled within the iteration cap.
    """
    A = np.asarray(A, dtype=float)
    m = A.shape[0]

    def _iterate(z):
        rho = rho_prev = 0.0
        for it in range(_POWER_MAX_ITER):
            y = A @ (A.T @ z)
            rho = float(z @ y)  # Rayleigh quotient at the unit vector z
            ny = np.linalg.norm(y)
            if ny == 0.0:
                return 0.0, True
            z = y / ny
            if it > 0 and abs(rho - rho_prev) <= _POWER_RTOL * max(rho, 1e-300):
                return rho, True
            rho_prev = rho
        return rho, False

    rho1, ok1 = _iterate(np.ones(m) / np.sqrt(m))
    z0 = np.random.default_rng(0).standard_normal(m)
    rho2, ok2 = _iterate(z0 / np.linalg.norm(z0))
    if not (ok1 and ok2):
        warnings.warn(
            f"power iteration did not settle within {_POWER_MAX_ITER} iterations; "
            f"returning best estimate {max(rho1, rho2):.6e}", AccuracyWarning)
    return max(rho1, rho2)


def soft_threshold(v: np.ndarray, t) -> np.ndarray:
    """Componentwise sign(v) * max(|v| - t, 0) for nonnegative thresholds t."""
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("soft threshold requires nonnegative thresholds")
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def project_l2_ball(y: np.ndarray, r: float) -> np.ndarray:
    """Euclidean projection onto the ball of radius r > 0."""
    if not r > 0:
        raise ValueError("ball radius must be positive")
    ny = np.linalg.norm(y)
    if ny <= r:
        return np.array(y, dtype=float, copy=True)
    return (r / ny) * np.asarray(y, dtype=float)


def project_weighted_l1_ball(y: np.ndarray, w: np.ndarray, tau: float) -> np.ndarray:
    """Euclidean projection of y onto {x : sum_i w_i |x_i| <= tau}, w > 0.

    The projection is sign(y_i) * max(|y_i| - theta w_i, 0) where theta >= 0
    solves the piecewise-linear equation sum_i w_i max(|y_i| - theta w_i, 0)
    = tau.  The exact root is found by sorting the breakpoints |y_i|/w_i and
    scanning the cumulative sums, so the result is exact up to rounding.

    Returns y itself (a copy) when already feasible and the zero vector when
    tau = 0.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    if tau < 0:
        raise ValueError("radius tau must be nonnegative")
    a = np.abs(y)
    if float(w @ a) <= tau:
        return y.copy()
    if tau == 0.0:
        return np.zeros_like(y)

    # Breakpoints z_j = |y_j|/w_j in decreasing order; with the active set
    # {z > theta} fixed, the equation is linear in theta.
    z = a / w
    order = np.argsort(z)[::-1]
    zs = z[order]
    cwa = np.cumsum((w * a)[order])
    cww = np.cumsum((w * w)[order])
    theta_cand = (cwa - tau) / cww
    # Valid candidate: theta_j >= next breakpoint, so coordinates j+1.. stay
    # inactive.  The first such j gives the exact multiplier.
    nxt = np.append(zs[1:], 0.0)
    j = int(np.argmax(theta_cand >= nxt))
    theta = float(theta_cand[j])
    return np.sign(y) * np.maximum(a - theta * w, 0.0)
