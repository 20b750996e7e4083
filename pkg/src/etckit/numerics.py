"""Dense linear-algebra and scalar-analysis primitives.

Everything here is a pure function of its inputs; the rest of the toolkit
builds on these. Matrices are plain numpy arrays (row-major, float64).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import (
    AccuracyError,
    BracketError,
    DimensionError,
    InfeasibilityError,
    ValidationError,
)

SYM_TOL = 1e-10


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValidationError("matrix entries must be finite")
    return m


def as_vector(v) -> np.ndarray:
    x = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValidationError("vector entries must be finite")
    return x


def _require_square(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {m.shape}")
    return m


def _require_symmetric(m: np.ndarray, name: str = "matrix") -> np.ndarray:
    scale = max(np.linalg.norm(m), 1.0)
    if np.linalg.norm(m - m.T) > SYM_TOL * scale:
        raise ValidationError(f"{name} must be symmetric")
    return 0.5 * (m + m.T)


def mat_exp(a, t: float = 1.0) -> np.ndarray:
    """exp(A*t) via scaling-and-squaring with Pade approximation (scipy)."""
    m = _require_square(as_matrix(a), "A")
    if not np.isfinite(t):
        raise ValidationError("t must be finite")
    return scipy.linalg.expm(m * t)


def solve_lyapunov(a_cl, q) -> np.ndarray:
    """Solve A_cl' P + P A_cl + Q = 0 for symmetric P > 0.

    Uses the Kronecker vectorization (systems here are small, n <= 20).
    Raises InfeasibilityError if A_cl is not Hurwitz and ValidationError if
    Q is not symmetric positive definite.
    """
    A = _require_square(as_matrix(a_cl), "A_cl")
    Q = _require_symmetric(_require_square(as_matrix(q), "Q"), "Q")
    if A.shape != Q.shape:
        raise DimensionError("A_cl and Q must have the same shape")
    if np.any(np.linalg.eigvalsh(Q) <= 0):
        raise ValidationError("Q must be positive definite")
    eigs = np.linalg.eigvals(A)
    if np.any(eigs.real >= 0):
        raise InfeasibilityError(
            f"A_cl is not Hurwitz (max Re(eig) = {eigs.real.max():.6g})"
        )
    n = A.shape[0]
    eye = np.eye(n)
    # vec(A' P + P A) = (I (x) A' + A' (x) I) vec(P), column-stacked vec
    kron = np.kron(eye, A.T) + np.kron(A.T, eye)
    p_vec = np.linalg.solve(kron, -Q.reshape(-1, order="F"))
    P = p_vec.reshape(n, n, order="F")
    P = 0.5 * (P + P.T)
    residual = np.linalg.norm(A.T @ P + P @ A + Q)
    if residual > 1e-9 * np.linalg.norm(Q):
        raise AccuracyError(
            f"Lyapunov residual {residual:.3e} above tolerance", best_estimate=P
        )
    return P


def eig_sym(m) -> np.ndarray:
    """Ascending eigenvalues of a symmetric matrix."""
    sym = _require_symmetric(_require_square(as_matrix(m)), "input")
    return np.linalg.eigvalsh(sym)


@dataclass(frozen=True)
class Bracket:
    """Root bracket [lo, hi] with target width tol."""

    lo: float
    hi: float
    tol: float = 1e-12

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValidationError(f"bracket needs lo < hi, got [{self.lo}, {self.hi}]")
        if not self.tol > 0:
            raise ValidationError("bracket tol must be positive")


def bisect_root(f: Callable[[float], float], br: Bracket) -> float:
    """Bisection on a bracketed sign change; returns the midpoint once the
    bracket width is below br.tol."""
    lo, hi = br.lo, br.hi
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        raise BracketError(
            f"no sign change on [{lo}, {hi}]: f(lo)={f_lo:.6g}, f(hi)={f_hi:.6g}"
        )
    while hi - lo > br.tol:
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:  # float resolution floor
            break
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if f_lo * f_mid < 0:
            hi = mid
        else:
            lo, f_lo = mid, f_mid
    return 0.5 * (lo + hi)


def first_sign_change(
    f: Callable[[float], float], lo: float, hi: float, n_grid: int = 2000
) -> Bracket | None:
    """Scan a grid for the first subinterval where f changes sign (or hits
    zero) and return it as a Bracket; None when the scan finds no change.

    The grid-then-bisect split matters because the MIET definitions ask for
    the *minimum* positive root.
    """
    taus = np.linspace(lo, hi, n_grid + 1)
    prev_t, prev_v = taus[0], f(taus[0])
    if not np.isfinite(prev_v):
        raise ValidationError(f"f({prev_t}) is not finite")
    for t in taus[1:]:
        v = f(t)
        if not np.isfinite(v):
            break
        if prev_v == 0.0:
            return Bracket(max(prev_t - (t - prev_t), lo), t, tol=1e-14)
        if prev_v * v <= 0.0:
            return Bracket(prev_t, t, tol=1e-14)
        prev_t, prev_v = t, v
    return None


def quad(f: Callable[[float], float], a: float, b: float, tol: float = 1e-10) -> float:
    """Adaptive Simpson integral of f over [a, b] with absolute error <= tol.

    Exact for polynomials up to degree 3. Raises AccuracyError (carrying the
    best estimate) if the refinement depth limit is hit.
    """
    if not b >= a:
        raise ValidationError("quad requires a <= b")
    if tol <= 0:
        raise ValidationError("quad tol must be positive")
    if a == b:
        return 0.0

    failures: list[float] = []

    def simpson(x0, x2, fx0, fx1, fx2):
        return (x2 - x0) / 6.0 * (fx0 + 4.0 * fx1 + fx2)

    def recurse(x0, x2, fx0, fx1, fx2, whole, eps, depth):
        x1 = 0.5 * (x0 + x2)
        xl, xr = 0.5 * (x0 + x1), 0.5 * (x1 + x2)
        fl, fr = f(xl), f(xr)
        left = simpson(x0, x1, fx0, fl, fx1)
        right = simpson(x1, x2, fx1, fr, fx2)
        err = left + right - whole
        if abs(err) <= 15.0 * eps:
            return left + right + err / 15.0
        if depth <= 0:
            failures.append(abs(err) / 15.0)
            return left + right + err / 15.0
        half = 0.5 * eps
        return recurse(x0, x1, fx0, fl, fx1, left, half, depth - 1) + recurse(
            x1, x2, fx1, fr, fx2, right, half, depth - 1
        )

    mid = 0.5 * (a + b)
    fa, fm, fb = f(a), f(mid), f(b)
    whole = simpson(a, b, fa, fm, fb)
    result = recurse(a, b, fa, fm, fb, whole, tol, 48)
    if failures:
        raise AccuracyError(
            f"quad did not converge to tol={tol:g} on [{a}, {b}] "
            f"(residual ~{max(failures):.3e})",
            best_estimate=result,
        )
    return result


def spectral_norm(m) -> float:
    """Euclidean operator norm (largest singular value)."""
    return float(np.linalg.norm(as_matrix(m), 2))
