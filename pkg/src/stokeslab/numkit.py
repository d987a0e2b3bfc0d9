"""Complex dense linear algebra and matrix functions.

Everything downstream (formal solutions, Stokes products, quantum-group
checks) is built on the handful of primitives here: eigendecomposition
with a conditioning guard, matrix functions of diagonalizable matrices,
complex powers with an *explicit* argument (no implicit principal branch
anywhere in the public API), and the shifted two-sided Sylvester solve
p X - X A + A X = Y that drives the coefficient recursions.

Matrices are plain numpy complex128 arrays in row-major order.  Matrix
functions go through eigendecomposition only; non-diagonalizable inputs
are rejected rather than routed through Jordan or Schur-Parlett forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.special

from .errors import (
    ArgumentMismatch,
    DomainError,
    IllConditioned,
    NonConvergence,
    Resonant,
    ValidationError,
)

__all__ = [
    "Spectral",
    "eig",
    "mat_fun",
    "mat_pow",
    "cpow",
    "gammafn",
    "sylvester_shift_solve",
    "two_sided_shift_solve",
    "check_finite",
    "norm2",
]

DEFAULT_COND_BOUND = 1e8


def check_finite(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Return ``m`` as a complex array, raising if any entry is NaN/Inf."""
    a = np.ascontiguousarray(m, dtype=complex)
    if not np.all(np.isfinite(a.view(float))):
        raise NonConvergence(f"non-finite entries in {what}")
    return a


def norm2(m: np.ndarray) -> float:
    """Spectral norm, with the scalar/vector cases flattened out."""
    a = np.atleast_2d(np.asarray(m, dtype=complex))
    return float(np.linalg.norm(a, 2))


@dataclass(frozen=True)
class Spectral:
    """Eigendecomposition M = V diag(values) V^-1 with a conditioning estimate."""

    values: np.ndarray
    vectors: np.ndarray
    vectors_inv: np.ndarray
    cond: float

    def reconstruct(self) -> np.ndarray:
        return self.vectors @ np.diag(self.values) @ self.vectors_inv


def eig(m: np.ndarray, cond_bound: float = DEFAULT_COND_BOUND) -> Spectral:
    """Eigendecompose a square matrix, rejecting ill-conditioned eigenbases.

    Raises IllConditioned when cond(V) exceeds ``cond_bound`` (the practical
    signature of a non-diagonalizable input) and NonConvergence if the
    underlying QR iteration fails.  The reconstruction residual is checked
    against 1e-10 * ||M||.
    """
    a = check_finite(m, "eig input")
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"eig expects a square matrix, got shape {a.shape}")
    try:
        values, vectors = np.linalg.eig(a)
    except np.linalg.LinAlgError as exc:
        raise NonConvergence(f"eigensolver failed: {exc}") from None
    cond = float(np.linalg.cond(vectors, 2))
    if not np.isfinite(cond) or cond > cond_bound:
        raise IllConditioned(
            f"eigenvector matrix condition {cond:.3e} exceeds bound {cond_bound:.3e}"
        )
    vectors_inv = np.linalg.inv(vectors)
    spec = Spectral(values=values, vectors=vectors, vectors_inv=vectors_inv, cond=cond)
    scale = max(norm2(a), 1.0)
    if norm2(spec.reconstruct() - a) > 1e-10 * scale:
        raise IllConditioned("eigendecomposition reconstruction residual too large")
    return spec


def mat_fun(m: np.ndarray, f, cond_bound: float = DEFAULT_COND_BOUND) -> np.ndarray:
    """Evaluate a scalar function on a diagonalizable matrix, V f(D) V^-1.

    ``f`` is applied to each eigenvalue; a non-finite result raises
    DomainError (e.g. Gamma at a non-positive integer).
    """
    a = np.asarray(m, dtype=complex)
    if a.ndim == 0 or a.shape == (1, 1):
        w = complex(f(complex(a.reshape(()) if a.ndim == 0 else a[0, 0])))
        if not (np.isfinite(w.real) and np.isfinite(w.imag)):
            raise DomainError("function undefined at the (scalar) eigenvalue")
        return np.array([[w]], dtype=complex) if a.ndim == 2 else np.array(w)
    spec = eig(a, cond_bound=cond_bound)
    fvals = np.array([complex(f(complex(lam))) for lam in spec.values])
    if not np.all(np.isfinite(fvals.view(float))):
        bad = spec.values[~np.isfinite(fvals.view(float)).reshape(-1, 2).all(axis=1)]
        raise DomainError(f"function undefined at eigenvalue(s) {bad}")
    return check_finite(
        (spec.vectors * fvals) @ spec.vectors_inv, "mat_fun result"
    )


def mat_pow(base: float, e: np.ndarray) -> np.ndarray:
    """base**E for real base > 0 (real logarithm), E diagonalizable."""
    if base <= 0:
        raise ValidationError("mat_pow expects a positive real base")
    logb = np.log(base)
    return mat_fun(e, lambda lam: np.exp(lam * logb))


def cpow(w: complex, theta: float, e: np.ndarray) -> np.ndarray:
    """w**E with the branch fixed by the explicit argument theta of w.

    Computes exp(E (ln|w| + i theta)).  theta must satisfy
    theta = arg(w) mod 2pi within 1e-9; there is deliberately no default.
    """
    w = complex(w)
    if w == 0:
        raise ValidationError("cpow requires |w| > 0")
    delta = (theta - np.angle(w)) / (2 * np.pi)
    if abs(delta - round(delta)) > 1e-9 / (2 * np.pi):
        raise ArgumentMismatch(
            f"theta={theta!r} is not an argument of w={w!r} (off by {delta - round(delta):.3e} turns)"
        )
    logw = np.log(abs(w)) + 1j * theta
    a = np.asarray(e, dtype=complex)
    if a.ndim == 0:
        return np.exp(complex(a) * logw)
    return mat_fun(a, lambda lam: np.exp(lam * logw))


def gammafn(z: complex) -> complex:
    """Scalar complex Gamma.  Raises DomainError at non-positive integers."""
    z = complex(z)
    if z.imag == 0.0 and z.real <= 0.0 and z.real == round(z.real):
        raise DomainError(f"Gamma undefined at non-positive integer {z.real:.0f}")
    val = complex(scipy.special.gamma(z))
    if not (np.isfinite(val.real) and np.isfinite(val.imag)):
        raise DomainError(f"Gamma overflow/undefined at {z}")
    return val


def _shift_denominators(p: complex, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """Denominator table p + lambda_i(left) - lambda_j(right)."""
    return p + left[:, None] - right[None, :]


def two_sided_shift_solve(
    p: complex,
    a_left: np.ndarray,
    a_right: np.ndarray,
    y: np.ndarray,
    tol: float = 1e-12,
) -> np.ndarray:
    """Solve p X + A_left X - X A_right = Y for diagonalizable A_left/A_right.

    Raises Resonant when some p + lambda_i(A_left) - lambda_j(A_right)
    vanishes within tolerance (relative to the problem scale).
    """
    y = np.asarray(y, dtype=complex)
    sl = eig(np.asarray(a_left, dtype=complex))
    sr = eig(np.asarray(a_right, dtype=complex))
    den = _shift_denominators(p, sl.values, sr.values)
    scale = abs(p) + norm2(a_left) + norm2(a_right) + 1.0
    if np.min(np.abs(den)) < tol * scale:
        raise Resonant(
            f"shifted solve singular: min |p + li - lj| = {np.min(np.abs(den)):.3e}"
        )
    xt = (sl.vectors_inv @ y @ sr.vectors) / den
    return sl.vectors @ xt @ sr.vectors_inv


def sylvester_shift_solve(
    p: complex, a: np.ndarray, y: np.ndarray, tol: float = 1e-12
) -> np.ndarray:
    """Solve p X - X A + A X = Y, the shifted operator of the formal recursion.

    Precondition: p - lambda_i + lambda_j != 0 for all eigenvalue pairs of A
    (non-resonance at level p).  The residual is verified to 1e-10 ||Y||.
    """
    a = np.asarray(a, dtype=complex)
    y = np.asarray(y, dtype=complex)
    x = two_sided_shift_solve(p, a, a, y, tol=tol)
    resid = norm2(p * x - x @ a + a @ x - y)
    if resid > 1e-10 * max(norm2(y), 1e-300):
        raise IllConditioned(f"shifted Sylvester residual {resid:.3e} too large")
    return check_finite(x, "sylvester solution")
