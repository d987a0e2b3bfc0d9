"""Blocked confluent hypergeometric systems and their formal solutions.

A BlockedSystem is the data of dF/dz = (u + A/z) F with
u = diag(u_1 I_{n_1}, ..., u_nu I_{n_nu}) and the residue A viewed in
(n_1, ..., n_nu) blocks.  The quantum case plugs in A = -hbar E^V for a
gl_nu module V.

This module generates all formal-solution coefficient sequences:

* at infinity, columnwise through ordered products of the recursive
  matrices L_k evaluated under the right shift action of A_kk;
* the same coefficients for quantum systems through the T_k(p) recursion
  (an independent derivation, kept as a built-in cross-check);
* at zero / at a tagged point k, through the inverse ordered products,
  with each inverse factor realized as a block of the full resolvent
  (zI + A)^{-1} so that only shifted Sylvester solves are needed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateU, Resonant, SingularProduct, SingularShift, ValidationError
from .glrep import Rep
from .numkit import check_finite, norm2, two_sided_shift_solve

__all__ = [
    "BlockedSystem",
    "SeriesCoeffs",
    "NonresonanceReport",
    "from_quantum",
    "make_system",
    "recursive_matrix",
    "formal_inf_coeffs",
    "quantum_H_coeffs",
    "formal_zero_coeffs",
    "ode_residual",
    "nonresonance_check",
    "anti_stokes",
    "wrap_angle",
]

P_CAP = 10_000


@dataclass(frozen=True)
class BlockedSystem:
    """Diagonal u with multiplicities and the blocked residue matrix A."""

    u: np.ndarray
    mult: tuple[int, ...]
    A: np.ndarray
    rep: Rep | None = None
    hbar: complex | None = None
    offsets: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=complex)
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "A", check_finite(self.A, "residue matrix"))
        offs = np.concatenate([[0], np.cumsum(self.mult)])
        object.__setattr__(self, "offsets", tuple(int(o) for o in offs))
        if self.A.shape != (self.n, self.n):
            raise ValidationError(
                f"A has shape {self.A.shape}, expected ({self.n}, {self.n})"
            )
        du = np.abs(u[:, None] - u[None, :]) + np.eye(self.nu)
        if float(du.min()) <= 1e-9:
            raise DegenerateU("u values must be pairwise distinct (min gap 1e-9)")

    @property
    def nu(self) -> int:
        return len(self.mult)

    @property
    def n(self) -> int:
        return self.offsets[-1]

    @property
    def is_quantum(self) -> bool:
        return self.rep is not None

    def sl(self, k: int) -> slice:
        """Row/column slice of block k (0-based)."""
        return slice(self.offsets[k], self.offsets[k + 1])

    def block(self, i: int, j: int) -> np.ndarray:
        return self.A[self.sl(i), self.sl(j)]

    def u_expanded(self) -> np.ndarray:
        """u as a length-n vector (one entry per row)."""
        return np.repeat(self.u, self.mult)

    def delta_uA(self) -> np.ndarray:
        """Block-diagonal part of A (the formal monodromy exponent)."""
        out = np.zeros_like(self.A)
        for k in range(self.nu):
            out[self.sl(k), self.sl(k)] = self.block(k, k)
        return out

    def hat_rows(self, k: int) -> np.ndarray:
        """Row indices of all blocks except k."""
        return np.array(
            [r for j in range(self.nu) if j != k for r in range(self.offsets[j], self.offsets[j + 1])],
            dtype=np.intp,
        )


@dataclass(frozen=True)
class SeriesCoeffs:
    """Ordered coefficients H_0 = I, H_1, ... of a formal fundamental solution.

    base is 'infinity', 'zero', or an integer block index k (for the
    e^{-u_k z}-twisted series at the origin).
    """

    base: object
    coeffs: list
    order: int

    def __post_init__(self):
        if not np.allclose(self.coeffs[0], np.eye(self.coeffs[0].shape[0])):
            raise ValidationError("H_0 must be the identity")


def from_quantum(rep: Rep, u, hbar: complex) -> BlockedSystem:
    """System with residue A = -hbar E^V, blocked by (dimV, ..., dimV)."""
    u = np.asarray(u, dtype=complex)
    if len(u) != rep.nu:
        raise ValidationError(f"need {rep.nu} u-values, got {len(u)}")
    m = rep.dimV
    n = rep.nu * m
    a = np.zeros((n, n), dtype=complex)
    for i in range(rep.nu):
        for j in range(rep.nu):
            a[i * m : (i + 1) * m, j * m : (j + 1) * m] = -hbar * rep.gen[i, j]
    return BlockedSystem(u=u, mult=(m,) * rep.nu, A=a, rep=rep, hbar=complex(hbar))


def make_system(u, mult, A) -> BlockedSystem:
    """Classical system from raw data."""
    return BlockedSystem(u=np.asarray(u, dtype=complex), mult=tuple(int(m) for m in mult), A=A)


def recursive_matrix(sys: BlockedSystem, k: int, z: complex) -> np.ndarray:
    """The k-th recursive matrix L_k(z); for k = 0 the full -u^{-1}(zI + A).

    L_k(z) is the (nu-1) x (nu-1)-block matrix
    (u_k I - u_hat)^{-1} [ (zI + A_hat,hat) - A_hat,k (zI + A_kk)^{-1} A_k,hat ].
    """
    z = complex(z)
    if k == 0:
        uex = sys.u_expanded()
        if np.min(np.abs(uex)) < 1e-14:
            raise SingularShift("L_0 requires invertible u")
        return (-(z * np.eye(sys.n) + sys.A)) / uex[:, None]
    if not 1 <= k <= sys.nu:
        raise ValidationError(f"k must be in 0..{sys.nu}")
    kk = k - 1
    hr = sys.hat_rows(kk)
    akk = sys.block(kk, kk)
    nt = sys.mult[kk]
    shifted = z * np.eye(nt) + akk
    if nt and np.linalg.cond(shifted) > 1e14:
        raise SingularShift(f"zI + A_kk singular at z = {z}")
    ahh = sys.A[np.ix_(hr, hr)]
    ahk = sys.A[hr][:, sys.sl(kk)]
    akh = sys.A[sys.sl(kk), :][:, hr]
    core = z * np.eye(len(hr)) + ahh - ahk @ np.linalg.solve(shifted, akh)
    uhat = np.repeat(np.delete(sys.u, kk), np.delete(sys.mult, kk))
    return core / (sys.u[kk] - uhat)[:, None]


def _eig_cached(a: np.ndarray):
    vals, vecs = np.linalg.eig(a)
    return vals, vecs, np.linalg.inv(vecs)


def _solve_shift(p: complex, vals, vecs, vecs_inv, y: np.ndarray, what: str) -> np.ndarray:
    """Solve p X - X D + D X = Y in a precomputed eigenbasis (same both sides)."""
    den = p + vals[:, None] - vals[None, :]
    if np.min(np.abs(den)) < 1e-12 * (abs(p) + 1):
        raise Resonant(f"resonant shifted solve in {what} at level {p}")
    return vecs @ ((vecs_inv @ y @ vecs) / den) @ vecs_inv


def formal_inf_coeffs(sys: BlockedSystem, P: int) -> SeriesCoeffs:
    """Coefficients H_p of the canonical formal solution at infinity, p <= P.

    Column k is built by the ordered product of L_k(m - A_kk^r); the (k,k)
    block comes from the shifted Sylvester solve.  Requires every diagonal
    block A_kk non-resonant.
    """
    _require_block_nonresonance(sys, P)
    if not 0 <= P <= P_CAP:
        raise ValidationError(f"order must be in 0..{P_CAP}")
    n = sys.n
    coeffs = [np.eye(n, dtype=complex)] + [np.zeros((n, n), dtype=complex) for _ in range(P)]
    for k in range(sys.nu):
        akk = sys.block(k, k)
        vals, vecs, vecs_inv = _eig_cached(akk)
        hr = sys.hat_rows(k)
        cols = np.arange(sys.offsets[k], sys.offsets[k + 1])
        uhat = np.repeat(np.delete(sys.u, k), np.delete(sys.mult, k))
        dv = 1.0 / (sys.u[k] - uhat)
        ahh = sys.A[np.ix_(hr, hr)]
        ahk = sys.A[hr][:, sys.sl(k)]
        akh = sys.A[sys.sl(k), :][:, hr]
        x = dv[:, None] * ahk
        for p in range(1, P + 1):
            coeffs[p][np.ix_(hr, cols)] = x
            # the resolvent solve at level p serves both the (k,k) block of
            # H_p and the column update to H_{p+1}
            s = _solve_shift(p, vals, vecs, vecs_inv, akh @ x, "formal_inf_coeffs")
            coeffs[p][sys.sl(k), sys.sl(k)] = -s
            if p < P:
                x = dv[:, None] * (p * x - x @ akk + ahh @ x - ahk @ s)
    return SeriesCoeffs(base="infinity", coeffs=coeffs, order=P)


def quantum_H_coeffs(sys: BlockedSystem, P: int) -> SeriesCoeffs:
    """The same coefficients through the T_k(p) recursion of quantum systems.

    (H_{p+1})_{.k} = T_k(p) (H_p)_{.k} off the diagonal and
    (H_p)_{kk} = (hbar/p) sum_j e_kj (H_p)_{jk}; requires a quantum system
    with effectively non-rational hbar.
    """
    if not sys.is_quantum:
        raise ValidationError("quantum_H_coeffs needs a quantum system")
    _require_block_nonresonance(sys, P)
    from .yangian import build_Tk  # shared factor construction, lazy to avoid a cycle

    rep, hbar = sys.rep, sys.hbar
    m = rep.dimV
    n = sys.n
    coeffs = [np.eye(n, dtype=complex)] + [np.zeros((n, n), dtype=complex) for _ in range(P)]
    for k in range(sys.nu):
        others = [j for j in range(sys.nu) if j != k]
        x = np.vstack([-hbar * rep.gen[j, k] / (sys.u[k] - sys.u[j]) for j in others])
        for p in range(1, P + 1):
            for a, j in enumerate(others):
                coeffs[p][sys.sl(j), sys.sl(k)] = x[a * m : (a + 1) * m]
            diag = np.zeros((m, m), dtype=complex)
            for a, j in enumerate(others):
                diag += rep.gen[k, j] @ x[a * m : (a + 1) * m]
            coeffs[p][sys.sl(k), sys.sl(k)] = (hbar / p) * diag
            if p < P:
                x = build_Tk(sys, k + 1, p).mat @ x
    return SeriesCoeffs(base="infinity", coeffs=coeffs, order=P)


def formal_zero_coeffs(sys: BlockedSystem, k: int, P: int) -> SeriesCoeffs:
    """Coefficients H_p^[k] (k = 0 for the plain series at the origin).

    Built through the inverse ordered products; each inverse factor
    [L_k^{-1}](-m - A^r) is the k-hat block of the full resolvent
    (zI + A)^{-1}, realized as one shifted solve with the full matrix.
    Requires A non-resonant.
    """
    _require_full_nonresonance(sys)
    n = sys.n
    vals, vecs, vecs_inv = _eig_cached(sys.A)
    coeffs = [np.eye(n, dtype=complex)]
    if k == 0:
        uex = sys.u_expanded()
        if np.min(np.abs(uex)) < 1e-14:
            raise SingularProduct("H^[0] products need invertible u")
        x = np.eye(n, dtype=complex)
        for p in range(1, P + 1):
            y = -uex[:, None] * x
            x = _solve_shift(-p, vals, vecs, vecs_inv, y, "formal_zero_coeffs")
            coeffs.append(x.copy())
        return SeriesCoeffs(base="zero", coeffs=coeffs, order=P)
    kk = k - 1
    hr = sys.hat_rows(kk)
    uhat = np.repeat(np.delete(sys.u, kk), np.delete(sys.mult, kk))
    dvinv = sys.u[kk] - uhat
    akk = sys.block(kk, kk)
    akh = sys.A[sys.sl(kk), :][:, hr]
    x = np.eye(n, dtype=complex)[hr]
    for p in range(1, P + 1):
        y = np.zeros((n, n), dtype=complex)
        y[hr] = dvinv[:, None] * x
        x = _solve_shift(-p, vals, vecs, vecs_inv, y, "formal_zero_coeffs")[hr]
        hp = np.zeros((n, n), dtype=complex)
        hp[hr] = x
        w = two_sided_shift_solve(-p, akk, sys.A, akh @ x)
        hp[sys.sl(kk)] = -w
        coeffs.append(hp)
    return SeriesCoeffs(base=k, coeffs=coeffs, order=P)


def ode_residual(sys: BlockedSystem, series: SeriesCoeffs, P: int) -> np.ndarray:
    """Per-order relative residual of dF/dz - (u + A/z) F on the coefficients."""
    if series.order < P:
        raise ValidationError("series order too small for the requested check")
    uex = sys.u_expanded()
    udiag = np.diag(uex)
    scale0 = norm2(sys.A) + float(np.max(np.abs(uex))) + 1.0
    out = []
    if series.base == "infinity":
        da = sys.delta_uA()
        for p in range(P):
            h, hn = series.coeffs[p], series.coeffs[p + 1]
            res = udiag @ hn - hn @ udiag + p * h - h @ da + sys.A @ h
            sc = (p + scale0) * max(norm2(h), norm2(hn), 1e-300)
            out.append(norm2(res) / sc)
        return np.array(out)
    shift = 0.0 if series.base == "zero" else sys.u[series.base - 1]
    for p in range(1, P + 1):
        h, hm = series.coeffs[p], series.coeffs[p - 1]
        res = p * h - sys.A @ h + h @ sys.A - (udiag - shift * np.eye(sys.n)) @ hm
        sc = (p + scale0) * max(norm2(h), norm2(hm), 1e-300)
        out.append(norm2(res) / sc)
    return np.array(out)


@dataclass(frozen=True)
class NonresonanceReport:
    block_margins: tuple[float, ...]
    full_margin: float
    tol: float

    @property
    def blocks_pass(self) -> bool:
        return all(m > self.tol for m in self.block_margins)

    @property
    def full_pass(self) -> bool:
        return self.full_margin > self.tol


def _nonres_margin(a: np.ndarray) -> float:
    """Min over eigenvalue pairs of the distance from l_i - l_j to Z \\ {0}."""
    vals = np.linalg.eigvals(a)
    diffs = (vals[:, None] - vals[None, :]).ravel()
    margin = np.inf
    for d in diffs:
        near = round(d.real)
        candidates = {near, near + 1, near - 1} - {0}
        for nz in candidates:
            margin = min(margin, abs(d - nz))
    return float(margin)


def nonresonance_check(sys: BlockedSystem, tol: float = 1e-8) -> NonresonanceReport:
    """Distance of eigenvalue differences from nonzero integers, per block and for A."""
    return NonresonanceReport(
        block_margins=tuple(_nonres_margin(sys.block(k, k)) for k in range(sys.nu)),
        full_margin=_nonres_margin(sys.A),
        tol=tol,
    )


def _require_block_nonresonance(sys: BlockedSystem, P: int) -> None:
    rep = nonresonance_check(sys)
    if not rep.blocks_pass:
        raise Resonant(
            f"diagonal blocks resonant (margins {rep.block_margins}, tol {rep.tol})"
        )


def _require_full_nonresonance(sys: BlockedSystem) -> None:
    rep = nonresonance_check(sys)
    if not rep.full_pass:
        raise Resonant(f"A resonant (margin {rep.full_margin:.3e}, tol {rep.tol})")


def wrap_angle(theta: float) -> float:
    """Wrap into (-pi, pi]."""
    out = float(np.mod(theta + np.pi, 2 * np.pi) - np.pi)
    return np.pi if out == -np.pi else out


def anti_stokes(sys: BlockedSystem, tol: float = 1e-10):
    """Anti-Stokes arguments in (-pi, pi] with their supporting ordered pairs.

    tau supports (s, t) iff -arg(u_t - u_s) = tau (mod 2pi); the period-pi
    pairing partner of each direction is reported alongside.
    """
    raw = []
    for s in range(sys.nu):
        for t in range(sys.nu):
            if s != t:
                raw.append((wrap_angle(-np.angle(sys.u[t] - sys.u[s])), (s + 1, t + 1)))
    raw.sort(key=lambda e: e[0])
    grouped: list[tuple[float, list]] = []
    for tau, pair in raw:
        if grouped and min(
            abs(tau - grouped[-1][0]), abs(tau - grouped[-1][0] - 2 * np.pi)
        ) <= tol:
            grouped[-1][1].append(pair)
        else:
            grouped.append((tau, [pair]))
    # wrap-around merge at the -pi/pi seam
    if len(grouped) > 1 and abs((grouped[0][0] + 2 * np.pi) - grouped[-1][0]) <= tol:
        grouped[-1][1].extend(grouped[0][1])
        grouped = grouped[1:]
    result = []
    taus = [g[0] for g in grouped]
    for tau, pairs in grouped:
        partner = wrap_angle(tau + np.pi)
        has_partner = any(abs(wrap_angle(t2 - partner)) <= tol for t2 in taus)
        result.append({"tau": tau, "pairs": sorted(pairs), "partner": partner, "partner_present": has_partner})
    return result
