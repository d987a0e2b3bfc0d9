"""Independent validation path: Stokes/connection data by ODE integration.

Everything here is built only on numkit/hypersys/glrep; none of the
product-formula code of the stokes module is imported.

Canonical sectorial solutions are assembled *block-column by
block-column*: the e^{u_k z}-column of a sector solution is the unique
solution recessive on any ray of the sector where every other mode
dominates it, so it is initialized from the asymptotic series at optimal
truncation on such a ray (where the init carries no invisible-mode
ambiguity), integrated inward at shrinking exponential contrast, and
finally rotated at small radius to the matching ray.  Stokes matrices
come from expressing one sector's columns in the other sector's basis at
the matching point; the central connection matrix from matching against
the convergent series at the origin.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .errors import NotAccurate, Resonant, TailTooLarge, ValidationError
from .hypersys import (
    BlockedSystem,
    anti_stokes,
    formal_inf_coeffs,
    nonresonance_check,
    wrap_angle,
)
from .numkit import cpow, norm2, two_sided_shift_solve

__all__ = [
    "series_F0",
    "integrate_fundamental",
    "stokes_via_ode",
    "stokes_entry_via_ode",
    "connection_via_ode",
    "pinnable_margin",
]

_MATCH_RHO = 2.0


def _minterm_target(rtol: float) -> float:
    """Init-series accuracy target; rtol e^{rho R} noise makes ~sqrt(rtol) the floor."""
    return max(np.sqrt(rtol) * 0.1, 1e-10)


def series_F0(sys: BlockedSystem, z: complex, arg_z: float, tol: float = 1e-12, pmax: int = 600):
    """F^[0](z) = (I + sum H_p z^p) z^A by the convergent series at the origin.

    The coefficients satisfy p H_p + H_p A - A H_p = u H_{p-1} (an
    independent recursion, not the inverse products).  The branch of z^A
    is fixed by arg_z.
    """
    rep = nonresonance_check(sys)
    if not rep.full_pass:
        raise Resonant(f"A resonant: margin {rep.full_margin:.3e}")
    uex = np.diag(sys.u_expanded())
    acc = np.eye(sys.n, dtype=complex)
    h = np.eye(sys.n, dtype=complex)
    quiet = 0
    zp = 1.0 + 0j
    for p in range(1, pmax + 1):
        h = two_sided_shift_solve(p, -sys.A, -sys.A, uex @ h)
        zp *= z
        term = h * zp
        acc = acc + term
        if norm2(term) <= tol * max(norm2(acc), 1.0):
            quiet += 1
            if quiet >= 3:
                break
        else:
            quiet = 0
    else:
        raise TailTooLarge(f"series tail above {tol} after {pmax} terms at |z|={abs(z):.3g}")
    return acc @ cpow(z, arg_z, sys.A)


# ---------------------------------------------------------------------------
# column-wise canonical solutions


def _coeff_table(sys: BlockedSystem, P: int = 60):
    return formal_inf_coeffs(sys, P).coeffs


def _column_radius(sys: BlockedSystem, coeffs, k0: int, target: float):
    """Radius and truncation order with the block-column min term below target."""
    cols = np.arange(sys.offsets[k0], sys.offsets[k0 + 1])
    norms = np.array([max(norm2(c[:, cols]), 1e-300) for c in coeffs])
    gaps = [abs(sys.u[k0] - uu) for j, uu in enumerate(sys.u) if j != k0]
    r = 8.0 / min(gaps) if gaps else 8.0
    for _ in range(200):
        terms = norms / r ** np.arange(len(norms))
        pstar = int(np.argmin(terms))
        if terms[pstar] <= target and pstar < len(norms) - 3:
            return r, pstar
        r *= 1.25
    raise NotAccurate("optimal truncation cannot reach the requested accuracy")


def _recessive_angle(sys: BlockedSystem, k0: int, lo: float, hi: float):
    """Angle in (lo, hi) maximizing the dominance of every other mode over k.

    Maximizes min_j Re((u_j - u_k) e^{i theta}); a positive value means the
    k-column is recessive there and its init is ambiguity-free.
    """
    margins = []
    grid = np.linspace(lo + 1e-3, hi - 1e-3, 721)
    diffs = np.array([sys.u[j] - sys.u[k0] for j in range(sys.nu) if j != k0])
    if len(diffs) == 0:
        return 0.5 * (lo + hi), np.inf
    vals = np.min(np.real(diffs[None, :] * np.exp(1j * grid[:, None])), axis=1)
    best = int(np.argmax(vals))
    return float(grid[best]), float(vals[best])


def _column_init(sys: BlockedSystem, coeffs, pstar: int, radius: float, theta: float, k0: int):
    """gamma_k(z) = (series block-column) z^{A_kk} at z = radius e^{i theta}."""
    z = radius * np.exp(1j * theta)
    cols = np.arange(sys.offsets[k0], sys.offsets[k0 + 1])
    acc = np.eye(sys.n, dtype=complex)[:, cols]
    zp = 1.0 + 0j
    for p in range(1, pstar + 1):
        zp /= z
        acc = acc + coeffs[p][:, cols] * zp
    return acc @ cpow(z, theta, sys.block(k0, k0)), z


def _column_rhs(sys: BlockedSystem, k0: int):
    uex = sys.u_expanded()
    shift = uex - sys.u[k0]
    a = sys.A
    n, nk = sys.n, sys.mult[k0]

    def rhs_segment(za, dz):
        def f(s, y):
            g = y.reshape(n, nk)
            z = za + s * dz
            return (dz * (shift[:, None] * g + (a @ g) / z)).ravel()

        return f

    def rhs_arc(radius, th0, dth):
        def f(s, y):
            g = y.reshape(n, nk)
            z = radius * np.exp(1j * (th0 + s * dth))
            dz = 1j * dth * z
            return (dz * (shift[:, None] * g + (a @ g) / z)).ravel()

        return f

    return rhs_segment, rhs_arc


def _integrate(f, y0, tol: float):
    sol = solve_ivp(
        f, (0.0, 1.0), y0, method="DOP853", rtol=tol, atol=tol * max(np.max(np.abs(y0)), 1.0)
    )
    if not sol.success:
        raise NotAccurate(f"DOP853 failed: {sol.message}")
    return sol.y[:, -1]


def _sector_bounds(sys: BlockedSystem, d: float):
    """Anti-Stokes neighbours (tau_i, tau_i+1) around a direction d (real line)."""
    taus = sorted({rec["tau"] for rec in anti_stokes(sys)})
    if not taus:
        return d - np.pi, d + np.pi
    ring = []
    for t in taus:
        for k in (-2, -1, 0, 1, 2):
            ring.append(t + 2 * np.pi * k)
    ring = sorted(ring)
    lo = max(t for t in ring if t < d - 1e-12)
    hi = min(t for t in ring if t > d + 1e-12)
    return lo, hi


def pinnable_margin(sys: BlockedSystem, k0: int, sector) -> float:
    """Dominance margin of the best init ray for column k of a sector solution.

    Positive: some ray of the sector's validity arc has every other mode
    dominating mode k, so the column is pinned by one-point series data.
    Negative: the column's defining data sits outside the arc and a direct
    oracle measurement through this sector is unreliable.
    """
    lo, hi = sector
    return _recessive_angle(sys, k0, lo - 0.45 * np.pi, hi + 0.45 * np.pi)[1]


def _canonical_column(sys: BlockedSystem, coeffs, k0: int, sector, target_theta: float,
                      r_final: float, rtol: float, target: float):
    """Block-column k of the sector solution, evaluated at r_final e^{i target_theta}.

    Init on the most recessive ray of the sector, inward to r_final, then
    the arc at small radius to the target ray.  Returns the normalized
    column gamma_k = column x e^{-u_k z}.
    """
    lo, hi = sector
    theta0, margin = _recessive_angle(sys, k0, lo - 0.45 * np.pi, hi + 0.45 * np.pi)
    r, pstar = _column_radius(sys, coeffs, k0, target)
    g0, _ = _column_init(sys, coeffs, pstar, r, theta0, k0)
    rhs_segment, rhs_arc = _column_rhs(sys, k0)
    za = r * np.exp(1j * theta0)
    zb = r_final * np.exp(1j * theta0)
    y = _integrate(rhs_segment(za, zb - za), g0.ravel(), rtol)
    if abs(target_theta - theta0) > 1e-14:
        y = _integrate(rhs_arc(r_final, theta0, target_theta - theta0), y, rtol)
    return y.reshape(sys.n, sys.mult[k0]), margin


def _basis_at(sys: BlockedSystem, coeffs, sector, theta: float, r_final: float,
              rtol: float, target: float, min_margin: float = 0.0):
    """All block-columns of one sector solution at z0 = r_final e^{i theta}.

    Returns the full G(z0) (normalized columns re-dressed with e^{u_k z0})
    as the matrix whose block-column k is gamma_k e^{u_k z0}... kept
    factored: G has columns gamma_k, and the exponential dressing is left
    to the caller via u_expanded().
    """
    blocks = []
    margins = []
    for k0 in range(sys.nu):
        col, margin = _canonical_column(sys, coeffs, k0, sector, theta, r_final, rtol, target)
        if margin < min_margin:
            raise NotAccurate(
                f"column {k0 + 1} of sector ({sector[0]:.3f},{sector[1]:.3f}) has "
                f"recessive margin {margin:.3f} below {min_margin:.3f}; "
                "its one-point initial data is ambiguous for this geometry"
            )
        blocks.append(col)
        margins.append(margin)
    return np.hstack(blocks), margins


def integrate_fundamental(sys: BlockedSystem, d: float, tol: float = 1e-10,
                          radius: float | None = None, match_radius: float | None = None):
    """Canonical solution F_d at a matching point z0 on the ray arg z = d.

    Assembled column-wise from recessive-ray initial data at optimal
    truncation; by default z0 = (R/4) e^{id} with R the largest init
    radius used.  Returns the value, its normalized form, z0 and R.
    """
    for rec in anti_stokes(sys):
        if abs(wrap_angle(d - rec["tau"])) < 1e-12:
            raise ValidationError("d must avoid the anti-Stokes directions")
    rtol = max(tol, 1e-13)
    target = _minterm_target(rtol)
    coeffs = _coeff_table(sys)
    radii = []
    for k0 in range(sys.nu):
        if radius is not None:
            radii.append(float(radius))
        else:
            radii.append(_column_radius(sys, coeffs, k0, target)[0])
    r = max(radii)
    r_final = match_radius if match_radius is not None else r / 4.0
    sector = _sector_bounds(sys, d)
    gamma, margins = _basis_at(sys, coeffs, sector, d, r_final, rtol, target)
    z0 = r_final * np.exp(1j * d)
    euz = np.exp(np.repeat(sys.u, sys.mult) * z0)
    return {
        "z0": z0,
        "G": gamma,
        "F": gamma * euz[None, :],
        "R": r,
        "recessive_margins": margins,
    }


def stokes_via_ode(sys: BlockedSystem, tau: float, tol: float = 1e-10):
    """S_[tau] = F_{tau+eps}^{-1} F_{tau-eps} via column-wise sector bases.

    Both sector solutions are evaluated at z0 = (rho / min-gap) e^{i tau};
    the result is the change of basis between them, so its unipotent
    structure (identity diagonal, support on the pairs of tau) emerges
    numerically rather than being imposed.
    """
    recs = anti_stokes(sys)
    if not any(
        abs(wrap_angle(tau - rec["tau"])) < 1e-9 for rec in recs
    ):
        raise ValidationError(f"tau={tau} is not an anti-Stokes direction")
    rtol = max(tol, 1e-13)
    target = _minterm_target(rtol)
    coeffs = _coeff_table(sys)
    lo_dn, _ = _sector_bounds(sys, tau - 1e-9)
    _, hi_up = _sector_bounds(sys, tau + 1e-9)
    gaps = [abs(a - b) for i, a in enumerate(sys.u) for b in sys.u[i + 1 :]]
    min_gap = min(gaps)
    r_match = _MATCH_RHO / min_gap
    g_up, _ = _basis_at(sys, coeffs, (tau, hi_up), tau, r_match, rtol, target,
                        min_margin=0.05 * min_gap)
    g_dn, _ = _basis_at(sys, coeffs, (lo_dn, tau), tau, r_match, rtol, target,
                        min_margin=0.05 * min_gap)
    z0 = r_match * np.exp(1j * tau)
    euz = np.exp(np.repeat(sys.u, sys.mult) * z0)
    core = np.linalg.solve(g_up, g_dn)
    return (core / euz[:, None]) * euz[None, :]


def connection_via_ode(sys: BlockedSystem, d: float, tol: float = 1e-10):
    """C_d = F_d(z)^{-1} F^[0](z), matched at |z0| = rho / min-gap on ray d."""
    rep = nonresonance_check(sys)
    if not rep.full_pass:
        raise Resonant(f"A resonant: margin {rep.full_margin:.3e}")
    gaps = [abs(a - b) for i, a in enumerate(sys.u) for b in sys.u[i + 1 :]]
    r_match = _MATCH_RHO / min(gaps)
    fd = integrate_fundamental(sys, d, tol=tol, match_radius=r_match)
    z0 = fd["z0"]
    f0 = series_F0(sys, z0, d, tol=min(tol, 1e-12))
    euz = np.exp(np.repeat(sys.u, sys.mult) * z0)
    return np.linalg.solve(fd["G"], f0) / euz[:, None]


# ---------------------------------------------------------------------------
# windowed single-entry measurement


def _interval_above(sys: BlockedSystem, x: float):
    lo, hi = _sector_bounds(sys, x)
    return lo, hi


def _pinned_F_column(sys, coeffs, k0, interval, z0, rtol, target, min_margin):
    """F-column k of the canonical solution of ``interval`` at z0, or None."""
    if pinnable_margin(sys, k0, interval) < min_margin:
        return None
    theta = float(np.angle(z0)) if abs(np.angle(z0) - 0.5 * (interval[0] + interval[1])) < 10 else None
    tgt_theta = float(np.angle(z0))
    # the target ray must be expressed on the real line consistently with
    # the interval; shift by 2 pi into the vicinity of the interval
    mid = 0.5 * (interval[0] + interval[1])
    while tgt_theta < mid - np.pi:
        tgt_theta += 2 * np.pi
    while tgt_theta > mid + np.pi:
        tgt_theta -= 2 * np.pi
    col, _ = _canonical_column(sys, coeffs, k0, interval, tgt_theta, abs(z0), rtol, target)
    return col * np.exp(sys.u[k0] * z0)


def stokes_entry_via_ode(sys: BlockedSystem, s: int, t: int, tol: float = 1e-11):
    """(S_[tau])_{st} for tau = -arg(u_t - u_s), by sector-column matching.

    The value-carrying column t is pinned in the interval below tau; the
    basis columns in the interval above.  A basis column whose recessive
    ray escapes that interval's validity arc is expanded through the next
    anti-Stokes crossing, whose own jump entry joins the linear system as
    an auxiliary unknown (the unipotent diagonal keeps everything linear).
    """
    s0, t0 = s - 1, t - 1
    tau = float(wrap_angle(-np.angle(sys.u[t0] - sys.u[s0])))
    rtol = max(tol, 1e-13)
    target = _minterm_target(rtol)
    coeffs = _coeff_table(sys)
    gaps = [abs(a - b) for i, a in enumerate(sys.u) for b in sys.u[i + 1 :]]
    min_gap = min(gaps)
    r_match = _MATCH_RHO / min_gap
    z0 = r_match * np.exp(1j * tau)
    min_margin = 0.05 * min_gap

    lo_dn, _hi_dn = _sector_bounds(sys, tau - 1e-9)
    lo_up, hi_up = _sector_bounds(sys, tau + 1e-9)
    i_dn = (lo_dn, tau)
    i_up = (tau, hi_up)
    _, hi_up2 = _sector_bounds(sys, hi_up + 1e-9)
    i_up2 = (hi_up, hi_up2)
    lo_dn2, _ = _sector_bounds(sys, lo_dn - 1e-9)
    i_dn2 = (lo_dn2, lo_dn)

    # supported pairs of the crossing tau' = hi_up (needed for substitutions)
    def supported(tau_val):
        out = []
        for a in range(sys.nu):
            for b in range(sys.nu):
                if a != b and abs(wrap_angle(-np.angle(sys.u[b] - sys.u[a]) - tau_val)) < 1e-9:
                    out.append((a, b))
        return out

    sup_up2 = supported(hi_up)

    # value-carrying column: pinned below tau, else one crossing further down
    # (F_dn = F_dn2 S_[lo_dn]^{-1}: subtracting the crossing jump keeps the
    # system linear since the value column's own coefficient is 1)
    dn_aux = []
    v = _pinned_F_column(sys, coeffs, t0, i_dn, z0, rtol, target, min_margin)
    if v is None:
        v = _pinned_F_column(sys, coeffs, t0, i_dn2, z0, rtol, target, min_margin)
        if v is None:
            raise NotAccurate(
                f"column {t} not pinnable below tau={tau:.4f} within one crossing"
            )
        for (a, b) in supported(lo_dn):
            if b == t0:
                extra = _pinned_F_column(sys, coeffs, a, i_dn2, z0, rtol, target, min_margin)
                if extra is None:
                    raise NotAccurate(
                        f"auxiliary column {a + 1} not pinnable below tau within one crossing"
                    )
                dn_aux.append((a, extra))

    cols_up = {}
    blocked = []
    for j0 in range(sys.nu):
        col = _pinned_F_column(sys, coeffs, j0, i_up, z0, rtol, target, min_margin)
        if col is None:
            blocked.append(j0)
        else:
            cols_up[j0] = col
    aux = []
    subs = {}
    for j0 in blocked:
        base = _pinned_F_column(sys, coeffs, j0, i_up2, z0, rtol, target, min_margin)
        if base is None:
            raise NotAccurate(
                f"column {j0 + 1} not pinnable above tau={tau:.4f} within one crossing"
            )
        terms = []
        for (a, b) in sup_up2:
            if b == j0:
                extra = _pinned_F_column(sys, coeffs, a, i_up2, z0, rtol, target, min_margin)
                if extra is None:
                    raise NotAccurate(
                        f"auxiliary column {a + 1} not pinnable in the second interval"
                    )
                terms.append((a, extra))
        subs[j0] = (base, terms)
        if j0 != t0 and not all(a == t0 for (a, _) in []):
            pass

    # unknowns: c_j for j != t (coefficients of S_[tau] column t), plus one
    # auxiliary x per substitution term of blocked columns; c_t = 1 exactly.
    unknown_cols = [j0 for j0 in range(sys.nu) if j0 != t0]
    aux_terms = []
    for j0 in blocked:
        if j0 != t0:
            # a blocked off-diagonal basis column must be structurally zero
            # in S_[tau]'s column t, else the system turns bilinear
            pair_needed = any(a == j0 for (a, b) in supported(tau) if b == t0)
            if pair_needed:
                raise NotAccurate(
                    f"basis column {j0 + 1} both blocked and value-carrying; "
                    "geometry too degenerate for the windowed oracle"
                )
        else:
            for (a, extra) in subs[j0][1]:
                aux_terms.append((a, extra))

    nblk = sum(sys.mult)
    # scalar-entry formulation only (desk scale uses mult=1 for nu>=3 windows)
    if any(m != 1 for m in sys.mult):
        # blocked substitution with matrix entries: only the direct path is used
        raise NotAccurate("windowed oracle implemented for multiplicity-1 systems")

    rhs = v.copy().astype(complex)
    for (a, extra) in dn_aux:
        # unknown jump of the lower crossing, entering with a minus sign
        aux_terms.append((a, -extra))
    if t0 in blocked:
        base, terms = subs[t0]
        rhs -= base
        cols_for_aux = terms
    else:
        rhs -= cols_up[t0]
        cols_for_aux = []

    design = []
    labels = []
    for j0 in unknown_cols:
        if j0 in blocked:
            design.append(subs[j0][0])
            labels.append(("c", j0))
        else:
            design.append(cols_up[j0])
            labels.append(("c", j0))
    for (a, extra) in cols_for_aux:
        design.append(extra)
        labels.append(("x", a))
    for (a, extra) in aux_terms:
        design.append(extra)
        labels.append(("y", a))
    m = np.stack([d.ravel() for d in design], axis=1)
    sol, res, rank, sv = np.linalg.lstsq(m, rhs.ravel(), rcond=None)
    resid = float(np.linalg.norm(m @ sol - rhs.ravel()))
    scale = float(np.linalg.norm(rhs) + 1.0)
    if resid > 1e-5 * scale:
        raise NotAccurate(f"windowed oracle residual {resid:.3e} too large")
    out = {}
    for (kind, idx), val in zip(labels, sol):
        out[(kind, idx)] = complex(val)
    value = out.get(("c", s0), 0.0)
    checks = {k: v for k, v in out.items() if k != ("c", s0)}
    return np.array([[value]]), {"residual": resid, "other_coefficients": checks}
