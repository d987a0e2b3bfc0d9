"""Stokes and connection matrices as accelerated infinite matrix products.

Entry values are limits of normalized ordered products of the recursive
matrices (the plus side runs L_t over positive integers under the right
shift action of A_tt, the minus side runs L_s over negative integers under
the left action of A_ss, connection rows run the inverse products).  Each
limit is evaluated on a doubling checkpoint schedule with Richardson
extrapolation in 1/p; marginal geometries (distance ratios on the unit
circle) produce oscillating 1/p tails whose phases are known, and those
are removed first by pair-averaging filters.

All scalar and matrix powers in the normalizers carry explicit arguments:
powers of (u_t - u_s) are taken at -tau per the limit formulas, powers of
the real checkpoint index p on the principal branch.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _products
from .errors import (
    LineBlocked,
    NotConverged,
    PoleHit,
    Resonant,
    SegmentBlocked,
    ValidationError,
)
from .hypersys import (
    BlockedSystem,
    anti_stokes,
    make_system,
    nonresonance_check,
    recursive_matrix,
    wrap_angle,
)
from .numkit import cpow, norm2

__all__ = [
    "ProductConfig",
    "ProductTrace",
    "StokesSet",
    "stokes_entry_plus",
    "stokes_entry_minus",
    "stokes_entry",
    "entry_guard",
    "connection_row",
    "connection_col",
    "assemble_Sd",
    "rotate_stokes",
    "monodromy_check",
    "duality_check",
    "difference_solution",
    "connection_Lk",
    "formal_monodromy_factor",
    "im_ordering",
    "triangularity_residual",
]

TWO_PI_I = 2j * np.pi


# ---------------------------------------------------------------------------
# configuration and traces


@dataclass(frozen=True)
class ProductConfig:
    """Controls the checkpoint schedule and extrapolation of product limits."""

    p0: int = 32
    pmax: int = 65536
    tol: float = 1e-8
    richardson_order: int = 2
    tie_filter: bool = True
    tie_band: float = 1e-9
    workers: int | None = None

    def schedule(self):
        p = self.p0
        while p <= self.pmax:
            yield p
            p *= 2


@dataclass(frozen=True)
class ProductTrace:
    """Partial values of one normalized product at the checkpoint schedule."""

    schedule: tuple[int, ...]
    partials: tuple
    extrapolated: np.ndarray
    error_estimate: float
    converged: bool
    guard: dict = field(default_factory=dict)

    def last_partial(self):
        return self.partials[-1]


def _richardson(values, order):
    """Extrapolate a doubling-schedule sequence assuming 1/p^m corrections."""
    table = [np.asarray(v, dtype=complex) for v in values]
    level = 0
    while level < order and len(table) > 1:
        level += 1
        fac = 2.0**level
        table = [
            (fac * table[i + 1] - table[i]) / (fac - 1.0) for i in range(len(table) - 1)
        ]
    return table[-1]


def _extrapolate(schedule, values, order):
    ext = _richardson(values, order)
    if len(values) > 1:
        prev = _richardson(values[:-1], order)
        increment = norm2(ext - prev)
    else:
        increment = np.inf
    est = max(increment, norm2(ext - values[-1]) / 10.0)
    return ext, est


def _tie_offsets(phases, p0):
    """Pair-averaging offsets killing e^{i m phi} tails of known phases."""
    offsets = []
    for phi in phases:
        aphi = abs(phi)
        if aphi < 1e-12:
            continue
        r = max(1, int(round(np.pi / aphi)))
        if r <= p0 and r not in offsets:
            offsets.append(r)
    return offsets[:3]


def _filter_weights(offsets):
    """Offsets and weights of the cascaded pair-averaging filter."""
    weights = {0: 1.0}
    for r in offsets:
        new: dict[int, float] = {}
        for s, w in weights.items():
            new[s] = new.get(s, 0.0) + w / 2.0
            new[s + r] = new.get(s + r, 0.0) + w / 2.0
        weights = new
    return sorted(weights.items())


def _run_trace(advance, snapshot, start_index, cfg: ProductConfig, guard, scale_hint=None):
    """Drive one product iteration through the checkpoint schedule.

    ``advance(m0, m1)`` applies factor indices m0..m1-1 to the internal
    state; ``snapshot(p)`` reads the normalized value after factor p.
    Filtered checkpoint values feed Richardson extrapolation; the error
    estimate is the last extrapolation increment (floored so the trace
    invariant |last partial - extrapolated| <= 10 x estimate holds).
    """
    taps = _filter_weights(guard.get("filter_offsets", []))
    schedule = []
    partials = []
    filtered = []
    cursor = start_index
    ext, est = None, np.inf
    scale = scale_hint
    for p in cfg.schedule():
        if p <= cursor:
            continue
        raw = None
        filt = 0.0
        for off, w in taps:
            advance(cursor, p + off)
            cursor = p + off
            v = snapshot(p + off)
            if raw is None:
                raw = v
            filt = filt + w * v
        if not np.all(np.isfinite(np.asarray(filt).view(float))):
            raise NotConverged(f"product trace diverged (non-finite at p={p})")
        schedule.append(p)
        partials.append(raw)
        filtered.append(filt)
        if scale is None:
            scale = max(norm2(raw), 1.0)
        scale = max(scale, norm2(filt))
        if len(filtered) >= 3:
            ext, est = _extrapolate(schedule, filtered, cfg.richardson_order)
            if est <= cfg.tol * scale:
                break
    if ext is None:
        ext, est = _extrapolate(schedule, filtered, cfg.richardson_order)
    converged = bool(est <= cfg.tol * max(scale, 1e-300))
    trace = ProductTrace(
        schedule=tuple(schedule),
        partials=tuple(partials),
        extrapolated=ext,
        error_estimate=float(est),
        converged=converged,
        guard=guard,
    )
    return ext, trace


def _require_converged(value, trace, what):
    if not trace.converged:
        exc = NotConverged(
            f"{what}: error estimate {trace.error_estimate:.3e} above tolerance at pmax"
        )
        exc.value = value
        exc.trace = trace
        raise exc
    return value, trace


# ---------------------------------------------------------------------------
# geometry guards


def _segment_distance(p, a, b):
    """Distance from p to the closed segment [a, b] in C."""
    ab = b - a
    t = ((p - a) * np.conj(ab)).real / abs(ab) ** 2
    t = min(1.0, max(0.0, t))
    return abs(p - (a + t * ab))


def _line_distance(p, a, b):
    ab = b - a
    return abs(((p - a) * np.conj(ab)).imag) / abs(ab)


def _check_segment(sys: BlockedSystem, s: int, t: int):
    a, b = sys.u[s - 1], sys.u[t - 1]
    seg = abs(b - a)
    for j in range(sys.nu):
        if j in (s - 1, t - 1):
            continue
        if _segment_distance(sys.u[j], a, b) < 1e-8 * seg:
            raise SegmentBlocked(f"u_{j + 1} lies on the segment (u_{s}, u_{t})")


def _check_line(sys: BlockedSystem, s: int, t: int):
    a, b = sys.u[s - 1], sys.u[t - 1]
    seg = abs(b - a)
    for j in range(sys.nu):
        if j in (s - 1, t - 1):
            continue
        if _line_distance(sys.u[j], a, b) < 1e-8 * seg:
            raise LineBlocked(f"u_{j + 1} lies on the line through u_{s}, u_{t}")


def entry_guard(sys: BlockedSystem, s: int, t: int, side: str, tie_band: float = 1e-9) -> dict:
    """Empirical convergence guard of one one-sided product.

    The plus side anchors at u_t and needs |u_t - u_s| <= |u_t - u_j| for
    every third point (the selected block is then extremal); the minus side
    anchors at u_s.  Ratios on the unit circle are ties: the limit still
    exists but with an oscillating 1/p tail at the recorded phase.
    """
    anchor = sys.u[t - 1] if side == "plus" else sys.u[s - 1]
    other = sys.u[s - 1] if side == "plus" else sys.u[t - 1]
    base = abs(other - anchor)
    ratios, phases = [], []
    for j in range(sys.nu):
        if j in (s - 1, t - 1):
            continue
        rho = (other - anchor) / (sys.u[j] - anchor)
        ratios.append(rho)
        if abs(abs(rho) - 1.0) <= tie_band:
            phases.append(float(np.angle(rho)))
    mods = [abs(r) for r in ratios]
    status = "strict"
    if any(m > 1.0 + tie_band for m in mods):
        status = "divergent"
    elif phases:
        status = "tie"
    return {
        "side": side,
        "status": status,
        "ratios": [complex(r) for r in ratios],
        "margin": (min([1.0 / m for m in mods]) - 1.0) if mods else np.inf,
        "tie_phases": phases,
        "base_gap": base,
    }


# ---------------------------------------------------------------------------
# the four product engines


def _block_data(sys: BlockedSystem, k0: int):
    """Hat-block data anchored at 0-based block k0."""
    hr = sys.hat_rows(k0)
    uhat = np.repeat(np.delete(sys.u, k0), np.delete(sys.mult, k0))
    return hr, uhat


def _hat_slice(sys: BlockedSystem, k0: int, j0: int) -> slice:
    """Position of block j0 inside the hat-stack that omits block k0."""
    before = sum(sys.mult[i] for i in range(j0) if i != k0)
    return slice(before, before + sys.mult[j0])


def _eig(a):
    vals, vecs = np.linalg.eig(a)
    return vals, vecs, np.linalg.inv(vecs)


def _powm(p: float, vals, vecs, vecs_inv):
    return (vecs * np.power(p, vals)) @ vecs_inv


def stokes_entry_plus(sys: BlockedSystem, s: int, t: int, cfg: ProductConfig = ProductConfig()):
    """(S_[tau])_{st} / 2 pi i via the right-sided product over L_t.

    tau = -arg(u_t - u_s); every power of (u_t - u_s) in the normalizer is
    taken at that fixed argument, powers of p on the principal branch.
    """
    _validate_pair(sys, s, t)
    _check_segment(sys, s, t)
    _require_blocks(sys)
    t0, s0 = t - 1, s - 1
    c = sys.u[t0] - sys.u[s0]
    # canonical anti-Stokes label in (-pi, pi]; at the seam arg(c) = pi this
    # selects tau = +pi, i.e. powers at theta = -pi
    tau = wrap_angle(-float(np.angle(c)))
    theta = -tau
    hr, uhat = _block_data(sys, t0)
    dv = 1.0 / (sys.u[t0] - uhat)
    att = sys.block(t0, t0)
    dt, vt, vt_inv = _eig(att)
    ahh = sys.A[np.ix_(hr, hr)]
    bhk = sys.A[hr][:, sys.sl(t0)] @ vt
    bkh = vt_inv @ sys.A[sys.sl(t0), :][:, hr]
    state = {"x": (c * (dv[:, None] * sys.A[hr][:, sys.sl(t0)])) @ vt}

    guard = entry_guard(sys, s, t, "plus", cfg.tie_band)
    guard["filter_offsets"] = _tie_offsets(guard["tie_phases"], cfg.p0) if cfg.tie_filter else []
    srows = _hat_slice(sys, t0, s0)
    ass = sys.block(s0, s0)
    ds_, vs_, vs_inv_ = _eig(ass)
    left_c = cpow(c, theta, ass)
    right_c = cpow(c, theta, -att)

    def advance(m0, m1):
        state["x"] = _products.run_plus(state["x"], m0, m1, dv, dt, ahh, bhk, bkh, c)

    def snapshot(p):
        x = state["x"] @ vt_inv
        blk = x[srows]
        return (
            left_c
            @ _powm(p, -ds_, vs_, vs_inv_)
            @ blk
            @ _powm(p, dt, vt, vt_inv)
            @ right_c
        )

    value, trace = _run_trace(advance, snapshot, 1, cfg, guard)
    return _require_converged(value, trace, f"stokes_entry_plus({s},{t})")


def stokes_entry_minus(sys: BlockedSystem, s: int, t: int, cfg: ProductConfig = ProductConfig()):
    """(S_[tau])_{st} / 2 pi i via the left-sided product over L_s.

    Uses the left shift action of A_ss: the row A_{s, s-hat} is pushed
    through L_s(-1+z), L_s(-2+z), ... and the t-block is read off under
    the same normalizer sandwich as the plus formula, with the printed
    +1 offset in the p-exponent.
    """
    _validate_pair(sys, s, t)
    _check_segment(sys, s, t)
    _require_blocks(sys)
    t0, s0 = t - 1, s - 1
    c = sys.u[t0] - sys.u[s0]
    tau = wrap_angle(-float(np.angle(c)))
    theta = -tau
    hr, uhat = _block_data(sys, s0)
    dvc = 1.0 / (sys.u[s0] - uhat)
    ass = sys.block(s0, s0)
    ds, vs, vs_inv = _eig(ass)
    ahh = sys.A[np.ix_(hr, hr)]
    bhs = sys.A[hr][:, sys.sl(s0)] @ vs
    bsh = vs_inv @ sys.A[sys.sl(s0), :][:, hr]
    state = {"g": vs_inv @ sys.A[sys.sl(s0), :][:, hr]}

    guard = entry_guard(sys, s, t, "minus", cfg.tie_band)
    guard["filter_offsets"] = _tie_offsets(guard["tie_phases"], cfg.p0) if cfg.tie_filter else []
    tcols = _hat_slice(sys, s0, t0)
    att = sys.block(t0, t0)
    dt_, vt_, vt_inv_ = _eig(att)
    left_c = cpow(c, theta, ass)
    right_c = cpow(c, theta, -att)

    def advance(m0, m1):
        # factor index m maps G_{m-1} -> G_m
        state["g"] = _products.run_minus(state["g"], m0 + 1, m1 + 1, dvc, ds, ahh, bhs, bsh, c)

    def snapshot(p):
        g = vs @ state["g"]
        blk = g[:, tcols]
        return (
            left_c
            @ _powm(p, -ds, vs, vs_inv)
            @ blk
            @ _powm(p, dt_, vt_, vt_inv_)
            @ right_c
        )

    value, trace = _run_trace(advance, snapshot, 0, cfg, guard)
    return _require_converged(value, trace, f"stokes_entry_minus({s},{t})")


def stokes_entry(sys: BlockedSystem, s: int, t: int, cfg: ProductConfig = ProductConfig()):
    """(S_[tau])_{st} itself, by whichever one-sided product is better guarded.

    Returns (entry, trace, side).  Tries the better of plus/minus first and
    falls back to the other when the trace fails to converge.
    """
    guards = {side: entry_guard(sys, s, t, side, cfg.tie_band) for side in ("plus", "minus")}
    rank = {"strict": 0, "tie": 1, "divergent": 2}
    order = sorted(("plus", "minus"), key=lambda sd: (rank[guards[sd]["status"]], -guards[sd]["margin"]))
    last_exc = None
    for side in order:
        fn = stokes_entry_plus if side == "plus" else stokes_entry_minus
        try:
            value, trace = fn(sys, s, t, cfg)
        except NotConverged as exc:
            last_exc = exc
            continue
        return TWO_PI_I * value, trace, side
    raise last_exc if last_exc is not None else NotConverged(f"entry ({s},{t})")


def connection_row(sys: BlockedSystem, t: int, s: int, cfg: ProductConfig = ProductConfig()):
    """Row t of the central connection matrix C_{tau +- eps}, tau = -arg(u_t - u_s).

    Runs the inverse ordered products that generate H^[s] and applies the
    normalizers of the coefficient limit (matrix powers of the full A on
    the right, at the fixed argument).
    """
    _validate_pair(sys, s, t)
    _check_line(sys, s, t)
    _require_full(sys)
    t0, s0 = t - 1, s - 1
    c = sys.u[t0] - sys.u[s0]
    tau = wrap_angle(-float(np.angle(c)))
    theta = -tau
    hr, uhat = _block_data(sys, s0)
    dvinv = sys.u[s0] - uhat
    dfull, vfull, vfull_inv = _eig(sys.A)
    state = {"x": np.eye(sys.n, dtype=complex)[hr]}

    guard = _connection_guard(sys, s, t, cfg.tie_band)
    guard["filter_offsets"] = _tie_offsets(guard["tie_phases"], cfg.p0) if cfg.tie_filter else []
    trows = _hat_slice(sys, s0, t0)
    att = sys.block(t0, t0)
    dt_, vt_, vt_inv_ = _eig(att)
    left_c = cpow(c, theta, att)
    right_c = cpow(c, theta, -sys.A)

    def advance(m0, m1):
        # factor index m maps X_{m-1} -> X_m
        state["x"] = _products.run_inv(
            state["x"], m0 + 1, m1 + 1, dvinv, dfull, vfull, vfull_inv, hr, c
        )

    def snapshot(p):
        blk = state["x"][trows]
        return (
            left_c
            @ _powm(p, -dt_, vt_, vt_inv_)
            @ blk
            @ _powm(p, dfull, vfull, vfull_inv)
            @ right_c
        )

    value, trace = _run_trace(advance, snapshot, 0, cfg, guard)
    return _require_converged(value, trace, f"connection_row({t},{s})")


def connection_col(sys: BlockedSystem, t: int, s: int, cfg: ProductConfig = ProductConfig()):
    """Column s of C_{tau +- eps}^{-1}, via the conjugate system (-u, -A^T).

    The transposition identity C_d(-u^T, -A^T) = C_d(u, A)^{-T} turns the
    left-action column formula into the row engine of the conjugate system
    (the same route the paper's proof takes), at the same tau.
    """
    conj = make_system(-sys.u, sys.mult, -sys.A.T)
    row, trace = connection_row(conj, s, t, cfg)
    return row.T.copy(), trace


def _connection_guard(sys: BlockedSystem, s: int, t: int, tie_band: float) -> dict:
    """Darboux guard: u_t must be (weakly) farthest from u_s."""
    s0, t0 = s - 1, t - 1
    base = sys.u[t0] - sys.u[s0]
    ratios, phases = [], []
    for j in range(sys.nu):
        if j in (s0, t0):
            continue
        rho = (sys.u[j] - sys.u[s0]) / base
        ratios.append(rho)
        if abs(abs(rho) - 1.0) <= tie_band:
            phases.append(float(np.angle(rho)))
    mods = [abs(r) for r in ratios]
    status = "strict"
    if any(m > 1.0 + tie_band for m in mods):
        status = "divergent"
    elif phases:
        status = "tie"
    return {
        "side": "connection",
        "status": status,
        "ratios": [complex(r) for r in ratios],
        "margin": (min([1.0 / m for m in mods]) - 1.0) if mods else np.inf,
        "tie_phases": phases,
        "base_gap": abs(base),
    }


# ---------------------------------------------------------------------------
# assembly of the monodromy data


@dataclass
class StokesSet:
    """Assembled Stokes data of one system in one direction."""

    sys: BlockedSystem
    d: float
    entries: dict
    factors: dict
    s_plus: np.ndarray
    s_minus: np.ndarray
    formal_monodromy: np.ndarray

    @property
    def s_d(self) -> np.ndarray:
        return self.s_plus - self.s_minus


def formal_monodromy_factor(sys: BlockedSystem, k: int = 1) -> np.ndarray:
    """exp(2 pi i k delta_u A), blockwise."""
    out = np.zeros((sys.n, sys.n), dtype=complex)
    for b in range(sys.nu):
        blk = sys.block(b, b)
        vals, vecs = np.linalg.eig(blk)
        out[sys.sl(b), sys.sl(b)] = (vecs * np.exp(TWO_PI_I * k * vals)) @ np.linalg.inv(vecs)
    return out


def _entry_worker(args):
    sys, s, t, cfg, source = args
    if source is not None:
        return (s, t), source(sys, s, t, cfg)
    value, trace, side = stokes_entry(sys, s, t, cfg)
    return (s, t), (value, {"side": side, "error_estimate": trace.error_estimate})


def assemble_Sd(
    sys: BlockedSystem,
    d: float,
    cfg: ProductConfig = ProductConfig(),
    entry_source=None,
):
    """Assemble every S_[tau] and the pair (S_d^+, S_d^-) for a direction d.

    d must avoid the anti-Stokes set.  Each S_[tau] carries the identity on
    the diagonal and its supported (s, t) entries; occurrences of tau
    shifted by 2 pi k are conjugated by the formal monodromy.  entry_source
    may replace the product path (signature (sys, s, t, cfg) -> (entry,
    info)), e.g. with oracle-computed entries.
    """
    directions = anti_stokes(sys)
    for rec in directions:
        if min(abs(wrap_angle(d - rec["tau"])), abs(wrap_angle(d - rec["tau"] - np.pi))) < 1e-9:
            raise ValidationError(f"direction d={d} sits on an anti-Stokes line")

    workers = cfg.workers or int(os.environ.get("STOKES_LAB_THREADS", "0")) or min(4, os.cpu_count() or 1)
    pairs = [(s, t) for s in range(1, sys.nu + 1) for t in range(1, sys.nu + 1) if s != t]
    jobs = [(sys, s, t, cfg, entry_source) for (s, t) in pairs]
    entries = {}
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for key, val in pool.map(_entry_worker, jobs):
                entries[key] = val
    else:
        for job in jobs:
            key, val = _entry_worker(job)
            entries[key] = val

    factors = {}
    for rec in directions:
        m = np.eye(sys.n, dtype=complex)
        for (s, t) in rec["pairs"]:
            m[sys.sl(s - 1), sys.sl(t - 1)] = entries[(s, t)][0]
        factors[rec["tau"]] = m

    def occurrence(tau_real):
        base = wrap_angle(tau_real)
        # match against the stored base directions
        best = min(factors, key=lambda tb: abs(wrap_angle(tb - base)))
        k = round((tau_real - best) / (2 * np.pi))
        mat = factors[best]
        if k != 0:
            e_plus = formal_monodromy_factor(sys, -k)
            e_minus = formal_monodromy_factor(sys, k)
            mat = e_plus @ mat @ e_minus
        return mat

    taus_all = sorted(factors)
    occs_up = sorted(
        tau + 2 * np.pi * k
        for tau in taus_all
        for k in (-1, 0, 1)
        if d < tau + 2 * np.pi * k < d + np.pi
    )
    occs_dn = sorted(
        tau + 2 * np.pi * k
        for tau in taus_all
        for k in (-1, 0, 1)
        if d - np.pi < tau + 2 * np.pi * k < d
    )
    s_plus = np.eye(sys.n, dtype=complex)
    for tau in occs_up:  # ascending: leftmost factor is the largest tau
        s_plus = occurrence(tau) @ s_plus
    s_minus = np.eye(sys.n, dtype=complex)
    for tau in reversed(occs_dn):  # S_d^- = S_[smallest]^{-1} ... S_[largest]^{-1}
        s_minus = np.linalg.inv(occurrence(tau)) @ s_minus
    return StokesSet(
        sys=sys,
        d=float(d),
        entries=entries,
        factors=factors,
        s_plus=s_plus,
        s_minus=s_minus,
        formal_monodromy=sys.delta_uA(),
    )


def rotate_stokes(sys: BlockedSystem, pair, k: int = 1):
    """S_{d + 2 k pi}^+- = e^{-2 k pi i delta_u A} S_d^+- e^{2 k pi i delta_u A}."""
    if k == 0:
        return pair
    left = formal_monodromy_factor(sys, -k)
    right = formal_monodromy_factor(sys, k)
    sp, sm = pair
    return (left @ sp @ right, left @ sm @ right)


def im_ordering(sys: BlockedSystem, d: float) -> np.ndarray:
    """Permutation (0-based block labels) making Im(u_k e^{id}) decreasing."""
    key = np.imag(sys.u * np.exp(1j * d))
    return np.argsort(-key, kind="stable")


def triangularity_residual(sys: BlockedSystem, d: float, s_plus, s_minus) -> float:
    """Off-triangular mass of S_d^+- under the Im(u e^{id}) ordering."""
    perm = im_ordering(sys, d)
    worst = 0.0
    for a, ka in enumerate(perm):
        for b, kb in enumerate(perm):
            blk_p = s_plus[sys.sl(ka), sys.sl(kb)]
            blk_m = s_minus[sys.sl(ka), sys.sl(kb)]
            if a > b:
                worst = max(worst, float(np.max(np.abs(blk_p))))
            if a < b:
                worst = max(worst, float(np.max(np.abs(blk_m))))
            if a == b:
                eye = np.eye(sys.mult[ka])
                worst = max(worst, float(np.max(np.abs(blk_p - eye))))
                worst = max(worst, float(np.max(np.abs(blk_m - eye))))
    return worst


def _match_sorted(a, b):
    """Greedy minimal matching distance between two eigenvalue multisets."""
    a = sorted(a, key=lambda z: (round(z.real, 9), round(z.imag, 9)))
    b = list(b)
    worst = 0.0
    for x in a:
        j = int(np.argmin([abs(x - y) for y in b]))
        worst = max(worst, abs(x - b[j]))
        b.pop(j)
    return worst


def monodromy_check(sys: BlockedSystem, s_plus, s_minus, c_d=None) -> dict:
    """Spectral identity e^{2 pi i M_d} = (S_d^-)^{-1} e^{2 pi i dA} S_d^+.

    Reports the eigenvalue mismatch against e^{2 pi i Eigen(A)} and, when a
    connection matrix is supplied, the conjugation residual
    || C_d A C_d^{-1} - M_d || with M_d the log matched to Eigen(A).
    """
    mono = np.linalg.inv(s_minus) @ formal_monodromy_factor(sys) @ s_plus
    eig_mono = np.linalg.eigvals(mono)
    eig_a = np.linalg.eigvals(sys.A)
    mismatch = _match_sorted(list(np.exp(TWO_PI_I * eig_a)), list(eig_mono))
    out = {"eigenvalue_mismatch": float(mismatch)}
    if c_d is not None:
        m_d = _matched_log(mono, eig_a)
        out["conjugation_residual"] = float(
            norm2(c_d @ sys.A @ np.linalg.inv(c_d) - m_d)
        )
    return out


def _matched_log(mono, eig_a):
    """The unique log of the monodromy factor with Eigen(M_d) = Eigen(A)."""
    vals, vecs = np.linalg.eig(mono)
    targets = list(eig_a)
    chosen = []
    for mu in vals:
        j = int(np.argmin([abs(np.exp(TWO_PI_I * lam) - mu) for lam in targets]))
        chosen.append(targets.pop(j))
    return vecs @ np.diag(chosen) @ np.linalg.inv(vecs)


def duality_check(sys: BlockedSystem, d: float, cfg: ProductConfig = ProductConfig(), entry_source=None) -> dict:
    """Transposition identity S_d^+-(-u^T, -A^T) = S_d^+-(u, A)^{-T}.

    Both sides are full independent computations.
    """
    direct = assemble_Sd(sys, d, cfg, entry_source=entry_source)
    conj = make_system(-sys.u, sys.mult, -sys.A.T)
    dual = assemble_Sd(conj, d, cfg, entry_source=entry_source)
    rp = norm2(dual.s_plus - np.linalg.inv(direct.s_plus).T)
    rm = norm2(dual.s_minus - np.linalg.inv(direct.s_minus).T)
    return {"plus": float(rp), "minus": float(rm)}


# ---------------------------------------------------------------------------
# canonical solutions of the difference system


def _diff_pre(sys: BlockedSystem, k: int):
    k0 = k - 1
    hr, uhat = _block_data(sys, k0)
    dv = 1.0 / (sys.u[k0] - uhat)
    akk = sys.block(k0, k0)
    dk, vk, vk_inv = _eig(akk) if sys.mult[k0] else (np.zeros(0), np.eye(0), np.eye(0))
    ahh = sys.A[np.ix_(hr, hr)]
    ck = sys.A[hr][:, sys.sl(k0)] @ vk
    ek = vk_inv @ sys.A[sys.sl(k0), :][:, hr]
    kappa = complex(min(abs(sys.u[k0] - uu) for i, uu in enumerate(sys.u) if i != k0))
    return hr, uhat, dv, dk, ahh, ck, ek, kappa


def _check_poles(sys: BlockedSystem, k: int, z: complex, sign: str):
    lam = np.linalg.eigvals(-sys.block(k - 1, k - 1))
    zc = complex(z)
    rng = range(-1, -200, -1) if sign == "+" else range(1, 200)
    worst = min(abs(zc - (l + m)) for l in lam for m in rng)
    if worst < 1e-8:
        raise PoleHit(f"z={z} within 1e-8 of the singular set of the {sign} solution")


def difference_solution(sys: BlockedSystem, k: int, sign: str, z: complex, cfg: ProductConfig = ProductConfig()):
    """Canonical difference-system solutions as normalized products.

    sign '+' returns L_k^+(1+z)^{-1}; sign '-' returns L_k^-(z); both solve
    Psi(z+1) = L_k(z) Psi(z) and are evaluated by the scaled literal
    products with the block normalizers applied at each checkpoint.
    """
    if sign not in ("+", "-"):
        raise ValidationError("sign must be '+' or '-'")
    _check_poles(sys, k, z, sign)
    _require_blocks(sys)
    k0 = k - 1
    hr, uhat, dv, dk, ahh, ck, ek, kappa = _diff_pre(sys, k)
    nh = len(hr)
    z = complex(z)
    blocks = [j for j in range(sys.nu) if j != k0]
    guard_phases = []
    ratios = []
    for j in blocks:
        rho = kappa / (sys.u[k0] - sys.u[j])
        ratios.append(rho)
    # row/column blocks are extremal relative to each other: any pair of
    # distinct moduli makes the smaller-|u_k - u_j| rows dominate the others
    for i, ri in enumerate(ratios):
        for j, rj in enumerate(ratios):
            if i != j and abs(abs(ri / rj) - 1.0) <= cfg.tie_band:
                guard_phases.append(float(np.angle(ri / rj)))
    guard = {
        "side": f"difference{sign}",
        "status": "tie" if guard_phases else ("strict" if len(set(np.round(np.abs(ratios), 12))) <= 1 else "mixed"),
        "ratios": [complex(r) for r in ratios],
        "tie_phases": guard_phases,
        "filter_offsets": _tie_offsets(guard_phases, cfg.p0) if cfg.tie_filter else [],
    }

    state = {"m": np.eye(nh, dtype=complex)}
    if sign == "+":
        def advance(m0, m1):
            state["m"] = _products.run_diff_plus(state["m"], m0 + 1, m1 + 1, z, dv, dk, ahh, ck, ek, kappa)
    else:
        def advance(m0, m1):
            state["m"] = _products.run_diff_minus(state["m"], m0 + 1, m1 + 1, z, dv, dk, ahh, ck, ek, kappa)

    block_eigs = {}
    for j in blocks:
        ajj = sys.block(j, j)
        block_eigs[j] = _eig(ajj)

    def snapshot(p):
        m = state["m"].copy()
        if sign == "+":
            # value = (u_k I - u_hat)^{1+z} p^{-zI-dB} [(u_k I - u_hat)^p / p!] PROD
            for j in blocks:
                rows = _hat_slice(sys, k0, j)
                cj = sys.u[k0] - sys.u[j]
                ratio = cj / kappa
                vals, vecs, vecs_inv = block_eigs[j]
                pref = (
                    cpow(cj, float(np.angle(cj)), (1 + z) * np.eye(sys.mult[j]))
                    * np.power(p, -z)
                    * np.exp(p * np.log(ratio))
                )
                m[rows, :] = pref @ _powm(p, -vals, vecs, vecs_inv) @ m[rows, :]
            return m
        for j in blocks:
            cols = _hat_slice(sys, k0, j)
            cj = sys.u[j] - sys.u[k0]
            ratio = cj / kappa
            vals, vecs, vecs_inv = block_eigs[j]
            post = (
                np.exp(p * np.log(ratio))
                * np.power(p, z)
                * cpow(cj, float(np.angle(cj)), -z * np.eye(sys.mult[j]))
            )
            m[:, cols] = m[:, cols] @ _powm(p, vals, vecs, vecs_inv) @ post
        return m

    value, trace = _run_trace(advance, snapshot, 0, cfg, guard)
    return _require_converged(value, trace, f"difference_solution({k},{sign})")


def connection_Lk(sys: BlockedSystem, k: int, z: complex, cfg: ProductConfig = ProductConfig(), nodes: int = 64):
    """The difference-system connection matrix L_k(z) with diagnostics.

    Evaluates L_k = (scr L_k^+(1+z))^{-1} L_k(z) scr L_k^-(z) at z and z+1
    (periodicity), and integrates around each pole -lambda(A_kk) on small
    circles to compare the residue sum with the Stokes-entry product
    formula.
    """
    def lk_value(zz):
        gp, _ = difference_solution(sys, k, "+", zz, cfg)
        gm, _ = difference_solution(sys, k, "-", zz, cfg)
        return gp @ recursive_matrix(sys, k, zz) @ gm

    val = lk_value(z)
    val_shift = lk_value(z + 1.0)
    periodicity = norm2(val_shift - val) / max(norm2(val), 1e-300)

    lam = np.linalg.eigvals(-sys.block(k - 1, k - 1))
    # cluster coincident poles
    poles = []
    for l in lam:
        if not any(abs(l - q) < 1e-9 for q in poles):
            poles.append(complex(l))
    others = [p + dz for p in poles for dz in (-1.0, 0.0, 1.0) if dz != 0.0] + poles
    res_sum = np.zeros((val.shape[0], val.shape[0]), dtype=complex)
    for p0 in poles:
        gap = min(
            [abs(p0 - q) for q in others if abs(p0 - q) > 1e-12] + [0.3]
        )
        r = min(gap / 3.0, 0.1)
        acc = np.zeros_like(res_sum)
        for a in range(nodes):
            w = p0 + r * np.exp(2j * np.pi * a / nodes)
            acc += lk_value(w) * (w - p0)
        res_sum += acc / nodes
    return {"value": val, "periodicity": float(periodicity), "residue_sum": res_sum, "poles": poles}


# ---------------------------------------------------------------------------
# shared validation


def _validate_pair(sys: BlockedSystem, s: int, t: int):
    if not (1 <= s <= sys.nu and 1 <= t <= sys.nu) or s == t:
        raise ValidationError(f"need distinct 1-based block labels, got ({s}, {t})")


def _require_blocks(sys: BlockedSystem):
    rep = nonresonance_check(sys)
    if not rep.blocks_pass:
        raise Resonant(f"diagonal blocks resonant: margins {rep.block_margins}")


def _require_full(sys: BlockedSystem):
    rep = nonresonance_check(sys)
    if not rep.full_pass:
        raise Resonant(f"A resonant: margin {rep.full_margin:.3e}")
