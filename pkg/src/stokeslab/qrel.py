"""Quantum-group structure of computed Stokes matrices.

Verifies, numerically and in any representation: the Yang-Baxter property
of the standard R-matrix, the RLL exchange relations of the modified
Stokes pair L_+- = q^{-+ delta_u E} S_d^+-, the U_q(gl_nu) generator
relations induced by the unipotent entries, and the commutation relations
of the matrix script-T whose entries dress the Stokes entries with weight
powers of (u_t - u_s).

Argument bookkeeping: script-T entries are invariant under 2 pi
re-branching (the weight powers cancel against the formal-monodromy
conjugation of S_[tau]), so entries are stored at the canonical
tau in (-pi, pi]; the scalar prefactors of each commutation relation are
evaluated with all pairwise argument differences inside [-pi, pi],
reversed pairs sitting at exactly +-pi.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ArgumentWindowViolation,
    GeometryAmbiguous,
    OrderingFailure,
    ValidationError,
)
from .hypersys import BlockedSystem, wrap_angle
from .numkit import mat_fun, norm2

__all__ = [
    "RMatrix",
    "ScriptT",
    "standard_R",
    "modified_L",
    "rll_residuals",
    "uq_generator_map",
    "script_T",
    "oneside_residuals",
    "weight_conjugation_residual",
]


# ---------------------------------------------------------------------------
# R-matrix


@dataclass(frozen=True)
class RMatrix:
    nu: int
    q: complex
    mat: np.ndarray

    def yang_baxter_residual(self) -> float:
        n = self.nu
        eye = np.eye(n)
        r12 = np.kron(self.mat, eye)
        r23 = np.kron(eye, self.mat)
        r13 = _r13(self.mat, n)
        return norm2(r12 @ r13 @ r23 - r23 @ r13 @ r12)


def _r13(r: np.ndarray, n: int) -> np.ndarray:
    t = r.reshape(n, n, n, n)
    out = np.zeros((n, n, n, n, n, n), dtype=complex)
    for a in range(n):
        out[:, a, :, :, a, :] = np.transpose(t, (0, 2, 1, 3))[:, :, :, :]
    return out.reshape(n**3, n**3)


def standard_R(nu: int, q: complex) -> RMatrix:
    """R = sum_{i != j} E_ii x E_jj + q sum_i E_ii x E_ii + (q - 1/q) sum_{j < i} E_ij x E_ji."""
    q = complex(q)
    if q == 0:
        raise ValidationError("q must be nonzero")
    n = nu
    r = np.zeros((n * n, n * n), dtype=complex)

    def e(i, j):
        m = np.zeros((n, n))
        m[i, j] = 1.0
        return m

    for i in range(n):
        for j in range(n):
            if i != j:
                r += np.kron(e(i, i), e(j, j))
    for i in range(n):
        r += q * np.kron(e(i, i), e(i, i))
    for i in range(n):
        for j in range(i):
            r += (q - 1 / q) * np.kron(e(i, j), e(j, i))
    return RMatrix(nu=nu, q=q, mat=r)


# ---------------------------------------------------------------------------
# modified Stokes pair and RLL


def _ordering_permutation(sys: BlockedSystem, d: float) -> np.ndarray:
    key = np.imag(sys.u * np.exp(1j * d))
    perm = np.argsort(-key, kind="stable")
    sorted_keys = key[perm]
    if np.any(np.diff(sorted_keys) > -1e-12):
        raise OrderingFailure(
            f"Im(u e^(i {d:.4f})) has ties; no permutation gives a strict ordering"
        )
    return perm


def _permute_blocks(sys: BlockedSystem, mat: np.ndarray, perm) -> np.ndarray:
    idx = np.concatenate([np.arange(sys.offsets[p], sys.offsets[p + 1]) for p in perm])
    return mat[np.ix_(idx, idx)]


def modified_L(sys: BlockedSystem, s_plus: np.ndarray, s_minus: np.ndarray, d: float):
    """L_+- = q^{-+ delta_u E} S_d^+-(u, -hbar E), under the Im-decreasing ordering.

    If the natural block order is not Im(u_k e^{id})-decreasing, blocks are
    reindexed internally (the permuted system is returned alongside).
    """
    if not sys.is_quantum:
        raise ValidationError("modified_L needs a quantum system")
    perm = _ordering_permutation(sys, d)
    rep, hbar = sys.rep, sys.hbar
    q = np.exp(1j * np.pi * hbar)
    m = rep.dimV
    sp = _permute_blocks(sys, s_plus, perm)
    sm = _permute_blocks(sys, s_minus, perm)
    qd = np.zeros((sys.n, sys.n), dtype=complex)
    for a, p in enumerate(perm):
        # delta_u E block a of the permuted system is e_{pp}
        qd[a * m : (a + 1) * m, a * m : (a + 1) * m] = mat_fun(
            rep.gen[p, p], lambda lam: q**lam
        )
    qd_inv = np.linalg.inv(qd)
    l_plus = qd_inv @ sp
    l_minus = qd @ sm
    return l_plus, l_minus, perm, q


def _l_leg(l: np.ndarray, dimv: int, nu: int, leg: int) -> np.ndarray:
    """Embed L in End(V) x End(C^nu) x End(C^nu) on tensor leg 1 or 2."""
    blocks = l.reshape(nu, dimv, nu, dimv).transpose(0, 2, 1, 3)
    n3 = dimv * nu * nu
    out = np.zeros((n3, n3), dtype=complex)
    eye = np.eye(nu)
    for i in range(nu):
        for j in range(nu):
            if leg == 1:
                factor = np.kron(np.kron(blocks[i, j], _unit(nu, i, j)), eye)
            else:
                factor = np.kron(np.kron(blocks[i, j], eye), _unit(nu, i, j))
            out += factor
    return out


def _unit(n, i, j):
    m = np.zeros((n, n))
    m[i, j] = 1.0
    return m


def rll_residuals(r: RMatrix, l_plus: np.ndarray, l_minus: np.ndarray, dimv: int):
    """Spectral-norm residuals of R L^(1) L^(2) = L^(2) L^(1) R for (+,+), (-,-), (+,-)."""
    nu = r.nu
    r12 = np.kron(np.eye(dimv), r.mat)
    lp1, lp2 = _l_leg(l_plus, dimv, nu, 1), _l_leg(l_plus, dimv, nu, 2)
    lm1, lm2 = _l_leg(l_minus, dimv, nu, 1), _l_leg(l_minus, dimv, nu, 2)
    scale = norm2(r.mat) * max(norm2(l_plus), norm2(l_minus)) ** 2
    r_pp = norm2(r12 @ lp1 @ lp2 - lp2 @ lp1 @ r12) / scale
    r_mm = norm2(r12 @ lm1 @ lm2 - lm2 @ lm1 @ r12) / scale
    r_pm = norm2(r12 @ lp1 @ lm2 - lp2 @ lm1 @ r12) / scale
    return {"pp": float(r_pp), "mm": float(r_mm), "pm": float(r_pm)}


# ---------------------------------------------------------------------------
# U_q(gl_nu) generators


def uq_generator_map(sys: BlockedSystem, s_plus: np.ndarray, s_minus: np.ndarray, d: float):
    """Generator images f_i, e_i, q^{+-h_j} and residuals of the U_q relations.

    f_i -> s+_{i,i+1}/(q - 1/q), e_i -> -q^{h_{i+1}} s-_{i+1,i} q^{-h_i}/(q - 1/q),
    q^{+-h_j} -> q^{+-e_jj}, on the Im-ordered block labels.
    """
    l_plus, l_minus, perm, q = modified_L(sys, s_plus, s_minus, d)
    rep, hbar = sys.rep, sys.hbar
    m = rep.dimV
    nu = sys.nu
    sp = _permute_blocks(sys, s_plus, perm)
    sm = _permute_blocks(sys, s_minus, perm)

    def blk(mat, i, j):
        return mat[i * m : (i + 1) * m, j * m : (j + 1) * m]

    qh = [mat_fun(rep.gen[p, p], lambda lam: q**lam) for p in perm]
    qh_inv = [np.linalg.inv(x) for x in qh]
    coef = 1.0 / (q - 1 / q)
    fs = [coef * blk(sp, i, i + 1) for i in range(nu - 1)]
    es = [-coef * (qh[i + 1] @ blk(sm, i + 1, i) @ qh_inv[i]) for i in range(nu - 1)]

    scale = max(1.0, max((norm2(x) for x in fs + es), default=1.0)) ** 2
    res = {}
    worst_qh = 0.0
    for i in range(nu):
        for j in range(nu):
            worst_qh = max(worst_qh, norm2(qh[i] @ qh[j] - qh[j] @ qh[i]))
    res["qh_commute"] = worst_qh

    w_f = w_e = 0.0
    for j in range(nu):
        for i in range(nu - 1):
            target = q ** (float(i == j) - float(j == i + 1))
            w_f = max(w_f, norm2(qh[j] @ fs[i] @ qh_inv[j] - target * fs[i]))
            target_e = q ** (float(i + 1 == j) - float(j == i))
            w_e = max(w_e, norm2(qh[j] @ es[i] @ qh_inv[j] - target_e * es[i]))
    res["qh_f"] = w_f / max(1.0, max(norm2(x) for x in fs + [np.zeros((1, 1))]))
    res["qh_e"] = w_e / max(1.0, max(norm2(x) for x in es + [np.zeros((1, 1))]))

    w = 0.0
    for i in range(nu - 1):
        lhs = fs[i] @ es[i] - es[i] @ fs[i]
        rhs = coef * (qh[i] @ qh_inv[i + 1] - qh[i + 1] @ qh_inv[i])
        w = max(w, norm2(lhs - rhs))
    res["fe_diag"] = w / scale

    w = 0.0
    for i1 in range(nu - 1):
        for i2 in range(nu - 1):
            if i1 != i2:
                w = max(w, norm2(fs[i2] @ es[i1] - es[i1] @ fs[i2]))
    res["fe_off"] = w / scale

    w_sf = w_se = w_ff = w_ee = 0.0
    for i1 in range(nu - 1):
        for i2 in range(nu - 1):
            if abs(i1 - i2) == 1:
                w_sf = max(
                    w_sf,
                    norm2(
                        fs[i1] @ fs[i1] @ fs[i2]
                        - (q + 1 / q) * fs[i1] @ fs[i2] @ fs[i1]
                        + fs[i2] @ fs[i1] @ fs[i1]
                    ),
                )
                w_se = max(
                    w_se,
                    norm2(
                        es[i1] @ es[i1] @ es[i2]
                        - (q + 1 / q) * es[i1] @ es[i2] @ es[i1]
                        + es[i2] @ es[i1] @ es[i1]
                    ),
                )
            if abs(i1 - i2) >= 2:
                w_ff = max(w_ff, norm2(fs[i1] @ fs[i2] - fs[i2] @ fs[i1]))
                w_ee = max(w_ee, norm2(es[i1] @ es[i2] - es[i2] @ es[i1]))
    den3 = max(1.0, max((norm2(x) for x in fs + es), default=1.0)) ** 3
    res["serre_f"] = w_sf / den3
    res["serre_e"] = w_se / den3
    res["far_f"] = w_ff / scale
    res["far_e"] = w_ee / scale
    return {"f": fs, "e": es, "qh": qh, "residuals": res, "perm": perm, "q": q}


# ---------------------------------------------------------------------------
# the matrix script-T and its commutation relations


@dataclass(frozen=True)
class ScriptT:
    """Entries T_st = (u_t-u_s)^{hbar e_ss} (S_[tau])_{st} (u_t-u_s)^{-hbar e_tt} / 2 pi i."""

    sys: BlockedSystem
    entries: dict
    thetas: dict

    def __getitem__(self, key):
        return self.entries[key]


def script_T(sys: BlockedSystem, stokes_entries: dict) -> ScriptT:
    """Dress Stokes entries into script-T; entries are 2 pi-branch invariant.

    ``stokes_entries`` maps 1-based (s, t) to (S_[tau])_{st} at the
    canonical tau = wrap(-arg(u_t - u_s)).
    """
    if not sys.is_quantum:
        raise ValidationError("script_T needs a quantum system")
    rep, hbar = sys.rep, sys.hbar
    entries = {}
    thetas = {}
    for (s, t), block in stokes_entries.items():
        c = sys.u[t - 1] - sys.u[s - 1]
        theta = -wrap_angle(-float(np.angle(c)))
        logc = np.log(abs(c)) + 1j * theta
        left = mat_fun(rep.gen[s - 1, s - 1], lambda lam: np.exp(hbar * lam * logc))
        right = mat_fun(rep.gen[t - 1, t - 1], lambda lam: np.exp(-hbar * lam * logc))
        entries[(s, t)] = left @ np.asarray(block, dtype=complex) @ right / (2j * np.pi)
        thetas[(s, t)] = theta
    return ScriptT(sys=sys, entries=entries, thetas=thetas)


def weight_conjugation_residual(t: ScriptT) -> float:
    """max over k, (s,t) of || q^{e_kk} T_st q^{-e_kk} - q^{d_sk - d_kt} T_st ||."""
    rep, hbar = t.sys.rep, t.sys.hbar
    q = np.exp(1j * np.pi * hbar)
    worst = 0.0
    for (s, tt), block in t.entries.items():
        for k in range(1, t.sys.nu + 1):
            qk = mat_fun(rep.gen[k - 1, k - 1], lambda lam: q**lam)
            lhs = qk @ block @ np.linalg.inv(qk)
            rhs = q ** (float(k == s) - float(k == tt)) * block
            worst = max(worst, norm2(lhs - rhs) / max(norm2(block), 1e-300))
    return worst


def _assign_thetas(sys: BlockedSystem, pairs, tol: float = 1e-9):
    """Window-consistent arguments for the directed pairs of one relation.

    Every theta is an argument of its own u_t - u_s; all pairwise
    differences land in [-pi, pi], with exactly +-pi only between mutually
    reversed (or anti-parallel) pairs, whose branch is fixed by the other
    members of the relation.  Raises when a non-reversed pair sits within
    tolerance of the +-pi boundary with no consistent resolution.
    """
    thetas: dict = {}
    order = list(pairs)
    ref_pair = order[0]
    thetas[ref_pair] = float(np.angle(sys.u[ref_pair[1] - 1] - sys.u[ref_pair[0] - 1]))
    for pair in order[1:]:
        if pair in thetas:
            continue
        base = float(np.angle(sys.u[pair[1] - 1] - sys.u[pair[0] - 1]))
        cands = [base + 2 * np.pi * k for k in (-2, -1, 0, 1, 2)]
        best = None
        best_margin = -np.inf
        for cand in cands:
            sep = max(abs(cand - th) for th in thetas.values())
            margin = np.pi + tol / 2 - sep
            if margin > best_margin:
                best_margin = margin
                best = cand
        if best is None or best_margin < 0:
            raise ArgumentWindowViolation(
                f"pair {pair}: no argument within pi of the relation's window"
            )
        if best_margin < tol and not any(
            q == (pair[1], pair[0]) for q in thetas
        ):
            raise GeometryAmbiguous(
                f"pair {pair} anti-parallel to the window boundary within tolerance"
            )
        thetas[pair] = best
    return thetas


def _wpow_scalar(sys, pair, theta, power):
    s, t = pair
    c = sys.u[t - 1] - sys.u[s - 1]
    return np.exp(power * (np.log(abs(c)) + 1j * theta))


def _wpow_weight(sys, pair, theta, weight_matrix, hbar):
    """(u_t - u_s)^{hbar W} for a diagonal weight combination W."""
    s, t = pair
    c = sys.u[t - 1] - sys.u[s - 1]
    logc = np.log(abs(c)) + 1j * theta
    return mat_fun(weight_matrix, lambda lam: np.exp(hbar * lam * logc))


def _segments_intersect(a, b, c, d, tol):
    """Closed-segment intersection with a degeneracy band."""

    def orient(p, q, r):
        return np.imag(np.conj(q - p) * (r - p))

    scale = max(abs(b - a), abs(d - c))
    o1, o2 = orient(a, b, c), orient(a, b, d)
    o3, o4 = orient(c, d, a), orient(c, d, b)
    band = tol * scale * scale
    if min(abs(o1), abs(o2), abs(o3), abs(o4)) < band:
        raise GeometryAmbiguous("segment configuration within tolerance of touching")
    return (o1 * o2 < 0) and (o3 * o4 < 0)


def oneside_residuals(t: ScriptT, tuples=None) -> list:
    """Residuals of the script-T commutation relations, case-tagged.

    Evaluates, for the supplied 1-based pair tuples (or every applicable
    combination of stored entries), whichever relation the geometry
    selects: commuting disjoint segments, the crossing-segment exchange
    relation, the three shared-point (triangle) relations, or the
    opposite-pair commutator.  All scalar and weight-power prefactors are
    placed on the left, with per-relation argument windows.
    """
    sys = t.sys
    rep, hbar = sys.rep, sys.hbar
    q = np.exp(1j * np.pi * hbar)
    coef = q - 1 / q
    out = []
    pairs = sorted(t.entries)
    if tuples is None:
        tuples = [(p1, p2) for p1 in pairs for p2 in pairs if p1 < p2]
    for (p1, p2) in tuples:
        (s1, t1), (s2, t2) = p1, p2
        idx = {s1, t1, s2, t2}
        if len(idx) == 4:
            out.append(_distinct_case(t, p1, p2, q, coef, hbar))
        elif len(idx) == 2:
            out.append(_opposite_case(t, p1, q, coef))
        else:
            rec = _triangle_case(t, p1, p2, q, coef, hbar)
            if rec is not None:
                out.append(rec)
    return out


def _distinct_case(t: ScriptT, p1, p2, q, coef, hbar):
    sys = t.sys
    rep = sys.rep
    (s1, t1), (s2, t2) = p1, p2
    a, b = sys.u[s1 - 1], sys.u[t1 - 1]
    c, d = sys.u[s2 - 1], sys.u[t2 - 1]
    scale = max(norm2(t.entries[p1]) * norm2(t.entries[p2]), 1e-300)
    if not _segments_intersect(a, b, c, d, 1e-9):
        r = norm2(t.entries[p1] @ t.entries[p2] - t.entries[p2] @ t.entries[p1]) / scale
        return {"case": "disjoint", "tuple": (p1, p2), "residual": float(r)}
    # order the pairs so arg(u_t2 - u_s2) - arg(u_t1 - u_s1) in (0, pi)
    th = _assign_thetas(sys, [p1, p2])
    if th[p2] - th[p1] < 0:
        p1, p2 = p2, p1
    (s1, t1), (s2, t2) = p1, p2
    cross1, cross2 = (s1, t2), (s2, t1)
    th = _assign_thetas(sys, [p1, p2, cross1, cross2])
    eye = np.eye(rep.dimV)

    def w(i, j):
        return rep.gen[i - 1, i - 1] - rep.gen[j - 1, j - 1]

    lhs = (t.entries[p1] @ t.entries[p2] - t.entries[p2] @ t.entries[p1]) / coef
    pref = (
        _wpow_weight(sys, cross1, th[cross1], w(t2, s1) + eye, hbar)
        @ _wpow_weight(sys, cross2, th[cross2], w(t1, s2) + eye, hbar)
        @ _wpow_weight(sys, p1, th[p1], -(w(t1, s1) + eye), hbar)
        @ _wpow_weight(sys, p2, th[p2], -(w(t2, s2) + eye), hbar)
    )
    rhs = pref @ t.entries[cross1] @ t.entries[cross2]
    scale = max(norm2(t.entries[p1]) * norm2(t.entries[p2]), 1e-300)
    return {
        "case": "crossing",
        "tuple": (p1, p2),
        "residual": float(norm2(lhs - rhs) / scale),
    }


def _opposite_case(t: ScriptT, p, q, coef):
    sys = t.sys
    rep = sys.rep
    s, tt = p
    rev = (tt, s)
    scale = max(norm2(t.entries[p]) * norm2(t.entries[rev]), 1.0)
    lhs = (t.entries[p] @ t.entries[rev] - t.entries[rev] @ t.entries[p]) * (2j * np.pi) / coef
    dw = rep.gen[s - 1, s - 1] - rep.gen[tt - 1, tt - 1]
    rhs = (mat_fun(dw, lambda lam: q**lam) - mat_fun(-dw, lambda lam: q**lam)) / (2j * np.pi)
    return {
        "case": "opposite",
        "tuple": (p, rev),
        "residual": float(norm2(lhs - rhs) / scale),
    }


def _triangle_case(t: ScriptT, p1, p2, q, coef, hbar):
    """Shared-index relations: chain (s,m)(m,t), shared source, shared target."""
    sys = t.sys
    rep = sys.rep

    def w(i, j):
        return rep.gen[i - 1, i - 1] - rep.gen[j - 1, j - 1]

    (a1, b1), (a2, b2) = p1, p2
    scale = max(norm2(t.entries[p1]) * norm2(t.entries[p2]), 1e-300)
    if b1 == a2 or b2 == a1:
        s, m, tt = (a1, b1, b2) if b1 == a2 else (a2, b2, b1)
        if (s, tt) not in t.entries:
            return None
        pairs = [(s, m), (m, tt), (s, tt), (m, s)]
        th = _assign_thetas(sys, pairs)
        s_sm = _wpow_scalar(sys, (m, s), th[(m, s)], hbar)      # (u_s - u_m)^hbar
        s_mt = _wpow_scalar(sys, (m, tt), th[(m, tt)], hbar)    # (u_t - u_m)^hbar
        s_st = _wpow_scalar(sys, (s, tt), th[(s, tt)], hbar)    # (u_t - u_s)^hbar
        lhs = (
            (s_sm / s_st) * t.entries[(s, m)] @ t.entries[(m, tt)]
            - (s_mt / s_st) * t.entries[(m, tt)] @ t.entries[(s, m)]
        ) * (2j * np.pi) / coef
        pref = (
            _wpow_weight(sys, (s, m), th[(s, m)], w(s, m), hbar)
            @ _wpow_weight(sys, (m, tt), th[(m, tt)], w(m, tt), hbar)
            @ _wpow_weight(sys, (s, tt), th[(s, tt)], -w(s, tt), hbar)
        )
        rhs = -pref @ t.entries[(s, tt)]
        return {
            "case": "triangle-chain",
            "tuple": ((s, m), (m, tt)),
            "residual": float(norm2(lhs - rhs) / scale),
        }
    if a1 == a2:
        m = a1
        s, tt = b1, b2
        pairs = [(m, s), (m, tt), (s, m)]
        th = _assign_thetas(sys, pairs)
        num = _wpow_scalar(sys, (s, m), th[(s, m)], hbar)       # (u_m - u_s)^hbar
        den = _wpow_scalar(sys, (m, tt), th[(m, tt)], hbar)     # (u_t - u_m)^hbar
        lhs = (
            t.entries[(m, s)] @ t.entries[(m, tt)]
            - (num / den) * t.entries[(m, tt)] @ t.entries[(m, s)]
        )
        return {
            "case": "triangle-source",
            "tuple": (p1, p2),
            "residual": float(norm2(lhs) / scale),
        }
    if b1 == b2:
        m = b1
        s, tt = a1, a2
        pairs = [(s, m), (tt, m), (m, tt)]
        th = _assign_thetas(sys, pairs)
        num = _wpow_scalar(sys, (s, m), th[(s, m)], hbar)       # (u_m - u_s)^hbar
        den = _wpow_scalar(sys, (m, tt), th[(m, tt)], hbar)     # (u_t - u_m)^hbar
        lhs = (
            t.entries[(s, m)] @ t.entries[(tt, m)]
            - (num / den) * t.entries[(tt, m)] @ t.entries[(s, m)]
        )
        return {
            "case": "triangle-target",
            "tuple": (p1, p2),
            "residual": float(norm2(lhs) / scale),
        }
    return None
