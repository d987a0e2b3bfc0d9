"""The matrices T_k(lambda) and the Yangian RTT relation check.

T_k(lambda) is a (nu-1) x (nu-1) matrix with End(V) entries, indexed by
{1, ..., nu} \\ {k}:

    T_k(lambda)_{ij} = ( (lambda + hbar (e_kk + 1)) d_ij - hbar e_ij
                         - hbar^2 e_ik e_kj / lambda ) / (u_k - u_i).

Its integer evaluations are exactly the factors of the quantum coefficient
recursion, and it satisfies the RTT generating relation of Y(gl_{nu-1})
in every representation; rtt_residual measures that identity directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EqualLambdas, ValidationError, ZeroHbar, ZeroLambda
from .hypersys import BlockedSystem
from .numkit import norm2

__all__ = ["TkMatrix", "build_Tk", "rtt_residual", "tk_commutant_residual"]


@dataclass(frozen=True)
class TkMatrix:
    """T_k(lambda) in a representation, stored as one dense matrix.

    ``mat`` has shape ((nu-1) dimV, (nu-1) dimV); ``index_map`` lists the
    1-based block labels {1..nu} minus k in order.
    """

    k: int
    lam: complex
    mat: np.ndarray
    index_map: tuple[int, ...]
    dimV: int

    def block(self, i: int, j: int) -> np.ndarray:
        """Entry T_k(lambda)_{ij} for 1-based labels i, j != k."""
        a = self.index_map.index(i)
        b = self.index_map.index(j)
        m = self.dimV
        return self.mat[a * m : (a + 1) * m, b * m : (b + 1) * m]


def build_Tk(sys: BlockedSystem, k: int, lam: complex) -> TkMatrix:
    """Evaluate T_k(lambda) for a quantum system (1-based k)."""
    if not sys.is_quantum:
        raise ValidationError("build_Tk needs a quantum system")
    lam = complex(lam)
    if lam == 0:
        raise ZeroLambda("T_k has a 1/lambda term")
    if not 1 <= k <= sys.nu:
        raise ValidationError(f"k must be in 1..{sys.nu}")
    rep, hbar = sys.rep, sys.hbar
    m = rep.dimV
    kk = k - 1
    others = [j for j in range(sys.nu) if j != kk]
    eye = np.eye(m)
    ekk = rep.gen[kk, kk]
    mat = np.zeros((len(others) * m, len(others) * m), dtype=complex)
    for a, i in enumerate(others):
        pref = 1.0 / (sys.u[kk] - sys.u[i])
        for b, j in enumerate(others):
            blk = -hbar * rep.gen[i, j] - (hbar**2 / lam) * (rep.gen[i, kk] @ rep.gen[kk, j])
            if i == j:
                blk = blk + lam * eye + hbar * (ekk + eye)
            mat[a * m : (a + 1) * m, b * m : (b + 1) * m] = pref * blk
    return TkMatrix(
        k=k, lam=lam, mat=mat, index_map=tuple(j + 1 for j in others), dimV=m
    )


def tk_commutant_residual(t: TkMatrix, sys: BlockedSystem) -> float:
    """|| [T_k(lambda), diag(e_kk + 1, ..., e_kk + 1)] ||, an invariant of T_k."""
    rep = sys.rep
    m = rep.dimV
    blocks = len(t.index_map)
    d = np.kron(np.eye(blocks), rep.gen[t.k - 1, t.k - 1] + np.eye(m))
    return norm2(t.mat @ d - d @ t.mat)


def rtt_residual(sys: BlockedSystem, k: int, lam1: complex, lam2: complex) -> float:
    """Max residual of the RTT relation over all index quadruples.

    Checks (1/hbar) [T(l1)_{i1 i0}, T(l2)_{j1 j0}] =
    ( T(l2)_{j1 i0} T(l1)_{i1 j0} - T(l1)_{j1 i0} T(l2)_{i1 j0} ) / (l1 - l2)
    in the spectral norm on End(V).
    """
    lam1, lam2 = complex(lam1), complex(lam2)
    if lam1 == 0 or lam2 == 0:
        raise ZeroLambda("spectral parameters must be nonzero")
    if lam1 == lam2:
        raise EqualLambdas("RTT check needs distinct spectral parameters")
    if not sys.hbar:
        raise ZeroHbar("RTT normalization divides by hbar")
    t1 = build_Tk(sys, k, lam1)
    t2 = build_Tk(sys, k, lam2)
    labels = t1.index_map
    worst = 0.0
    for i0 in labels:
        for i1 in labels:
            for j0 in labels:
                for j1 in labels:
                    a1, b1 = t1.block(i1, i0), t2.block(j1, j0)
                    lhs = (a1 @ b1 - b1 @ a1) / sys.hbar
                    rhs = (
                        t2.block(j1, i0) @ t1.block(i1, j0)
                        - t1.block(j1, i0) @ t2.block(i1, j0)
                    ) / (lam1 - lam2)
                    worst = max(worst, norm2(lhs - rhs))
    return worst
