"""Finite-dimensional gl_nu representations as explicit generator matrices.

A representation is stored as the 4-index array gen[i, j] = image of e_ij,
shape (nu, nu, dimV, dimV).  Constructors cover the defining representation,
tensor products (coproduct e -> e x 1 + 1 x e) and symmetric powers on the
monomial basis; arbitrary user-supplied generator grids are accepted and
validated against the commutation relations
[e_ij, e_kl] = delta_kj e_il - delta_li e_kj.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import RankMismatch, ValidationError
from .numkit import norm2

__all__ = [
    "Rep",
    "defining_rep",
    "tensor_rep",
    "sym_power_rep",
    "explicit_rep",
    "verify_gl_relations",
]

_WEIGHT_TOL = 1e-14


@dataclass(frozen=True)
class Rep:
    """A gl_nu module given by its generator matrices.

    weight_basis is True exactly when every gen[k, k] is diagonal (within
    1e-14), which lets downstream code replace matrix powers of e_kk by
    entrywise scalar powers.
    """

    nu: int
    dimV: int
    gen: np.ndarray

    @property
    def weight_basis(self) -> bool:
        off = 0.0
        for k in range(self.nu):
            g = self.gen[k, k]
            off = max(off, float(np.max(np.abs(g - np.diag(np.diag(g)))) if g.size else 0.0))
        return off <= _WEIGHT_TOL

    def weights(self, k: int) -> np.ndarray:
        """Diagonal of gen[k, k]; meaningful in a weight basis."""
        return np.diag(self.gen[k, k]).copy()


def _pack(nu: int, dimV: int, blocks) -> Rep:
    gen = np.zeros((nu, nu, dimV, dimV), dtype=complex)
    for i in range(nu):
        for j in range(nu):
            gen[i, j] = blocks[i][j]
    gen.setflags(write=False)
    return Rep(nu=nu, dimV=dimV, gen=gen)


def defining_rep(nu: int) -> Rep:
    """Standard representation on C^nu: e_ij -> elementary matrix E_ij."""
    if nu < 1:
        raise ValidationError("rank must be >= 1")
    gen = np.zeros((nu, nu, nu, nu), dtype=complex)
    for i in range(nu):
        for j in range(nu):
            gen[i, j, i, j] = 1.0
    gen.setflags(write=False)
    return Rep(nu=nu, dimV=nu, gen=gen)


def tensor_rep(r1: Rep, r2: Rep) -> Rep:
    """Tensor product module via the coproduct e -> e x 1 + 1 x e."""
    if r1.nu != r2.nu:
        raise RankMismatch(f"cannot tensor gl_{r1.nu} with gl_{r2.nu} modules")
    nu = r1.nu
    i1 = np.eye(r1.dimV)
    i2 = np.eye(r2.dimV)
    blocks = [
        [np.kron(r1.gen[i, j], i2) + np.kron(i1, r2.gen[i, j]) for j in range(nu)]
        for i in range(nu)
    ]
    return _pack(nu, r1.dimV * r2.dimV, blocks)


def sym_power_rep(nu: int, m: int) -> Rep:
    """Sym^m C^nu on the monomial basis x^alpha, |alpha| = m.

    e_ij acts as x_i d/dx_j: it maps x^alpha to alpha_j x^(alpha - e_j + e_i),
    so every e_kk is diagonal with the weights alpha_k.
    """
    if nu < 1 or m < 0:
        raise ValidationError("need rank >= 1 and power >= 0")
    basis: list[tuple[int, ...]] = []

    def build(prefix, remaining, slots):
        if slots == 1:
            basis.append(tuple(prefix) + (remaining,))
            return
        for c in range(remaining, -1, -1):
            build(prefix + [c], remaining - c, slots - 1)

    build([], m, nu)
    index = {alpha: a for a, alpha in enumerate(basis)}
    dim = comb(nu + m - 1, m)
    assert len(basis) == dim
    gen = np.zeros((nu, nu, dim, dim), dtype=complex)
    for a, alpha in enumerate(basis):
        for i in range(nu):
            for j in range(nu):
                if alpha[j] == 0:
                    continue
                target = list(alpha)
                target[j] -= 1
                target[i] += 1
                gen[i, j, index[tuple(target)], a] = alpha[j]
    gen.setflags(write=False)
    return Rep(nu=nu, dimV=dim, gen=gen)


def explicit_rep(nu: int, matrices, tol: float = 1e-10) -> Rep:
    """Wrap user-supplied generator matrices, validating the gl relations."""
    arr = np.asarray(matrices, dtype=complex)
    if arr.ndim != 4 or arr.shape[0] != nu or arr.shape[1] != nu or arr.shape[2] != arr.shape[3]:
        raise ValidationError(
            f"expected a nu x nu grid of square matrices, got shape {arr.shape}"
        )
    rep = _pack(nu, arr.shape[2], arr)
    resid = verify_gl_relations(rep)
    if resid > tol:
        raise ValidationError(f"gl relations violated: residual {resid:.3e} > {tol:.1e}")
    return rep


def verify_gl_relations(r: Rep) -> float:
    """Max over index quadruples of || [e_ij, e_kl] - d_kj e_il + d_li e_kj ||."""
    worst = 0.0
    g = r.gen
    for i in range(r.nu):
        for j in range(r.nu):
            for k in range(r.nu):
                for l in range(r.nu):
                    res = g[i, j] @ g[k, l] - g[k, l] @ g[i, j]
                    if k == j:
                        res = res - g[i, l]
                    if l == i:
                        res = res + g[k, j]
                    worst = max(worst, norm2(res))
    return worst
