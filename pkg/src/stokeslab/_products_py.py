"""Pure-numpy product-iteration kernels.

These are the hot inner loops of the package: ordered products of the
recursive matrices L_k evaluated under the right/left operator calculus
(z replaced by shift actions of diagonal blocks), advanced step by step
with factorial rescaling so the iterate stays O(1).

A compiled Cython twin (stokeslab._kernels) implements the same five
entry points; stokeslab._products selects whichever is available.

State conventions (all arrays complex128, C-contiguous):

* plus column engine  - state (nh, nt), right eigenbasis of A_tt,
  one step applies (c/m) L_t(m - A_tt^r).
* minus row engine    - state (ns, nh), left eigenbasis of A_ss,
  one step applies (c/m) x the left-action factor L_s(-m + z)|_{z=-A_ss^l}.
* inverse column engine - state (nh, ncols), original basis,
  one step applies (m/c) [L_s^{-1}](-m - A^r) via the full-matrix
  resolvent embedding (the k-hat block of (zI+A)^{-1}).
* numeric plus/minus engines - state (nh, nh), literal matrix factors
  (kappa/m) L_k(+-m + z) at a numeric spectral parameter z.
"""

from __future__ import annotations

import numpy as np

IMPLEMENTATION = "pure"


def run_plus(state, m0, m1, dv, dt, ahh, bhk, bkh, c):
    """Advance the plus column iterate through factor indices [m0, m1)."""
    x = state
    for m in range(m0, m1):
        s = bkh @ x
        s /= m + dt[:, None] - dt[None, :]
        x = m * x - x * dt[None, :] + ahh @ x - bhk @ s
        x *= dv[:, None]
        x *= c / m
    return x


def run_minus(state, m0, m1, dvc, ds, ahh, bhs, bsh, c):
    """Advance the minus row iterate through factor indices [m0, m1).

    The diagonal prefactor of L_s is its leftmost factor, so it contracts
    with the row before the bracket.
    """
    g = state
    for m in range(m0, m1):
        g = g * dvc[None, :]
        v = g @ bhs
        v /= -m - ds[:, None] + ds[None, :]
        g = -m * g - ds[:, None] * g + g @ ahh - v @ bsh
        g *= c / m
    return g


def run_inv(state, m0, m1, dvinv, dfull, vfull, vfull_inv, hrows, c):
    """Advance the inverse-product column iterate through [m0, m1).

    ``hrows`` are the row indices of the k-hat block inside the full matrix;
    ``c`` is the per-step scale (m/c applied each step), or 0 for unscaled.
    """
    x = state
    n = vfull.shape[0]
    ncols = x.shape[1]
    for m in range(m0, m1):
        y = np.zeros((n, ncols), dtype=complex)
        y[hrows] = dvinv[:, None] * x
        t = vfull_inv @ y @ vfull
        t /= -m + dfull[:, None] - dfull[None, :]
        z = vfull @ t @ vfull_inv
        x = z[hrows]
        if c != 0:
            x = x * (m / c)
    return x


def run_diff_plus(state, m0, m1, z, dv, dk, ahh, ck, ek, kappa):
    """Left-multiply by the scaled literal factors (kappa/m) L_k(m+z)."""
    mmat = state
    for m in range(m0, m1):
        t = ek @ mmat
        t /= (m + z + dk)[:, None]
        mmat = (m + z) * mmat + ahh @ mmat - ck @ t
        mmat *= dv[:, None]
        mmat *= kappa / m
    return mmat


def run_diff_minus(state, m0, m1, z, dv, dk, ahh, ck, ek, kappa):
    """Right-multiply by the scaled literal factors (kappa/m) L_k(-m+z)."""
    mmat = state
    nh = ahh.shape[0]
    eye = np.eye(nh, dtype=complex)
    for m in range(m0, m1):
        w = -m + z
        lk = dv[:, None] * (w * eye + ahh - ck @ ((1.0 / (w + dk))[:, None] * ek))
        mmat = (kappa / m) * (mmat @ lk)
    return mmat
