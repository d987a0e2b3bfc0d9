# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the product-iteration kernels in _products_py.

Same five entry points, same state conventions; the matrices involved are
small (block sizes at desk scale), so plain triple loops beat BLAS-call
overhead here.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

IMPLEMENTATION = "cython"

ctypedef double complex zdouble


cdef void _matmul(zdouble[:, ::1] a, zdouble[:, ::1] b, zdouble[:, ::1] out) noexcept:
    cdef Py_ssize_t i, j, k, n = a.shape[0], m = b.shape[1], kk = a.shape[1]
    cdef zdouble acc
    for i in range(n):
        for j in range(m):
            acc = 0
            for k in range(kk):
                acc = acc + a[i, k] * b[k, j]
            out[i, j] = acc


def run_plus(state, Py_ssize_t m0, Py_ssize_t m1, dv, dt, ahh, bhk, bkh, c):
    cdef zdouble[:, ::1] x = np.ascontiguousarray(state, dtype=complex)
    cdef zdouble[::1] dvv = np.ascontiguousarray(dv, dtype=complex)
    cdef zdouble[::1] dtv = np.ascontiguousarray(dt, dtype=complex)
    cdef zdouble[:, ::1] ahh_ = np.ascontiguousarray(ahh, dtype=complex)
    cdef zdouble[:, ::1] bhk_ = np.ascontiguousarray(bhk, dtype=complex)
    cdef zdouble[:, ::1] bkh_ = np.ascontiguousarray(bkh, dtype=complex)
    cdef zdouble cc = c
    cdef Py_ssize_t nh = x.shape[0], nt = x.shape[1]
    cdef zdouble[:, ::1] s = np.empty((nt, nt), dtype=complex)
    cdef zdouble[:, ::1] t1 = np.empty((nh, nt), dtype=complex)
    cdef zdouble[:, ::1] t2 = np.empty((nh, nt), dtype=complex)
    cdef zdouble[:, ::1] xn = np.empty((nh, nt), dtype=complex)
    cdef Py_ssize_t m, i, j
    cdef zdouble scale
    for m in range(m0, m1):
        _matmul(bkh_, x, s)
        for i in range(nt):
            for j in range(nt):
                s[i, j] = s[i, j] / (<zdouble> m + dtv[i] - dtv[j])
        _matmul(ahh_, x, t1)
        _matmul(bhk_, s, t2)
        scale = cc / <double> m
        for i in range(nh):
            for j in range(nt):
                xn[i, j] = ((<zdouble> m - dtv[j]) * x[i, j] + t1[i, j] - t2[i, j]) \
                    * dvv[i] * scale
        x[:, :] = xn
    return np.asarray(x)


def run_minus(state, Py_ssize_t m0, Py_ssize_t m1, dvc, ds, ahh, bhs, bsh, c):
    cdef zdouble[:, ::1] g = np.ascontiguousarray(state, dtype=complex)
    cdef zdouble[::1] dvcv = np.ascontiguousarray(dvc, dtype=complex)
    cdef zdouble[::1] dsv = np.ascontiguousarray(ds, dtype=complex)
    cdef zdouble[:, ::1] ahh_ = np.ascontiguousarray(ahh, dtype=complex)
    cdef zdouble[:, ::1] bhs_ = np.ascontiguousarray(bhs, dtype=complex)
    cdef zdouble[:, ::1] bsh_ = np.ascontiguousarray(bsh, dtype=complex)
    cdef zdouble cc = c
    cdef Py_ssize_t ns = g.shape[0], nh = g.shape[1]
    cdef zdouble[:, ::1] v = np.empty((ns, ns), dtype=complex)
    cdef zdouble[:, ::1] t1 = np.empty((ns, nh), dtype=complex)
    cdef zdouble[:, ::1] t2 = np.empty((ns, nh), dtype=complex)
    cdef zdouble[:, ::1] gn = np.empty((ns, nh), dtype=complex)
    cdef Py_ssize_t m, i, j
    cdef zdouble scale
    for m in range(m0, m1):
        # the diagonal prefactor of L_s contracts with the row first
        for i in range(ns):
            for j in range(nh):
                g[i, j] = g[i, j] * dvcv[j]
        _matmul(g, bhs_, v)
        for i in range(ns):
            for j in range(ns):
                v[i, j] = v[i, j] / (-(<zdouble> m) - dsv[i] + dsv[j])
        _matmul(g, ahh_, t1)
        _matmul(v, bsh_, t2)
        scale = cc / <double> m
        for i in range(ns):
            for j in range(nh):
                gn[i, j] = ((-(<zdouble> m) - dsv[i]) * g[i, j] + t1[i, j] - t2[i, j]) \
                    * scale
        g[:, :] = gn
    return np.asarray(g)


def run_inv(state, Py_ssize_t m0, Py_ssize_t m1, dvinv, dfull, vfull, vfull_inv,
            hrows, c):
    # Column space must match the eigenbasis dimension (n columns).
    cdef zdouble[:, ::1] x = np.ascontiguousarray(state, dtype=complex)
    cdef zdouble[::1] dvv = np.ascontiguousarray(dvinv, dtype=complex)
    cdef zdouble[::1] dd = np.ascontiguousarray(dfull, dtype=complex)
    cdef zdouble[:, ::1] vf = np.ascontiguousarray(vfull, dtype=complex)
    cdef zdouble[:, ::1] vfi = np.ascontiguousarray(vfull_inv, dtype=complex)
    cdef Py_ssize_t[::1] hr = np.ascontiguousarray(hrows, dtype=np.intp)
    cdef zdouble cc = c
    cdef Py_ssize_t nh = x.shape[0], n = vf.shape[0]
    if x.shape[1] != n:
        raise ValueError("run_inv requires ncols == n")
    cdef zdouble[:, ::1] y = np.empty((n, n), dtype=complex)
    cdef zdouble[:, ::1] t = np.empty((n, n), dtype=complex)
    cdef zdouble[:, ::1] w = np.empty((n, n), dtype=complex)
    cdef zdouble[:, ::1] w2 = np.empty((n, n), dtype=complex)
    cdef Py_ssize_t m, i, j
    cdef zdouble scale
    cdef bint scaled = (cc != 0)
    for m in range(m0, m1):
        for i in range(n):
            for j in range(n):
                y[i, j] = 0
        for i in range(nh):
            for j in range(n):
                y[hr[i], j] = dvv[i] * x[i, j]
        _matmul(vfi, y, t)
        _matmul(t, vf, w)
        for i in range(n):
            for j in range(n):
                w[i, j] = w[i, j] / (-(<zdouble> m) + dd[i] - dd[j])
        _matmul(w, vfi, w2)
        _matmul(vf, w2, t)
        if scaled:
            scale = (<zdouble> m) / cc
        else:
            scale = 1
        for i in range(nh):
            for j in range(n):
                x[i, j] = t[hr[i], j] * scale
    return np.asarray(x)


def run_diff_plus(state, Py_ssize_t m0, Py_ssize_t m1, z, dv, dk, ahh, ck, ek, kappa):
    cdef zdouble[:, ::1] mm = np.ascontiguousarray(state, dtype=complex)
    cdef zdouble zz = z, kap = kappa
    cdef zdouble[::1] dvv = np.ascontiguousarray(dv, dtype=complex)
    cdef zdouble[::1] dkv = np.ascontiguousarray(dk, dtype=complex)
    cdef zdouble[:, ::1] ahh_ = np.ascontiguousarray(ahh, dtype=complex)
    cdef zdouble[:, ::1] ck_ = np.ascontiguousarray(ck, dtype=complex)
    cdef zdouble[:, ::1] ek_ = np.ascontiguousarray(ek, dtype=complex)
    cdef Py_ssize_t nh = mm.shape[0], nk = dkv.shape[0]
    cdef zdouble[:, ::1] t = np.empty((nk, nh), dtype=complex)
    cdef zdouble[:, ::1] t1 = np.empty((nh, nh), dtype=complex)
    cdef zdouble[:, ::1] t2 = np.empty((nh, nh), dtype=complex)
    cdef Py_ssize_t m, i, j
    cdef zdouble w, scale
    for m in range(m0, m1):
        w = <zdouble> m + zz
        _matmul(ek_, mm, t)
        for i in range(nk):
            for j in range(nh):
                t[i, j] = t[i, j] / (w + dkv[i])
        _matmul(ahh_, mm, t1)
        _matmul(ck_, t, t2)
        scale = kap / <double> m
        for i in range(nh):
            for j in range(nh):
                mm[i, j] = (w * mm[i, j] + t1[i, j] - t2[i, j]) * dvv[i] * scale
    return np.asarray(mm)


def run_diff_minus(state, Py_ssize_t m0, Py_ssize_t m1, z, dv, dk, ahh, ck, ek, kappa):
    cdef zdouble[:, ::1] mm = np.ascontiguousarray(state, dtype=complex)
    cdef zdouble zz = z, kap = kappa
    cdef zdouble[::1] dvv = np.ascontiguousarray(dv, dtype=complex)
    cdef zdouble[::1] dkv = np.ascontiguousarray(dk, dtype=complex)
    cdef zdouble[:, ::1] ahh_ = np.ascontiguousarray(ahh, dtype=complex)
    cdef zdouble[:, ::1] ck_ = np.ascontiguousarray(ck, dtype=complex)
    cdef zdouble[:, ::1] ek_ = np.ascontiguousarray(ek, dtype=complex)
    cdef Py_ssize_t nh = mm.shape[0], nk = dkv.shape[0]
    cdef zdouble[:, ::1] res = np.empty((nk, nh), dtype=complex)
    cdef zdouble[:, ::1] lk = np.empty((nh, nh), dtype=complex)
    cdef zdouble[:, ::1] t2 = np.empty((nh, nh), dtype=complex)
    cdef zdouble[:, ::1] mn = np.empty((nh, nh), dtype=complex)
    cdef Py_ssize_t m, i, j
    cdef zdouble w, scale
    for m in range(m0, m1):
        w = -(<zdouble> m) + zz
        for i in range(nk):
            for j in range(nh):
                res[i, j] = ek_[i, j] / (w + dkv[i])
        _matmul(ck_, res, t2)
        for i in range(nh):
            for j in range(nh):
                lk[i, j] = ahh_[i, j] - t2[i, j]
                if i == j:
                    lk[i, j] = lk[i, j] + w
                lk[i, j] = lk[i, j] * dvv[i]
        _matmul(mm, lk, mn)
        scale = kap / <double> m
        for i in range(nh):
            for j in range(nh):
                mm[i, j] = mn[i, j] * scale
    return np.asarray(mm)
