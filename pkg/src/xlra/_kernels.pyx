# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; see ``_kernels_py`` for the reference semantics."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def voronoi_label(dims, seeds, elongation):
    cdef Py_ssize_t ndim = len(dims)
    cdef double[:, ::1] s = np.ascontiguousarray(seeds, dtype=np.float64)
    cdef double[::1] e = np.ascontiguousarray(elongation, dtype=np.float64)
    cdef Py_ssize_t n0 = dims[0], n1 = dims[1]
    cdef Py_ssize_t n2 = dims[2] if ndim == 3 else 1
    cdef Py_ssize_t ng = s.shape[0]
    out = np.zeros(n0 * n1 * n2, dtype=np.int64)
    cdef long long[::1] lab = out
    cdef Py_ssize_t i, j, k, g, c = 0
    cdef double x0, x1, x2, dx, d2, best
    cdef double L0 = n0, L1 = n1, L2 = n2
    cdef long long arg
    for i in range(n0):
        x0 = i + 0.5
        for j in range(n1):
            x1 = j + 0.5
            for k in range(n2):
                x2 = k + 0.5
                best = 1e300
                arg = 0
                for g in range(ng):
                    dx = x0 - s[g, 0]
                    dx = dx - L0 * floor(dx / L0 + 0.5)
                    dx = dx / e[0]
                    d2 = dx * dx
                    dx = x1 - s[g, 1]
                    dx = dx - L1 * floor(dx / L1 + 0.5)
                    dx = dx / e[1]
                    d2 = d2 + dx * dx
                    if ndim == 3:
                        dx = x2 - s[g, 2]
                        dx = dx - L2 * floor(dx / L2 + 0.5)
                        dx = dx / e[2]
                        d2 = d2 + dx * dx
                    if d2 < best:
                        best = d2
                        arg = g
                lab[c] = arg
                c += 1
    return out.reshape(tuple(dims))


def cell_matvec(C, v):
    cdef double[:, :, ::1] c = np.ascontiguousarray(C, dtype=np.float64)
    cdef double[:, ::1] x = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t nv = c.shape[0], n = c.shape[2]
    out = np.zeros((nv, n), dtype=np.float64)
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j, p
    for i in range(nv):
        for j in range(nv):
            for p in range(n):
                y[i, p] += c[i, j, p] * x[j, p]
    return out


def green_update(out_hat, pol_hat, xi, nmat, bint replace):
    cdef double complex[:, ::1] out = out_hat
    cdef double complex[:, ::1] pol = np.ascontiguousarray(pol_hat, dtype=np.complex128)
    cdef double[:, ::1] q = np.ascontiguousarray(xi, dtype=np.float64)
    cdef double[:, :, ::1] N = np.ascontiguousarray(nmat, dtype=np.float64)
    cdef Py_ssize_t d = q.shape[0], nf = q.shape[1]
    cdef Py_ssize_t f
    cdef double div2 = 0.0
    cdef double complex v0, v1, v2, w0, w1, w2
    cdef double q0, q1, q2
    if d == 2:
        for f in range(nf):
            q0 = q[0, f]
            q1 = q[1, f]
            # s = [[p0, p2], [p2, p1]]
            v0 = pol[0, f] * q0 + pol[2, f] * q1
            v1 = pol[2, f] * q0 + pol[1, f] * q1
            div2 += v0.real * v0.real + v0.imag * v0.imag + v1.real * v1.real + v1.imag * v1.imag
            w0 = N[0, 0, f] * v0 + N[0, 1, f] * v1
            w1 = N[1, 0, f] * v0 + N[1, 1, f] * v1
            if replace:
                out[0, f] = 0.0
                out[1, f] = 0.0
                out[2, f] = 0.0
            out[0, f] -= q0 * w0
            out[1, f] -= q1 * w1
            out[2, f] -= q1 * w0 + q0 * w1
    else:
        for f in range(nf):
            q0 = q[0, f]
            q1 = q[1, f]
            q2 = q[2, f]
            # s = [[p0, p5, p4], [p5, p1, p3], [p4, p3, p2]]
            v0 = pol[0, f] * q0 + pol[5, f] * q1 + pol[4, f] * q2
            v1 = pol[5, f] * q0 + pol[1, f] * q1 + pol[3, f] * q2
            v2 = pol[4, f] * q0 + pol[3, f] * q1 + pol[2, f] * q2
            div2 += (v0.real * v0.real + v0.imag * v0.imag + v1.real * v1.real
                     + v1.imag * v1.imag + v2.real * v2.real + v2.imag * v2.imag)
            w0 = N[0, 0, f] * v0 + N[0, 1, f] * v1 + N[0, 2, f] * v2
            w1 = N[1, 0, f] * v0 + N[1, 1, f] * v1 + N[1, 2, f] * v2
            w2 = N[2, 0, f] * v0 + N[2, 1, f] * v1 + N[2, 2, f] * v2
            if replace:
                out[0, f] = 0.0
                out[1, f] = 0.0
                out[2, f] = 0.0
                out[3, f] = 0.0
                out[4, f] = 0.0
                out[5, f] = 0.0
            out[0, f] -= q0 * w0
            out[1, f] -= q1 * w1
            out[2, f] -= q2 * w2
            out[3, f] -= q2 * w1 + q1 * w2
            out[4, f] -= q2 * w0 + q0 * w2
            out[5, f] -= q1 * w0 + q0 * w1
    return div2
