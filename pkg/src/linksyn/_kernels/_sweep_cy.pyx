# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled trilateration sweep (accelerated backend).

Scalar twin of reference.py. Every arithmetic expression is written with the
same operand order and the same tolerances so results are bitwise-identical
to the numpy fallback; a mismatch here is a bug. The only behavioral
difference: this version returns at the first failing angle, leaving later
rows of the output unspecified (the reference leaves failed lanes
unspecified too, so the contract is the same).
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

DEF DEGENERATE_TOL = 1e-9
DEF COS_SLACK = 1e-12

STATUS_OK = 0
STATUS_BRANCH_DEFECT = 1
STATUS_DEGENERATE = 2

BACKEND_NAME = "cython"


def sweep(double[:, ::1] base, cnp.uint8_t[::1] fixed_mask, Py_ssize_t pivot,
          Py_ssize_t motor, double[::1] cos_t, double[::1] sin_t,
          long long[:, ::1] steps, double[::1] g1, double[::1] g2,
          double[::1] branch):
    """See reference.sweep for the contract."""
    cdef Py_ssize_t A = cos_t.shape[0]
    cdef Py_ssize_t N = base.shape[0]
    cdef Py_ssize_t S = steps.shape[0]

    out = np.empty((A, N, 2), dtype=np.float64)
    cdef double[:, :, ::1] pos = out

    cdef double px = base[pivot, 0]
    cdef double py = base[pivot, 1]
    cdef double cx = base[motor, 0] - px
    cdef double cy = base[motor, 1] - py
    cdef double lo = -1.0 - COS_SLACK
    cdef double hi = 1.0 + COS_SLACK

    cdef Py_ssize_t a, n, s, k, i, j
    cdef double ct, st, xi, yi, dx, dy, l2, length, g1s, g2s, g1sq, g2sq
    cdef double c, sphi, ux, uy, br

    for a in range(A):
        for n in range(N):
            if fixed_mask[n]:
                pos[a, n, 0] = base[n, 0]
                pos[a, n, 1] = base[n, 1]
        ct = cos_t[a]
        st = sin_t[a]
        pos[a, motor, 0] = px + (ct * cx - st * cy)
        pos[a, motor, 1] = py + (st * cx + ct * cy)

        for s in range(S):
            k = <Py_ssize_t> steps[s, 0]
            i = <Py_ssize_t> steps[s, 1]
            j = <Py_ssize_t> steps[s, 2]
            g1s = g1[s]
            g2s = g2[s]
            g1sq = g1s * g1s
            g2sq = g2s * g2s
            br = branch[s]

            xi = pos[a, i, 0]
            yi = pos[a, i, 1]
            dx = pos[a, j, 0] - xi
            dy = pos[a, j, 1] - yi
            l2 = dx * dx + dy * dy
            length = sqrt(l2)

            if length < DEGENERATE_TOL:
                return out, STATUS_DEGENERATE, s, a
            c = (l2 + g1sq - g2sq) / (2.0 * length * g1s)
            if not (c >= lo and c <= hi):
                return out, STATUS_BRANCH_DEFECT, s, a
            if c > 1.0:
                c = 1.0
            elif c < -1.0:
                c = -1.0
            sphi = br * sqrt(1.0 - c * c)
            ux = dx / length
            uy = dy / length
            pos[a, k, 0] = xi + g1s * (c * ux - sphi * uy)
            pos[a, k, 1] = yi + g1s * (sphi * ux + c * uy)

    return out, STATUS_OK, -1, -1
