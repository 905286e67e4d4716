# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled segment/building crossing kernel.

Same contract as :func:`coexsim._crossings_py.segment_crossings`.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, INFINITY

cnp.import_array()


cdef inline long _planes_between(double a, double b, double origin,
                                 double cell, long ncell) nogil:
    cdef double lo, hi
    cdef long kmin, kmax
    if a < b:
        lo = (a - origin) / cell
        hi = (b - origin) / cell
    else:
        lo = (b - origin) / cell
        hi = (a - origin) / cell
    kmin = <long>floor(lo) + 1
    kmax = <long>ceil(hi) - 1
    if kmin < 1:
        kmin = 1
    if kmax > ncell - 1:
        kmax = ncell - 1
    if kmax < kmin:
        return 0
    return kmax - kmin + 1


cdef inline bint _clip(const double* p, const double* d, const double* box,
                       int naxes, double* t_in, double* t_out) nogil:
    cdef double lo, hi, ta, tb, tmin, tmax
    cdef int a
    t_in[0] = -INFINITY
    t_out[0] = INFINITY
    for a in range(naxes):
        lo = box[2 * a]
        hi = box[2 * a + 1]
        if d[a] == 0.0:
            if p[a] > lo and p[a] < hi:
                continue
            t_in[0] = INFINITY
            t_out[0] = -INFINITY
            return False
        ta = (lo - p[a]) / d[a]
        tb = (hi - p[a]) / d[a]
        if ta < tb:
            tmin = ta
            tmax = tb
        else:
            tmin = tb
            tmax = ta
        if tmin > t_in[0]:
            t_in[0] = tmin
        if tmax < t_out[0]:
            t_out[0] = tmax
    return True


def segment_crossings(p0, p1, b0, b1, boxes, cells):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] P0 = np.ascontiguousarray(p0, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] P1 = np.ascontiguousarray(p1, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] B0 = np.ascontiguousarray(b0, dtype=np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] B1 = np.ascontiguousarray(b1, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] BOX = np.ascontiguousarray(
        np.asarray(boxes, dtype=np.float64).reshape(-1, 6))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] CELL = np.ascontiguousarray(
        np.asarray(cells, dtype=np.float64).reshape(-1, 3))
    cdef Py_ssize_t n = P0.shape[0]
    cdef Py_ssize_t nb = BOX.shape[0]

    cdef cnp.ndarray[cnp.int64_t, ndim=1] walls = np.zeros(n, np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] floors = np.zeros(n, np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] external = np.zeros(n, np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] walls0 = np.zeros(n, np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] floors0 = np.zeros(n, np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] walls1 = np.zeros(n, np.int64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] floors1 = np.zeros(n, np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t_exit = np.zeros(n, np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t_entry = np.zeros(n, np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] occluded = np.zeros(n, np.uint8)

    cdef cnp.ndarray[cnp.int64_t, ndim=2] NC = np.zeros((nb, 3), np.int64)
    cdef Py_ssize_t i, k
    for k in range(nb):
        NC[k, 0] = <long>(((BOX[k, 1] - BOX[k, 0]) / CELL[k, 0]) + 0.5)
        NC[k, 1] = <long>(((BOX[k, 3] - BOX[k, 2]) / CELL[k, 1]) + 0.5)
        NC[k, 2] = <long>(((BOX[k, 5] - BOX[k, 4]) / CELL[k, 2]) + 0.5)

    cdef double p[3]
    cdef double d[3]
    cdef double bx[6]
    cdef double t_in, t_out, ca, cb, xa, xb, ya, yb, za, zb
    cdef long w, f, e
    cdef long bi0, bi1
    cdef double lo[3]
    cdef double hi[3]
    cdef int a

    with nogil:
        for i in range(n):
            p[0] = P0[i, 0]; p[1] = P0[i, 1]; p[2] = P0[i, 2]
            d[0] = P1[i, 0] - p[0]; d[1] = P1[i, 1] - p[1]; d[2] = P1[i, 2] - p[2]
            bi0 = B0[i]
            bi1 = B1[i]
            t_exit[i] = 1.0 if bi0 >= 0 else 0.0
            t_entry[i] = 0.0 if bi1 >= 0 else 1.0
            for a in range(3):
                lo[a] = p[a] if d[a] >= 0.0 else p[a] + d[a]
                hi[a] = p[a] + d[a] if d[a] >= 0.0 else p[a]
            for k in range(nb):
                # cheap rejection on bounding boxes
                if (hi[0] < BOX[k, 0] or lo[0] > BOX[k, 1]
                        or hi[1] < BOX[k, 2] or lo[1] > BOX[k, 3]):
                    continue
                bx[0] = BOX[k, 0]; bx[1] = BOX[k, 1]; bx[2] = BOX[k, 2]
                bx[3] = BOX[k, 3]; bx[4] = BOX[k, 4]; bx[5] = BOX[k, 5]
                _clip(p, d, bx, 3, &t_in, &t_out)
                ca = t_in if t_in > 0.0 else 0.0
                cb = t_out if t_out < 1.0 else 1.0
                if ca < cb:
                    xa = p[0] + ca * d[0]; xb = p[0] + cb * d[0]
                    ya = p[1] + ca * d[1]; yb = p[1] + cb * d[1]
                    za = p[2] + ca * d[2]; zb = p[2] + cb * d[2]
                    w = (_planes_between(xa, xb, bx[0], CELL[k, 0], NC[k, 0])
                         + _planes_between(ya, yb, bx[2], CELL[k, 1], NC[k, 1]))
                    f = _planes_between(za, zb, bx[4], CELL[k, 2], NC[k, 2])
                    e = 0
                    if t_in > 0.0:
                        e += 1
                    if t_out < 1.0:
                        e += 1
                    walls[i] += w
                    floors[i] += f
                    external[i] += e
                    if bi0 == k:
                        walls0[i] = w
                        floors0[i] = f
                        t_exit[i] = cb
                    if bi1 == k:
                        walls1[i] = w
                        floors1[i] = f
                        if bi0 != k:
                            t_entry[i] = ca
                if bi0 != k and bi1 != k and occluded[i] == 0:
                    _clip(p, d, bx, 2, &t_in, &t_out)
                    ca = t_in if t_in > 0.0 else 0.0
                    cb = t_out if t_out < 1.0 else 1.0
                    if ca < cb:
                        occluded[i] = 1

    return {
        "walls": walls, "floors": floors, "external": external,
        "walls0": walls0, "floors0": floors0, "walls1": walls1, "floors1": floors1,
        "t_exit": t_exit, "t_entry": t_entry, "occluded": occluded.astype(bool),
    }
