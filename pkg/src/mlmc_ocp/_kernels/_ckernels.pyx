# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled assembly kernels.  Signatures mirror ``_pykernels``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def scatter_add(double[::1] data, cnp.int64_t[:, ::1] scatter, double[:, ::1] values):
    cdef Py_ssize_t e, k, t
    cdef Py_ssize_t ne = scatter.shape[0], nk = scatter.shape[1]
    with nogil:
        for e in range(ne):
            for k in range(nk):
                t = scatter[e, k]
                if t >= 0:
                    data[t] += values[e, k]


def clamped_control_terms(double[:, ::1] pe, double[::1] area, double[:, ::1] lam,
                          double[::1] w, double alpha, double ua, double ub):
    cdef Py_ssize_t ne = pe.shape[0], nq = lam.shape[0]
    cdef Py_ssize_t e, q, i, j
    cdef double g, wa, bound, u
    cdef int inact

    bA_arr = np.zeros((ne, 3))
    MI_arr = np.zeros((ne, 9))
    usq_arr = np.zeros(ne)
    state_arr = np.zeros((ne, nq), dtype=np.int8)
    cdef double[:, ::1] bA = bA_arr
    cdef double[:, ::1] MI = MI_arr
    cdef double[::1] usq = usq_arr
    cdef cnp.int8_t[:, ::1] state = state_arr

    with nogil:
        for e in range(ne):
            for q in range(nq):
                g = -(pe[e, 0] * lam[q, 0] + pe[e, 1] * lam[q, 1] + pe[e, 2] * lam[q, 2]) / alpha
                wa = w[q] * area[e]
                inact = 0
                if g < ua:
                    u = ua
                    bound = ua
                    state[e, q] = -1
                elif g > ub:
                    u = ub
                    bound = ub
                    state[e, q] = 1
                else:
                    u = g
                    bound = 0.0
                    inact = 1
                usq[e] += wa * u * u
                if inact:
                    for i in range(3):
                        for j in range(3):
                            MI[e, 3 * i + j] += wa * lam[q, i] * lam[q, j]
                else:
                    for i in range(3):
                        bA[e, i] += wa * bound * lam[q, i]
    return bA_arr, MI_arr, usq_arr, state_arr
