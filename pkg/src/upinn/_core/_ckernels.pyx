# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled activation-jet kernels; same contract as ``_pykernels``.

The transcendental (tanh) is left to numpy, whose SIMD loop beats a scalar
libm call; the jet arithmetic around it is fused here into single passes.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline int _kind_code(str kind) except -1:
    if kind == "tanh":
        return 0
    if kind == "silu":
        return 1
    raise ValueError(f"unknown activation {kind!r}")


def act_jet_forward(double[:, :, ::1] z, str kind):
    cdef int code = _kind_code(kind)
    cdef Py_ssize_t K = z.shape[0], B = z.shape[1], W = z.shape[2]
    out_arr = np.empty((K, B, W), dtype=np.float64)
    d1_arr = np.empty((B, W), dtype=np.float64)
    z0_arr = np.asarray(z[0])
    if code == 0:
        np.tanh(z0_arr, out=out_arr[0])
    else:
        np.tanh(0.5 * z0_arr, out=d1_arr)
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] d1 = d1_arr
    cdef Py_ssize_t j, b, w
    cdef double z0, a0, s
    with nogil:
        for b in range(B):
            for w in range(W):
                if code == 0:
                    a0 = out[0, b, w]
                    d1[b, w] = 1.0 - a0 * a0
                else:
                    z0 = z[0, b, w]
                    s = 0.5 * (1.0 + d1[b, w])
                    out[0, b, w] = z0 * s
                    d1[b, w] = s * (1.0 + z0 * (1.0 - s))
        # tangent slices one at a time so every pass is contiguous
        for j in range(1, K):
            for b in range(B):
                for w in range(W):
                    out[j, b, w] = d1[b, w] * z[j, b, w]
    return out_arr


def act_jet_backward(double[:, :, ::1] z, double[:, :, ::1] a,
                     double[:, :, ::1] g, str kind):
    cdef int code = _kind_code(kind)
    cdef Py_ssize_t K = z.shape[0], B = z.shape[1], W = z.shape[2]
    out_arr = np.empty((K, B, W), dtype=np.float64)
    d1_arr = np.empty((B, W), dtype=np.float64)
    d2_arr = np.empty((B, W), dtype=np.float64)
    acc_arr = np.zeros((B, W), dtype=np.float64)
    if code == 1:
        np.tanh(0.5 * np.asarray(z[0]), out=d1_arr)
    cdef double[:, :, ::1] out = out_arr
    cdef double[:, ::1] d1 = d1_arr
    cdef double[:, ::1] d2 = d2_arr
    cdef double[:, ::1] acc = acc_arr
    cdef Py_ssize_t j, b, w
    cdef double z0, a0, s, sd
    with nogil:
        for b in range(B):
            for w in range(W):
                if code == 0:
                    a0 = a[0, b, w]
                    d1[b, w] = 1.0 - a0 * a0
                    d2[b, w] = -2.0 * a0 * d1[b, w]
                else:
                    z0 = z[0, b, w]
                    s = 0.5 * (1.0 + d1[b, w])
                    sd = s * (1.0 - s)
                    d1[b, w] = s + z0 * sd
                    d2[b, w] = sd * (2.0 + z0 * (1.0 - 2.0 * s))
        for j in range(1, K):
            for b in range(B):
                for w in range(W):
                    acc[b, w] += g[j, b, w] * z[j, b, w]
                    out[j, b, w] = g[j, b, w] * d1[b, w]
        for b in range(B):
            for w in range(W):
                out[0, b, w] = g[0, b, w] * d1[b, w] + d2[b, w] * acc[b, w]
    return out_arr
