# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled versions of the hot model kernels (see _kernels_py for contracts)."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "cython"


def lf_conv_forward(double[:, :, ::1] latent, double[:, ::1] taps, double[::1] bias):
    cdef Py_ssize_t B = latent.shape[0], K = latent.shape[1], T = latent.shape[2]
    cdef Py_ssize_t L = taps.shape[1], TO = T - L + 1
    cdef Py_ssize_t b, c, i, j
    cdef double acc
    out_arr = np.empty((B, K, TO), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    for b in range(B):
        for c in range(K):
            for i in range(TO):
                acc = bias[c]
                for j in range(L):
                    acc += latent[b, c, i + j] * taps[c, j]
                out[b, c, i] = acc
    return out_arr


def var_conv_forward(double[:, :, ::1] latent, double[:, :, ::1] kernels, double[::1] bias):
    cdef Py_ssize_t B = latent.shape[0], K = latent.shape[1], T = latent.shape[2]
    cdef Py_ssize_t L = kernels.shape[1], TO = T - L + 1
    cdef Py_ssize_t b, c, d, i, j
    cdef double acc
    out_arr = np.empty((B, K, TO), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    for b in range(B):
        for c in range(K):
            for i in range(TO):
                acc = bias[c]
                for d in range(K):
                    for j in range(L):
                        acc += latent[b, d, i + j] * kernels[c, j, d]
                out[b, c, i] = acc
    return out_arr


def lf_conv_backward(double[:, :, ::1] dpre, double[:, :, ::1] latent, double[:, ::1] taps):
    cdef Py_ssize_t B = latent.shape[0], K = latent.shape[1], T = latent.shape[2]
    cdef Py_ssize_t L = taps.shape[1], TO = T - L + 1
    cdef Py_ssize_t b, c, i, j
    cdef double g
    dlatent_arr = np.zeros((B, K, T), dtype=np.float64)
    dtaps_arr = np.zeros((K, L), dtype=np.float64)
    dbias_arr = np.zeros(K, dtype=np.float64)
    cdef double[:, :, ::1] dlatent = dlatent_arr
    cdef double[:, ::1] dtaps = dtaps_arr
    cdef double[::1] dbias = dbias_arr
    for b in range(B):
        for c in range(K):
            for i in range(TO):
                g = dpre[b, c, i]
                dbias[c] += g
                for j in range(L):
                    dtaps[c, j] += g * latent[b, c, i + j]
                    dlatent[b, c, i + j] += g * taps[c, j]
    return dlatent_arr, dtaps_arr, dbias_arr


def var_conv_backward(double[:, :, ::1] dpre, double[:, :, ::1] latent,
                      double[:, :, ::1] kernels):
    cdef Py_ssize_t B = latent.shape[0], K = latent.shape[1], T = latent.shape[2]
    cdef Py_ssize_t L = kernels.shape[1], TO = T - L + 1
    cdef Py_ssize_t b, c, d, i, j
    cdef double g
    dlatent_arr = np.zeros((B, K, T), dtype=np.float64)
    dkern_arr = np.zeros((K, L, K), dtype=np.float64)
    dbias_arr = np.zeros(K, dtype=np.float64)
    cdef double[:, :, ::1] dlatent = dlatent_arr
    cdef double[:, :, ::1] dkern = dkern_arr
    cdef double[::1] dbias = dbias_arr
    for b in range(B):
        for c in range(K):
            for i in range(TO):
                g = dpre[b, c, i]
                dbias[c] += g
                for d in range(K):
                    for j in range(L):
                        dkern[c, j, d] += g * latent[b, d, i + j]
                        dlatent[b, d, i + j] += g * kernels[c, j, d]
    return dlatent_arr, dkern_arr, dbias_arr


def maxpool_forward(double[:, :, ::1] x, Py_ssize_t factor, Py_ssize_t stride):
    cdef Py_ssize_t B = x.shape[0], K = x.shape[1], T = x.shape[2]
    cdef Py_ssize_t TP = (T - factor) // stride + 1
    cdef Py_ssize_t b, c, p, j, best
    cdef double v, m
    pooled_arr = np.empty((B, K, TP), dtype=np.float64)
    idx_arr = np.empty((B, K, TP), dtype=np.int64)
    cdef double[:, :, ::1] pooled = pooled_arr
    cdef cnp.int64_t[:, :, ::1] idx = idx_arr
    for b in range(B):
        for c in range(K):
            for p in range(TP):
                best = p * stride
                m = x[b, c, best]
                for j in range(1, factor):
                    v = x[b, c, p * stride + j]
                    if v > m:  # strict: first maximum wins on ties
                        m = v
                        best = p * stride + j
                pooled[b, c, p] = m
                idx[b, c, p] = best
    return pooled_arr, idx_arr


def maxpool_backward(double[:, :, ::1] dpooled, cnp.int64_t[:, :, ::1] idx, Py_ssize_t t_in):
    cdef Py_ssize_t B = dpooled.shape[0], K = dpooled.shape[1], TP = dpooled.shape[2]
    cdef Py_ssize_t b, c, p
    dx_arr = np.zeros((B, K, t_in), dtype=np.float64)
    cdef double[:, :, ::1] dx = dx_arr
    for b in range(B):
        for c in range(K):
            for p in range(TP):
                dx[b, c, idx[b, c, p]] += dpooled[b, c, p]
    return dx_arr
