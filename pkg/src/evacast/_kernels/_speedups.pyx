# cython: boundscheck=False, wraparound=False, cdivision=True
"""Fused C implementations of the hot training kernels.

Mirrors `_pyops` (same signatures, same in-place contracts, same gate
layout i|f|g|o). Transcendentals stay on NumPy's SIMD ufuncs, where they
are fastest at these sizes; everything else is fused into single C passes
to avoid the NumPy dispatch and temporary-allocation tax.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def lstm_step_forward(zbar_arr, c_prev_arr, c_out_arr, tc_out_arr, h_out_arr):
    cdef Py_ssize_t h_n = c_prev_arr.shape[1]
    sig = zbar_arr[:, :2 * h_n]
    np.negative(sig, out=sig)
    np.exp(sig, out=sig)
    np.tanh(zbar_arr[:, 2 * h_n:3 * h_n], out=zbar_arr[:, 2 * h_n:3 * h_n])
    sig_o = zbar_arr[:, 3 * h_n:]
    np.negative(sig_o, out=sig_o)
    np.exp(sig_o, out=sig_o)
    cdef double[:, ::1] zbar = zbar_arr
    cdef double[:, ::1] c_prev = c_prev_arr
    cdef double[:, ::1] c_out = c_out_arr
    cdef double[:, ::1] tc_out = tc_out_arr
    cdef double[:, ::1] h_out = h_out_arr
    cdef Py_ssize_t b_n = zbar.shape[0]
    cdef Py_ssize_t b, j
    cdef double gi, gf, go
    with nogil:
        for b in range(b_n):
            for j in range(h_n):
                gi = 1.0 / (1.0 + zbar[b, j])
                gf = 1.0 / (1.0 + zbar[b, h_n + j])
                go = 1.0 / (1.0 + zbar[b, 3 * h_n + j])
                zbar[b, j] = gi
                zbar[b, h_n + j] = gf
                zbar[b, 3 * h_n + j] = go
                c_out[b, j] = gf * c_prev[b, j] + gi * zbar[b, 2 * h_n + j]
    np.tanh(c_out_arr, out=tc_out_arr)
    with nogil:
        for b in range(b_n):
            for j in range(h_n):
                h_out[b, j] = zbar[b, 3 * h_n + j] * tc_out[b, j]


def lstm_step_backward(double[:, ::1] d_h, double[:, ::1] d_c,
                       double[:, ::1] gates, double[:, ::1] c_prev,
                       double[:, ::1] tanh_c, double[:, ::1] dz_out):
    cdef Py_ssize_t b_n = d_h.shape[0]
    cdef Py_ssize_t h_n = d_h.shape[1]
    cdef Py_ssize_t b, j
    cdef double gi, gf, gg, go, tc, dct
    with nogil:
        for b in range(b_n):
            for j in range(h_n):
                gi = gates[b, j]
                gf = gates[b, h_n + j]
                gg = gates[b, 2 * h_n + j]
                go = gates[b, 3 * h_n + j]
                tc = tanh_c[b, j]
                dct = d_c[b, j] + d_h[b, j] * go * (1.0 - tc * tc)
                dz_out[b, j] = dct * gg * gi * (1.0 - gi)
                dz_out[b, h_n + j] = dct * c_prev[b, j] * gf * (1.0 - gf)
                dz_out[b, 2 * h_n + j] = dct * gi * (1.0 - gg * gg)
                dz_out[b, 3 * h_n + j] = d_h[b, j] * tc * go * (1.0 - go)
                d_c[b, j] = dct * gf


def rnn_step_forward(zbar, h_out):
    # NumPy's SIMD tanh beats a scalar loop here.
    np.tanh(zbar, out=h_out)


def rnn_step_backward(double[:, ::1] d_h, double[:, ::1] h,
                      double[:, ::1] dz_out):
    cdef Py_ssize_t b_n = d_h.shape[0]
    cdef Py_ssize_t h_n = d_h.shape[1]
    cdef Py_ssize_t b, j
    with nogil:
        for b in range(b_n):
            for j in range(h_n):
                dz_out[b, j] = d_h[b, j] * (1.0 - h[b, j] * h[b, j])


def relu_forward(double[:, ::1] z):
    cdef Py_ssize_t b_n = z.shape[0]
    cdef Py_ssize_t h_n = z.shape[1]
    a_arr = np.empty((b_n, h_n))
    cdef double[:, ::1] a = a_arr
    cdef Py_ssize_t b, j
    with nogil:
        for b in range(b_n):
            for j in range(h_n):
                a[b, j] = z[b, j] if z[b, j] > 0.0 else 0.0
    return a_arr


def relu_backward(double[:, ::1] d_a, double[:, ::1] a):
    cdef Py_ssize_t b_n = d_a.shape[0]
    cdef Py_ssize_t h_n = d_a.shape[1]
    out_arr = np.empty((b_n, h_n))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, j
    with nogil:
        for b in range(b_n):
            for j in range(h_n):
                out[b, j] = d_a[b, j] if a[b, j] > 0.0 else 0.0
    return out_arr


def adam_update(cnp.ndarray param, cnp.ndarray grad, cnp.ndarray m,
                cnp.ndarray v, int t, double lr, double beta1, double beta2,
                double eps):
    cdef double[::1] p1 = param.reshape(-1)
    cdef double[::1] g1 = grad.reshape(-1)
    cdef double[::1] m1 = m.reshape(-1)
    cdef double[::1] v1 = v.reshape(-1)
    cdef Py_ssize_t n = p1.shape[0]
    cdef double bc1 = 1.0 - beta1 ** t
    cdef double bc2 = 1.0 - beta2 ** t
    cdef Py_ssize_t j
    with nogil:
        for j in range(n):
            m1[j] = beta1 * m1[j] + (1.0 - beta1) * g1[j]
            v1[j] = beta2 * v1[j] + (1.0 - beta2) * g1[j] * g1[j]
            p1[j] -= lr * (m1[j] / bc1) / (sqrt(v1[j] / bc2) + eps)
