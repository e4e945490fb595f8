# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False
"""Compiled row kernels: softmax, layer norm and tanh-GELU, forward and backward.

The loops live in ``csrc/rowkernels.h`` as plain C over ``restrict`` row
pointers so the compiler vectorises them, exp/tanh included (glibc libmvec).
Signatures mirror ``_kernels_py``.
"""

import numpy as np

cdef extern from "csrc/rowkernels.h" nogil:
    void slgt_softmax_rows(const double* x, double* y, Py_ssize_t n, Py_ssize_t m)
    void slgt_softmax_rows_backward(const double* y, const double* gy, double* gx,
                                    Py_ssize_t n, Py_ssize_t m)
    void slgt_layer_norm_rows(const double* x, const double* gain, const double* bias, double eps,
                              double* y, double* xhat, double* rstd, Py_ssize_t n, Py_ssize_t m)
    void slgt_layer_norm_rows_backward(const double* gy, const double* xhat, const double* rstd,
                                       const double* gain, double* gx, double* ggain,
                                       double* gbias, Py_ssize_t n, Py_ssize_t m)
    void slgt_gelu(const double* x, double* y, Py_ssize_t total)
    void slgt_gelu_backward(const double* x, const double* gy, double* gx, Py_ssize_t total)


def softmax_rows(const double[:, ::1] x):
    out = np.empty((x.shape[0], x.shape[1]), dtype=np.float64)
    cdef double[:, ::1] y = out
    if x.shape[0] and x.shape[1]:
        with nogil:
            slgt_softmax_rows(&x[0, 0], &y[0, 0], x.shape[0], x.shape[1])
    return out


def softmax_rows_backward(const double[:, ::1] y, const double[:, ::1] gy):
    if y.shape[0] != gy.shape[0] or y.shape[1] != gy.shape[1]:
        raise ValueError("softmax_rows_backward: shape mismatch")
    out = np.empty((y.shape[0], y.shape[1]), dtype=np.float64)
    cdef double[:, ::1] gx = out
    if y.shape[0] and y.shape[1]:
        with nogil:
            slgt_softmax_rows_backward(&y[0, 0], &gy[0, 0], &gx[0, 0], y.shape[0], y.shape[1])
    return out


def layer_norm_rows(const double[:, ::1] x, const double[::1] gain,
                    const double[::1] bias, double eps):
    cdef Py_ssize_t n = x.shape[0], m = x.shape[1]
    if gain.shape[0] != m or bias.shape[0] != m:
        raise ValueError("layer_norm_rows: gain/bias length mismatch")
    out = np.empty((n, m), dtype=np.float64)
    xhat = np.empty((n, m), dtype=np.float64)
    rstd = np.empty(n, dtype=np.float64)
    cdef double[:, ::1] yv = out
    cdef double[:, ::1] hv = xhat
    cdef double[::1] rv = rstd
    if n and m:
        with nogil:
            slgt_layer_norm_rows(&x[0, 0], &gain[0], &bias[0], eps,
                                 &yv[0, 0], &hv[0, 0], &rv[0], n, m)
    return out, xhat, rstd


def layer_norm_rows_backward(const double[:, ::1] gy, const double[:, ::1] xhat,
                             const double[::1] rstd, const double[::1] gain):
    cdef Py_ssize_t n = gy.shape[0], m = gy.shape[1]
    gx = np.empty((n, m), dtype=np.float64)
    ggain = np.zeros(m, dtype=np.float64)
    gbias = np.zeros(m, dtype=np.float64)
    cdef double[:, ::1] gxv = gx
    cdef double[::1] ggv = ggain
    cdef double[::1] gbv = gbias
    if n and m:
        with nogil:
            slgt_layer_norm_rows_backward(&gy[0, 0], &xhat[0, 0], &rstd[0], &gain[0],
                                          &gxv[0, 0], &ggv[0], &gbv[0], n, m)
    return gx, ggain, gbias


def gelu(const double[:, ::1] x):
    out = np.empty((x.shape[0], x.shape[1]), dtype=np.float64)
    cdef double[:, ::1] y = out
    if x.shape[0] and x.shape[1]:
        with nogil:
            slgt_gelu(&x[0, 0], &y[0, 0], x.shape[0] * x.shape[1])
    return out


def gelu_backward(const double[:, ::1] x, const double[:, ::1] gy):
    out = np.empty((x.shape[0], x.shape[1]), dtype=np.float64)
    cdef double[:, ::1] gx = out
    if x.shape[0] and x.shape[1]:
        with nogil:
            slgt_gelu_backward(&x[0, 0], &gy[0, 0], &gx[0, 0], x.shape[0] * x.shape[1])
    return out
