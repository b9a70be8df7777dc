# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels matching attnwalk._core_py.

Matrix products go through BLAS (via scipy's cython_blas bindings); the
LSTM gate math, softmax, and Adam updates run as fused loops to avoid the
temporaries the numpy backend allocates.
"""

import numpy as np

from libc.math cimport exp, tanh, sqrt, INFINITY
from scipy.linalg.cython_blas cimport dgemm


def backend_name():
    return "compiled"


cdef void _matmul(
    double[:, ::1] a, bint ta,
    double[:, ::1] b, bint tb,
    double[:, ::1] c, double alpha, double beta,
) noexcept nogil:
    """c (m, n) = alpha * opA(a) @ opB(b) + beta * c, all row-major.

    Row-major arrays are handed to column-major BLAS via the transpose
    identity C^T = opB(B)^T opA(A)^T, which swaps the operand order.
    """
    cdef int m = c.shape[0]
    cdef int n = c.shape[1]
    cdef int k = a.shape[0] if ta else a.shape[1]
    cdef int lda = a.shape[1]
    cdef int ldb = b.shape[1]
    cdef int ldc = n
    cdef char fa = b'T' if tb else b'N'
    cdef char fb = b'T' if ta else b'N'
    dgemm(&fa, &fb, &n, &m, &k, &alpha, &b[0, 0], &ldb, &a[0, 0], &lda, &beta, &c[0, 0], &ldc)


def linear_forward(double[:, ::1] x, double[:, ::1] w, double[::1] bias):
    cdef int batch = x.shape[0]
    cdef int out = w.shape[0]
    y_arr = np.empty((batch, out))
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t i, j
    if batch > 0 and out > 0:
        _matmul(x, False, w, True, y, 1.0, 0.0)
        for i in range(batch):
            for j in range(out):
                y[i, j] += bias[j]
    return y_arr


def linear_input_grad(double[:, ::1] dy, double[:, ::1] w):
    cdef int batch = dy.shape[0]
    cdef int in_dim = w.shape[1]
    dx_arr = np.empty((batch, in_dim))
    cdef double[:, ::1] dx = dx_arr
    if batch > 0:
        _matmul(dy, False, w, False, dx, 1.0, 0.0)
    return dx_arr


def accumulate_param_grads(double[:, ::1] x, double[:, ::1] dy, double[:, ::1] dw, double[::1] db):
    cdef int batch = x.shape[0]
    cdef Py_ssize_t i, j
    cdef int out = dy.shape[1]
    if batch > 0:
        _matmul(dy, True, x, False, dw, 1.0, 1.0)
        for i in range(batch):
            for j in range(out):
                db[j] += dy[i, j]
    return None


def relu_forward(double[:, :] x):
    cdef Py_ssize_t rows = x.shape[0]
    cdef Py_ssize_t cols = x.shape[1]
    y_arr = np.empty((rows, cols))
    cdef double[:, ::1] y = y_arr
    cdef Py_ssize_t i, j
    cdef double v
    for i in range(rows):
        for j in range(cols):
            v = x[i, j]
            y[i, j] = v if v > 0.0 else 0.0
    return y_arr


def relu_backward(double[:, :] y, double[:, :] dy):
    cdef Py_ssize_t rows = y.shape[0]
    cdef Py_ssize_t cols = y.shape[1]
    dx_arr = np.empty((rows, cols))
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t i, j
    for i in range(rows):
        for j in range(cols):
            dx[i, j] = dy[i, j] if y[i, j] > 0.0 else 0.0
    return dx_arr


def lstm_forward(double[:, ::1] xh, double[:, ::1] c_prev, double[:, ::1] w, double[::1] bias):
    cdef int batch = xh.shape[0]
    cdef int hidden = c_prev.shape[1]
    cdef int gate_width = 4 * hidden
    gates_arr = np.empty((batch, gate_width))
    h_arr = np.empty((batch, hidden))
    c_arr = np.empty((batch, hidden))
    cdef double[:, ::1] gates = gates_arr
    cdef double[:, ::1] h = h_arr
    cdef double[:, ::1] c = c_arr
    cdef Py_ssize_t i, j
    cdef double zi, zf, zg, zo, cv
    if batch == 0:
        return h_arr, c_arr, gates_arr
    _matmul(xh, False, w, True, gates, 1.0, 0.0)
    for i in range(batch):
        for j in range(hidden):
            zi = gates[i, j] + bias[j]
            zf = gates[i, hidden + j] + bias[hidden + j]
            zg = gates[i, 2 * hidden + j] + bias[2 * hidden + j]
            zo = gates[i, 3 * hidden + j] + bias[3 * hidden + j]
            zi = 1.0 / (1.0 + exp(-zi))
            zf = 1.0 / (1.0 + exp(-zf))
            zg = tanh(zg)
            zo = 1.0 / (1.0 + exp(-zo))
            gates[i, j] = zi
            gates[i, hidden + j] = zf
            gates[i, 2 * hidden + j] = zg
            gates[i, 3 * hidden + j] = zo
            cv = zf * c_prev[i, j] + zi * zg
            c[i, j] = cv
            h[i, j] = zo * tanh(cv)
    return h_arr, c_arr, gates_arr


def lstm_gate_grads(
    double[:, ::1] c_prev,
    double[:, :] gates,
    double[:, :] c_new,
    double[:, ::1] dh,
    double[:, :] dc,
):
    cdef Py_ssize_t batch = c_prev.shape[0]
    cdef Py_ssize_t hidden = c_prev.shape[1]
    dz_arr = np.empty((batch, 4 * hidden))
    dcp_arr = np.empty((batch, hidden))
    cdef double[:, ::1] dz = dz_arr
    cdef double[:, ::1] dcp = dcp_arr
    cdef Py_ssize_t i, j
    cdef double gi, gf, gg, go, tc, dct, dhv
    for i in range(batch):
        for j in range(hidden):
            gi = gates[i, j]
            gf = gates[i, hidden + j]
            gg = gates[i, 2 * hidden + j]
            go = gates[i, 3 * hidden + j]
            tc = tanh(c_new[i, j])
            dhv = dh[i, j]
            dct = dc[i, j] + dhv * go * (1.0 - tc * tc)
            dz[i, j] = dct * gg * gi * (1.0 - gi)
            dz[i, hidden + j] = dct * c_prev[i, j] * gf * (1.0 - gf)
            dz[i, 2 * hidden + j] = dct * gi * (1.0 - gg * gg)
            dz[i, 3 * hidden + j] = dhv * tc * go * (1.0 - go)
            dcp[i, j] = dct * gf
    return dz_arr, dcp_arr


def softmax_rows(double[:, ::1] z):
    cdef Py_ssize_t rows = z.shape[0]
    cdef Py_ssize_t cols = z.shape[1]
    p_arr = np.empty((rows, cols))
    cdef double[:, ::1] p = p_arr
    cdef Py_ssize_t i, j
    cdef double m, total
    for i in range(rows):
        m = z[i, 0]
        for j in range(1, cols):
            if z[i, j] > m:
                m = z[i, j]
        total = 0.0
        for j in range(cols):
            p[i, j] = exp(z[i, j] - m)
            total += p[i, j]
        for j in range(cols):
            p[i, j] /= total
    return p_arr


def all_finite(double[::1] x):
    cdef Py_ssize_t i
    cdef double v
    for i in range(x.shape[0]):
        v = x[i]
        if v != v or v == INFINITY or v == -INFINITY:
            return False
    return True


def adam_step(
    double[::1] p,
    double[::1] g,
    double[::1] m,
    double[::1] v,
    long long t,
    double lr,
    double beta1,
    double beta2,
    double eps,
):
    cdef Py_ssize_t n = p.shape[0]
    cdef double corr1 = 1.0 - beta1 ** t
    cdef double corr2 = 1.0 - beta2 ** t
    cdef Py_ssize_t i
    cdef double gv, mv, vv
    for i in range(n):
        gv = g[i]
        mv = beta1 * m[i] + (1.0 - beta1) * gv
        vv = beta2 * v[i] + (1.0 - beta2) * gv * gv
        m[i] = mv
        v[i] = vv
        p[i] -= lr * (mv / corr1) / (sqrt(vv / corr2) + eps)
    return None
