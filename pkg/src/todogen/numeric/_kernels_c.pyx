# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``_kernels_py``: the hot inner-loop kernels.

Same signatures and same arithmetic as the pure-numpy fallback; the fused
loops avoid temporaries and per-op numpy dispatch.  Float64/int64,
C-contiguous throughout.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt, tanh

cnp.import_array()

BACKEND = "cython"


cdef inline double _sig(double x) nogil:
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    cdef double e = exp(x)
    return e / (1.0 + e)


def lstm_cell_forward(double[:, ::1] pre, double[:, ::1] c_prev):
    """Fused LSTM gate math; see the python backend for the layout contract."""
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    i_arr = np.empty((B, H), dtype=np.float64)
    f_arr = np.empty((B, H), dtype=np.float64)
    g_arr = np.empty((B, H), dtype=np.float64)
    o_arr = np.empty((B, H), dtype=np.float64)
    c_arr = np.empty((B, H), dtype=np.float64)
    tc_arr = np.empty((B, H), dtype=np.float64)
    h_arr = np.empty((B, H), dtype=np.float64)
    cdef double[:, ::1] iv = i_arr, fv = f_arr, gv = g_arr, ov = o_arr
    cdef double[:, ::1] cv = c_arr, tcv = tc_arr, hv = h_arr
    cdef Py_ssize_t b, j
    cdef double ig, fg, gg, og, cc
    with nogil:
        for b in range(B):
            for j in range(H):
                ig = _sig(pre[b, j])
                fg = _sig(pre[b, H + j])
                gg = tanh(pre[b, 2 * H + j])
                og = _sig(pre[b, 3 * H + j])
                cc = fg * c_prev[b, j] + ig * gg
                iv[b, j] = ig
                fv[b, j] = fg
                gv[b, j] = gg
                ov[b, j] = og
                cv[b, j] = cc
                tcv[b, j] = tanh(cc)
                hv[b, j] = og * tcv[b, j]
    return h_arr, c_arr, (i_arr, f_arr, g_arr, o_arr, tc_arr)


def lstm_cell_backward(double[:, ::1] dh, double[:, ::1] dc, cache,
                       double[:, ::1] c_prev):
    """Backward of lstm_cell_forward; returns (dpre, dc_prev)."""
    cdef double[:, ::1] iv = cache[0], fv = cache[1], gv = cache[2]
    cdef double[:, ::1] ov = cache[3], tcv = cache[4]
    cdef Py_ssize_t B = c_prev.shape[0]
    cdef Py_ssize_t H = c_prev.shape[1]
    dpre_arr = np.empty((B, 4 * H), dtype=np.float64)
    dc_prev_arr = np.empty((B, H), dtype=np.float64)
    cdef double[:, ::1] dpre = dpre_arr
    cdef double[:, ::1] dcp = dc_prev_arr
    cdef Py_ssize_t b, j
    cdef double do_, dct, di, df, dg, ig, fg, gg, og, tc_
    with nogil:
        for b in range(B):
            for j in range(H):
                ig = iv[b, j]; fg = fv[b, j]; gg = gv[b, j]
                og = ov[b, j]; tc_ = tcv[b, j]
                do_ = dh[b, j] * tc_
                dct = dc[b, j] + dh[b, j] * og * (1.0 - tc_ * tc_)
                di = dct * gg
                df = dct * c_prev[b, j]
                dg = dct * ig
                dcp[b, j] = dct * fg
                dpre[b, j] = di * ig * (1.0 - ig)
                dpre[b, H + j] = df * fg * (1.0 - fg)
                dpre[b, 2 * H + j] = dg * (1.0 - gg * gg)
                dpre[b, 3 * H + j] = do_ * og * (1.0 - og)
    return dpre_arr, dc_prev_arr


def softmax_rows(double[:, ::1] x):
    """Row softmax, max-subtracted."""
    cdef Py_ssize_t N = x.shape[0]
    cdef Py_ssize_t M = x.shape[1]
    out_arr = np.empty((N, M), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t n, m
    cdef double mx, s
    with nogil:
        for n in range(N):
            mx = x[n, 0]
            for m in range(1, M):
                if x[n, m] > mx:
                    mx = x[n, m]
            s = 0.0
            for m in range(M):
                out[n, m] = exp(x[n, m] - mx)
                s += out[n, m]
            for m in range(M):
                out[n, m] /= s
    return out_arr


def softmax_rows_backward(double[:, ::1] gout, double[:, ::1] s):
    """Backward of row softmax."""
    cdef Py_ssize_t N = s.shape[0]
    cdef Py_ssize_t M = s.shape[1]
    dx_arr = np.empty((N, M), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    cdef Py_ssize_t n, m
    cdef double dot
    with nogil:
        for n in range(N):
            dot = 0.0
            for m in range(M):
                dot += gout[n, m] * s[n, m]
            for m in range(M):
                dx[n, m] = (gout[n, m] - dot) * s[n, m]
    return dx_arr


def scatter_add_rows(double[:, ::1] weights, long long[:, ::1] idx, Py_ssize_t n_cols):
    """out[b, idx[b, t]] += weights[b, t]."""
    cdef Py_ssize_t B = weights.shape[0]
    cdef Py_ssize_t T = weights.shape[1]
    out_arr = np.zeros((B, n_cols), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t b, t
    with nogil:
        for b in range(B):
            for t in range(T):
                out[b, idx[b, t]] += weights[b, t]
    return out_arr


def scatter_add_rows_backward(double[:, ::1] gout, long long[:, ::1] idx):
    """Gather gout back at the scattered slots."""
    cdef Py_ssize_t B = idx.shape[0]
    cdef Py_ssize_t T = idx.shape[1]
    dw_arr = np.empty((B, T), dtype=np.float64)
    cdef double[:, ::1] dw = dw_arr
    cdef Py_ssize_t b, t
    with nogil:
        for b in range(B):
            for t in range(T):
                dw[b, t] = gout[b, idx[b, t]]
    return dw_arr


def embedding_grad(double[:, ::1] table_grad, long long[::1] ids, double[:, ::1] gout):
    """Accumulate row gradients into the table gradient, in place."""
    cdef Py_ssize_t N = ids.shape[0]
    cdef Py_ssize_t E = table_grad.shape[1]
    cdef Py_ssize_t n, e
    with nogil:
        for n in range(N):
            for e in range(E):
                table_grad[ids[n], e] += gout[n, e]


def adagrad_update(double[::1] param, double[::1] grad, double[::1] accum, double lr):
    """One Adagrad step over flattened views, in place."""
    cdef Py_ssize_t N = param.shape[0]
    cdef Py_ssize_t n
    with nogil:
        for n in range(N):
            accum[n] += grad[n] * grad[n]
            param[n] -= lr * grad[n] / sqrt(accum[n])
