# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels.

Same signatures and semantics as ``_kernels_py``; selected at import by
``riskstrat.kernels`` when the extension has been built.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


def rank_auc(scores, labels):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(scores, dtype=np.float64)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] y = np.ascontiguousarray(labels, dtype=np.int64)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] order = np.argsort(s, kind="mergesort")
    cdef Py_ssize_t n = s.shape[0]
    cdef Py_ssize_t i = 0, j
    cdef long long twice_rank_sum = 0, n_pos = 0, pos_in_group
    cdef double v
    while i < n:
        v = s[order[i]]
        j = i
        pos_in_group = 0
        while j < n and s[order[j]] == v:
            pos_in_group += y[order[j]]
            j += 1
        twice_rank_sum += (i + j + 1) * pos_in_group
        n_pos += pos_in_group
        i = j
    cdef long long n_neg = n - n_pos
    cdef long long twice_u = twice_rank_sum - n_pos * (n_pos + 1)
    return twice_u / (2.0 * n_pos * n_neg)


def pava(y, w):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] yy = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] ww = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = yy.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sums = np.empty(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] weights = np.empty(n)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] sizes = np.empty(n, dtype=np.intp)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n)
    cdef Py_ssize_t top = -1, i, k, pos
    cdef double s, wt
    cdef Py_ssize_t size
    for i in range(n):
        s = yy[i] * ww[i]
        wt = ww[i]
        size = 1
        while top >= 0 and sums[top] / weights[top] > s / wt:
            s += sums[top]
            wt += weights[top]
            size += sizes[top]
            top -= 1
        top += 1
        sums[top] = s
        weights[top] = wt
        sizes[top] = size
    pos = 0
    for k in range(top + 1):
        for i in range(sizes[k]):
            out[pos] = sums[k] / weights[k]
            pos += 1
    return out


def coalition_values_linear(target_terms, background_terms, double intercept):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] t = np.ascontiguousarray(target_terms, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bg = np.ascontiguousarray(background_terms, dtype=np.float64)
    cdef Py_ssize_t n = t.shape[0], m = t.shape[1], b = bg.shape[0]
    cdef Py_ssize_t n_masks = 1 << m
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, n_masks))
    cdef Py_ssize_t r, mask, row, g
    cdef double z, acc, first
    with nogil:
        for r in range(n):
            for mask in range(n_masks):
                acc = 0.0
                first = 0.0
                for row in range(b):
                    z = intercept
                    for g in range(m):
                        if (mask >> g) & 1:
                            z = z + t[r, g]
                        else:
                            z = z + bg[row, g]
                    if row == 0:
                        first = _sigmoid(z)
                    else:
                        acc += _sigmoid(z) - first
                out[r, mask] = first + acc / b
    return out


def shapley_from_values(values, int m):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t n_masks = 1 << m
    cdef cnp.ndarray[cnp.float64_t, ndim=2] phi = np.zeros((n, m))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] weights = np.empty(m)
    cdef cnp.ndarray[cnp.intp_t, ndim=1] sizes = np.empty(n_masks, dtype=np.intp)
    cdef Py_ssize_t r, i, mask, bit, k
    cdef double acc, f
    # size-indexed weights |S|!(M-|S|-1)!/M!, built by the ratio recurrence
    f = 1.0 / m
    weights[0] = f
    for k in range(1, m):
        f = f * k / (m - k)
        weights[k] = f
    for mask in range(n_masks):
        k = 0
        bit = mask
        while bit:
            k += bit & 1
            bit >>= 1
        sizes[mask] = k
    with nogil:
        for r in range(n):
            for i in range(m):
                bit = 1 << i
                acc = 0.0
                for mask in range(n_masks):
                    if not (mask & bit):
                        acc += weights[sizes[mask]] * (v[r, mask | bit] - v[r, mask])
                phi[r, i] = acc
    return phi
