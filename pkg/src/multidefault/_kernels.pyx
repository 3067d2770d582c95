# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for tree backward induction and atom reductions.

Both functions accumulate in ascending input order so results match the
pure-Python fallback in :mod:`multidefault._kernels_py`.
"""
import numpy as np


def backward_step(const double[:, ::1] child_values, const Py_ssize_t[::1] parent,
                  const double[::1] prob, Py_ssize_t n_parent):
    cdef Py_ssize_t n_child = child_values.shape[0]
    cdef Py_ssize_t m = child_values.shape[1]
    cdef Py_ssize_t j, k, p
    cdef double w
    out = np.zeros((n_parent, m), dtype=np.float64)
    cdef double[:, ::1] o = out
    for j in range(n_child):
        p = parent[j]
        w = prob[j]
        for k in range(m):
            o[p, k] += w * child_values[j, k]
    return out


def group_sum(const double[:, ::1] values, const Py_ssize_t[::1] labels, Py_ssize_t n_groups):
    cdef Py_ssize_t n_rows = values.shape[0]
    cdef Py_ssize_t n_cols = values.shape[1]
    cdef Py_ssize_t r, k, g
    out = np.zeros((n_rows, n_groups), dtype=np.float64)
    cdef double[:, ::1] o = out
    for r in range(n_rows):
        for k in range(n_cols):
            g = labels[k]
            o[r, g] += values[r, k]
    return out
