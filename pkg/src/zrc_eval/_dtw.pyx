# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled DTW accumulation kernel.

Same contract as zrc_eval._dtw_py: see that module for the reference
implementation.
"""

import numpy as np

BACKEND = "compiled"


def dtw_accumulate(double[:, ::1] cost):
    """Min-sum DTW over a framewise cost matrix.

    Steps are (1,0), (0,1) and (1,1); endpoints are anchored at both
    corners. Returns ``(path_sum, path_length)`` for the optimal path,
    ties broken by preferring diagonal, then vertical, then horizontal
    predecessors.
    """
    cdef Py_ssize_t t = cost.shape[0]
    cdef Py_ssize_t s = cost.shape[1]
    if t == 0 or s == 0:
        raise ValueError("empty cost matrix")

    acc_arr = np.empty((t, s), dtype=np.float64)
    move_arr = np.zeros((t, s), dtype=np.int8)
    cdef double[:, ::1] acc = acc_arr
    cdef signed char[:, ::1] move = move_arr
    cdef Py_ssize_t i, j
    cdef double best
    cdef signed char m
    cdef Py_ssize_t length

    with nogil:
        acc[0, 0] = cost[0, 0]
        for j in range(1, s):
            acc[0, j] = acc[0, j - 1] + cost[0, j]
            move[0, j] = 2
        for i in range(1, t):
            acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
            move[i, 0] = 1
            for j in range(1, s):
                best = acc[i - 1, j - 1]
                m = 0
                if acc[i - 1, j] < best:
                    best = acc[i - 1, j]
                    m = 1
                if acc[i, j - 1] < best:
                    best = acc[i, j - 1]
                    m = 2
                acc[i, j] = best + cost[i, j]
                move[i, j] = m

        i = t - 1
        j = s - 1
        length = 1
        while i > 0 or j > 0:
            m = move[i, j]
            if m == 0:
                i -= 1
                j -= 1
            elif m == 1:
                i -= 1
            else:
                j -= 1
            length += 1

    return acc_arr[t - 1, s - 1], length
