# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: nearest-centroid assignment and edit-distance DP.

Contracts match gibscore._kernels_py exactly (lowest-index tie-break for
assignment, hit/substitution > deletion > insertion backtrack preference).
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def assign_frames(const double[:, ::1] frames, const double[:, ::1] centroids):
    """Nearest centroid per frame -> (labels int64, min squared distance f64)."""
    cdef Py_ssize_t n = frames.shape[0]
    cdef Py_ssize_t d = frames.shape[1]
    cdef Py_ssize_t k = centroids.shape[0]
    labels_arr = np.empty(n, dtype=np.int64)
    mind_arr = np.empty(n, dtype=np.float64)
    cdef long long[::1] labels = labels_arr
    cdef double[::1] mind = mind_arr
    cdef Py_ssize_t i, c, j
    cdef double best, dist, diff
    cdef Py_ssize_t best_c
    for i in range(n):
        best = -1.0
        best_c = 0
        for c in range(k):
            dist = 0.0
            for j in range(d):
                diff = frames[i, j] - centroids[c, j]
                dist += diff * diff
            if best < 0.0 or dist < best:
                best = dist
                best_c = c
        labels[i] = best_c
        mind[i] = best
    return labels_arr, mind_arr


def edit_ops(const cnp.int64_t[::1] ref, const cnp.int64_t[::1] hyp):
    """Minimum-edit alignment counts -> (hits, substitutions, deletions, insertions)."""
    cdef Py_ssize_t n = ref.shape[0]
    cdef Py_ssize_t m = hyp.shape[0]
    dp_arr = np.zeros((n + 1, m + 1), dtype=np.int64)
    cdef long long[:, ::1] dp = dp_arr
    cdef Py_ssize_t i, j
    cdef long long sub, dele, ins, best
    for i in range(n + 1):
        dp[i, 0] = i
    for j in range(m + 1):
        dp[0, j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dp[i - 1, j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1)
            dele = dp[i - 1, j] + 1
            ins = dp[i, j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            dp[i, j] = best

    cdef long long hits = 0, subs = 0, dels = 0, inserts = 0
    i = n
    j = m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i, j] == dp[i - 1, j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1):
            if ref[i - 1] == hyp[j - 1]:
                hits += 1
            else:
                subs += 1
            i -= 1
            j -= 1
        elif i > 0 and dp[i, j] == dp[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            inserts += 1
            j -= 1
    return int(hits), int(subs), int(dels), int(inserts)
