"""Pure-Python/numpy fallback for the compiled kernels.

Same contracts as gibscore._kernels: nearest-centroid assignment with
lowest-index tie-break, and edit-distance alignment counts with the
hit/substitution > deletion > insertion backtrack preference. Results are
identical to the compiled versions; only speed differs.
"""

import numpy as np

_CHUNK = 4096


def assign_frames(frames: np.ndarray, centroids: np.ndarray):
    """Nearest centroid per frame.

    Returns (labels int64, min squared distance float64). Ties go to the
    lowest centroid index (argmin keeps the first occurrence).
    """
    n = frames.shape[0]
    labels = np.empty(n, dtype=np.int64)
    mind = np.empty(n, dtype=np.float64)
    for start in range(0, n, _CHUNK):
        block = frames[start : start + _CHUNK]
        diff = block[:, None, :] - centroids[None, :, :]
        dist = np.einsum("nkd,nkd->nk", diff, diff)
        idx = np.argmin(dist, axis=1)
        labels[start : start + block.shape[0]] = idx
        mind[start : start + block.shape[0]] = dist[np.arange(block.shape[0]), idx]
    return labels, mind


def edit_ops(ref: np.ndarray, hyp: np.ndarray):
    """Minimum-edit alignment counts (hits, substitutions, deletions, insertions).

    Unit costs; backtrack prefers the diagonal move (hit or substitution),
    then deletion, then insertion, so counts are deterministic.
    """
    n, m = len(ref), len(hyp)
    dp = np.zeros((n + 1, m + 1), dtype=np.int64)
    dp[:, 0] = np.arange(n + 1)
    dp[0, :] = np.arange(m + 1)
    for i in range(1, n + 1):
        ri = ref[i - 1]
        row = dp[i]
        prev = dp[i - 1]
        for j in range(1, m + 1):
            sub = prev[j - 1] + (0 if ri == hyp[j - 1] else 1)
            dele = prev[j] + 1
            ins = row[j - 1] + 1
            best = sub
            if dele < best:
                best = dele
            if ins < best:
                best = ins
            row[j] = best

    hits = subs = dels = ins = 0
    i, j = n, m
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
            ins += 1
            j -= 1
    return hits, subs, dels, ins
