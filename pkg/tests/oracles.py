"""Independent oracle implementations used by the tests.

Everything here is written with plain Python loops, deliberately sharing no
code with the library: a brute-force Lloyd iteration, exhaustive nearest
neighbor, a rolling-array edit distance, and textbook correlation
formulas. Arithmetic in the Lloyd oracle is sequential left-to-right
float64 so inertia values can be compared exactly against the library's
documented accumulation order.
"""

import math


def nearest_center(frame, centers):
    """Exhaustive nearest-center search; ties go to the lowest index."""
    best = -1.0
    best_c = 0
    for ci, center in enumerate(centers):
        dist = 0.0
        for a, b in zip(frame, center):
            diff = a - b
            dist += diff * diff
        if best < 0.0 or dist < best:
            best = dist
            best_c = ci
    return best_c, best


def lloyd_oracle(frames, initial, max_iter, rel_tol):
    """Plain-loop Lloyd run from explicit initial centers.

    Mirrors the documented iteration structure: assign, record inertia,
    update means (empty clusters repaired onto the farthest frame), stop on
    relative improvement < rel_tol or max_iter update rounds.
    Returns (centers, final inertia, inertia history).
    """
    frames = [list(map(float, f)) for f in frames]
    centers = [list(map(float, c)) for c in initial]
    n = len(frames)
    d = len(frames[0])
    k = len(centers)

    def assign(cents):
        labels = []
        mind = []
        for frame in frames:
            label, dist = nearest_center(frame, cents)
            labels.append(label)
            mind.append(dist)
        return labels, mind

    def seq_sum(values):
        total = 0.0
        for v in values:
            total += v
        return total

    labels, mind = assign(centers)
    inertia = seq_sum(mind)
    history = [inertia]
    for _ in range(max_iter):
        sums = [[0.0] * d for _ in range(k)]
        counts = [0] * k
        for frame, label in zip(frames, labels):
            counts[label] += 1
            for j in range(d):
                sums[label][j] += frame[j]
        candidate = [list(c) for c in centers]
        for c in range(k):
            if counts[c] > 0:
                candidate[c] = [sums[c][j] / counts[c] for j in range(d)]
        empties = [c for c in range(k) if counts[c] == 0]
        if empties:
            available = list(mind)
            for c in empties:
                far = max(range(n), key=available.__getitem__)
                candidate[c] = list(frames[far])
                available[far] = -1.0
        new_labels, new_mind = assign(candidate)
        new_inertia = seq_sum(new_mind)
        if new_inertia > inertia:
            break
        centers = candidate
        labels, mind = new_labels, new_mind
        previous, inertia = inertia, new_inertia
        history.append(inertia)
        if inertia == 0.0 or previous - inertia < rel_tol * previous:
            break
    return centers, inertia, history


def edit_distance_oracle(ref, hyp):
    """Rolling-array Wagner-Fischer distance (no backtrack)."""
    previous = list(range(len(hyp) + 1))
    for i, r in enumerate(ref, start=1):
        current = [i]
        for j, h in enumerate(hyp, start=1):
            current.append(
                min(
                    previous[j] + 1,
                    current[j - 1] + 1,
                    previous[j - 1] + (0 if r == h else 1),
                )
            )
        previous = current
    return previous[-1]


def pearson_oracle(xs, ys):
    """Direct textbook formula: (n*Sxy - Sx*Sy) / sqrt((n*Sxx - Sx^2)(n*Syy - Sy^2))."""
    n = len(xs)
    sx = sum(xs)
    sy = sum(ys)
    sxx = sum(x * x for x in xs)
    syy = sum(y * y for y in ys)
    sxy = sum(x * y for x, y in zip(xs, ys))
    return (n * sxy - sx * sy) / math.sqrt((n * sxx - sx * sx) * (n * syy - sy * sy))


def average_ranks_oracle(values):
    """Mean-of-positions ranks, grouped by exact value equality."""
    n = len(values)
    by_value = {}
    for pos, v in enumerate(sorted(range(n), key=lambda i: values[i])):
        by_value.setdefault(values[v], []).append((pos + 1, v))
    ranks = [0.0] * n
    for _, group in by_value.items():
        mean_rank = sum(pos for pos, _ in group) / len(group)
        for _, idx in group:
            ranks[idx] = mean_rank
    return ranks


def spearman_oracle(xs, ys):
    return pearson_oracle(average_ranks_oracle(xs), average_ranks_oracle(ys))
