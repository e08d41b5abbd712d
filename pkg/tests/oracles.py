"""Independent brute-force reference implementations used by the tests."""

import math

import numpy as np


def dense_ppr(weights, seed, damping, iters=20000, tol=1e-15):
    """Dense power iteration on a node x node directed weight matrix.

    Walks run on W + W^T; rows without weight send their mass to the seed.
    """
    w = np.asarray(weights, dtype=float)
    a = w + w.T
    n = len(a)
    x = np.zeros(n)
    x[seed] = 1.0
    for _ in range(iters):
        new = np.zeros(n)
        for i in range(n):
            deg = a[i].sum()
            if deg > 0:
                new += damping * x[i] * a[i] / deg
            else:
                new[seed] += damping * x[i]
        new[seed] += 1 - damping
        if np.abs(new - x).sum() < tol:
            return new
        x = new
    return x


def dcg(gains):
    return sum(g / math.log2(i + 2) for i, g in enumerate(gains))


def brute_ndcg(ranked, grades, k):
    gains = [grades.get(s, 0) for s in ranked[:k]]
    ideal = sorted(grades.values(), reverse=True)[:k]
    return dcg(gains) / dcg(ideal) if ideal else 0.0


def brute_modularity(weights, labels):
    """Q = 1/2m * sum_ij (A_ij - k_i k_j / 2m) delta(c_i, c_j) with A = W + W^T."""
    w = np.asarray(weights, dtype=float)
    a = w + w.T
    two_m = a.sum()
    if two_m == 0:
        return 0.0
    k = a.sum(axis=1)
    q = 0.0
    n = len(a)
    for i in range(n):
        for j in range(n):
            if labels[i] == labels[j]:
                q += a[i, j] - k[i] * k[j] / two_m
    return q / two_m


def brute_cost(community_of, size_of, plays_by_user, top_n):
    """Scalar evaluation of the searching cost, one song at a time."""
    total = 0.0
    for u in sorted(plays_by_user):
        plays = plays_by_user[u]
        songs = sorted(plays, key=lambda s: (-plays[s], s))[:top_n]
        if not songs:
            continue
        count = {}
        for s in songs:
            count[community_of[s]] = count.get(community_of[s], 0) + 1
        ranking = sorted(count, key=lambda c: (-count[c], c))
        prev = 1
        for c in ranking:
            for s in songs:
                if community_of[s] != c:
                    continue
                numerator = sum(1 for t in songs if community_of[t] == c)
                total += numerator / (plays[s] * len(songs)) * math.log(prev * size_of[c])
            prev = size_of[c]
    return total


def scalar_crossover(a, b, r, t_c):
    p = 1 if r >= t_c else 0
    if a + b == 0:
        return a, b
    return (a / (a + b)) ** p * a ** (1 - p), (b / (a + b)) ** p * b ** (1 - p)


def scalar_mutation(w, r, x, t_m):
    if r < 1 - t_m:
        return w
    x = min(max(x, 1e-6), 1.0)
    return min(max(w / (w + x), 0.0), 1.0)
