"""Independent brute-force oracles shared by the unit and acceptance tests.

Everything here is written directly from the statistic definitions with
plain Python loops (or exhaustive grids), deliberately avoiding the
library's vectorized code paths.
"""

import math

import numpy as np


def sign(v):
    return float(v > 0) - float(v < 0)


def oracle_rank_weights(values):
    """v(mean tied 0-based position by decreasing value), per element."""
    n = len(values)
    order = sorted(range(n), key=lambda i: (-values[i], i))
    pos_of = {}
    i = 0
    while i < n:
        j = i
        while j + 1 < n and values[order[j + 1]] == values[order[i]]:
            j += 1
        mean_pos = (i + j) / 2.0
        for k in range(i, j + 1):
            pos_of[order[k]] = mean_pos
        i = j + 1
    return [1.0 / (1.0 + pos_of[i]) for i in range(n)]


def oracle_weighted_sums(x, y):
    """Numerator and denominator of the weighted tau, via the double sum."""
    cx = oracle_rank_weights(list(x))
    cy = oracle_rank_weights(list(y))
    num = den = 0.0
    n = len(x)
    for i in range(n):
        for j in range(i + 1, n):
            w = (cx[i] + cx[j]) + (cy[i] + cy[j])
            num += w * sign(x[i] - x[j]) * sign(y[i] - y[j])
            den += w
    return num, den


def oracle_kendall(x, y):
    n = len(x)
    num = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            num += sign(x[i] - x[j]) * sign(y[i] - y[j])
    return num / (n * (n - 1) / 2.0)


def grid_logme_evidence_1d(feats, y, grid=400):
    """Exhaustive evidence search for D=1 on a log grid over (alpha, beta)."""
    n = len(y)
    f = feats[:, 0]
    f2 = float(f @ f)
    fy = float(f @ y)
    y2 = float(y @ y)
    best = -np.inf
    betas = np.logspace(-3, 3, grid)
    for alpha in np.logspace(-3, 3, grid):
        a_post = alpha + betas * f2
        m = betas * fy / a_post
        res2 = y2 - 2 * m * fy + m**2 * f2
        ev = 0.5 * (
            np.log(alpha)
            + n * np.log(betas)
            - n * math.log(2 * math.pi)
            - betas * res2
            - alpha * m**2
            - np.log(a_post)
        )
        best = max(best, float(ev.max()))
    return best


def python_spearman(u, v):
    """Spearman correlation with average ranks, pure Python."""

    def avg_ranks(vals):
        n = len(vals)
        order = sorted(range(n), key=lambda i: vals[i])
        ranks = [0.0] * n
        i = 0
        while i < n:
            j = i
            while j + 1 < n and vals[order[j + 1]] == vals[order[i]]:
                j += 1
            for k in range(i, j + 1):
                ranks[order[k]] = (i + j) / 2.0 + 1.0
            i = j + 1
        return ranks

    ru, rv = avg_ranks(list(u)), avg_ranks(list(v))
    mu, mv = np.mean(ru), np.mean(rv)
    cov = np.mean([(a - mu) * (b - mv) for a, b in zip(ru, rv)])
    return cov / (np.std(ru) * np.std(rv))
