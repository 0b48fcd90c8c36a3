"""Rank correlation statistics and the stratified bootstrap.

The weighted Kendall tau uses hyperbolic rank weights: each element
contributes v(r) = 1/(1+r) where r is its 0-based rank by decreasing
value, so disagreements near the top of either ranking cost more.  A
pair's weight is the sum of the four element contributions from both
vectors.  The aggregated form pools per-group numerators and
denominators, comparing pairs only within groups, which makes a single
combined statistic meaningful across datasets of different difficulty.

Tied elements receive the weight of their mean tied rank position,
v((first + last tied position) / 2).  Ties still null the sign product,
so a tie-heavy vector loses numerator mass and, under this rule, also
denominator mass, keeping the ratio comparable across resamples.

Everything here is vectorized over stacks of equal-length groups; the
bootstrap exploits that to evaluate a whole resample in a handful of
array operations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import GroupedSeries
from .errors import StatisticsError, ValidationError

STATISTICS = (
    "tau",
    "weighted_tau",
    "aggregated_weighted_tau",
    "averaged_weighted_tau",
    "pearson",
)

_TRIU_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    got = _TRIU_CACHE.get(n)
    if got is None:
        got = np.triu_indices(n, k=1)
        _TRIU_CACHE[n] = got
    return got


@dataclass(frozen=True)
class TauResult:
    """A tau statistic together with its pair-sum pieces."""

    value: float
    numerator: float
    denominator: float


@dataclass(frozen=True)
class BootstrapSummary:
    """Point estimate plus the bootstrap distribution of a statistic."""

    point: float
    draws: np.ndarray
    mean: float
    ci_low: float
    ci_high: float
    n_degenerate: int


def _as_vectors(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-D vectors of equal length")
    if x.size < 2:
        raise ValidationError("need at least 2 paired observations")
    return x, y


def hyperbolic_rank_weights(values: np.ndarray) -> np.ndarray:
    """Per-element weight v(rank) = 1/(1+rank), rank 0-based by
    decreasing value; tied elements share v of their mean tied position.

    Accepts a vector or a (groups, n) stack; weights are computed
    row-wise for stacks.
    """
    values = np.asarray(values, dtype=np.float64)
    single = values.ndim == 1
    rows = values[None, :] if single else values
    ranks = _descending_ranks(rows)
    out = 1.0 / (1.0 + ranks)
    return out[0] if single else out


def _descending_ranks(rows: np.ndarray) -> np.ndarray:
    """0-based ranks by decreasing value, row-wise, mean rank on ties."""
    g, n = rows.shape
    order = np.argsort(-rows, axis=1, kind="stable")
    sorted_vals = np.take_along_axis(rows, order, axis=1)
    # mean position of each tied run, propagated to every run member
    new_run = np.ones((g, n), dtype=bool)
    new_run[:, 1:] = sorted_vals[:, 1:] != sorted_vals[:, :-1]
    run_id = np.cumsum(new_run, axis=1) - 1
    positions = np.arange(n, dtype=np.float64)
    row_off = np.arange(g)[:, None] * n
    flat_id = (run_id + row_off).ravel()
    sums = np.bincount(flat_id, weights=np.broadcast_to(positions, (g, n)).ravel(),
                       minlength=g * n)
    counts = np.bincount(flat_id, minlength=g * n)
    mean_pos = (sums[flat_id] / counts[flat_id]).reshape(g, n)
    ranks = np.empty((g, n))
    np.put_along_axis(ranks, order, mean_pos, axis=1)
    return ranks


def _tau_sums_stack(xs: np.ndarray, ys: np.ndarray, weighted: bool):
    """Per-row (numerator, denominator) of the pairwise double sum
    over i<j with pair weight cx[i]+cx[j]+cy[i]+cy[j]."""
    g, n = xs.shape
    iu, ju = _pairs(n)
    sgn = np.sign(xs[:, iu] - xs[:, ju]) * np.sign(ys[:, iu] - ys[:, ju])
    if weighted:
        cx = hyperbolic_rank_weights(xs)
        cy = hyperbolic_rank_weights(ys)
        # parenthesized so that swapping x and y gives bitwise-equal sums
        w = (cx[:, iu] + cx[:, ju]) + (cy[:, iu] + cy[:, ju])
        return np.sum(w * sgn, axis=1), np.sum(w, axis=1)
    num = np.sum(sgn, axis=1)
    den = np.full(g, n * (n - 1) / 2.0)
    return num, den


def pearson_r(x, y) -> float:
    """Linear correlation cov(x, y) / (sd(x) sd(y))."""
    x, y = _as_vectors(x, y)
    sx = x.std()
    sy = y.std()
    if sx == 0.0 or sy == 0.0:
        raise StatisticsError("pearson correlation undefined: zero variance")
    cov = float(np.mean((x - x.mean()) * (y - y.mean())))
    return cov / float(sx * sy)


def kendall_tau(x, y) -> TauResult:
    """Unweighted Kendall tau; ties contribute 0 to the numerator but
    all n(n-1)/2 pairs stay in the denominator."""
    x, y = _as_vectors(x, y)
    num, den = _tau_sums_stack(x[None, :], y[None, :], weighted=False)
    return TauResult(float(num[0] / den[0]), float(num[0]), float(den[0]))


def weighted_tau(x, y) -> TauResult:
    """Kendall tau with hyperbolic rank weights on both vectors."""
    x, y = _as_vectors(x, y)
    num, den = _tau_sums_stack(x[None, :], y[None, :], weighted=True)
    return TauResult(float(num[0] / den[0]), float(num[0]), float(den[0]))


def _group_sums(g: GroupedSeries) -> tuple[np.ndarray, np.ndarray]:
    sizes = {x.size for _, x, _ in g}
    if len(sizes) == 1:
        xs = np.stack([x for _, x, _ in g])
        ys = np.stack([y for _, _, y in g])
        return _tau_sums_stack(xs, ys, weighted=True)
    nums, dens = [], []
    for _, x, y in g:
        num, den = _tau_sums_stack(x[None, :], y[None, :], weighted=True)
        nums.append(num[0])
        dens.append(den[0])
    return np.asarray(nums), np.asarray(dens)


def aggregated_weighted_tau(g: GroupedSeries) -> TauResult:
    """Pooled weighted tau: sum of per-group numerators over sum of
    per-group denominators, ranks computed within each group."""
    if len(g) == 0:
        raise ValidationError("aggregated tau needs at least one group")
    nums, dens = _group_sums(g)
    num, den = float(nums.sum()), float(dens.sum())
    return TauResult(num / den, num, den)


def averaged_weighted_tau(g: GroupedSeries) -> float:
    """Arithmetic mean of the per-group weighted taus."""
    if len(g) == 0:
        raise ValidationError("averaged tau needs at least one group")
    nums, dens = _group_sums(g)
    return float(np.mean(nums / dens))


# ---------------------------------------------------------------------------
# bootstrap

def _check_single_group(g: GroupedSeries) -> None:
    if len(g) != 1:
        raise ValidationError(
            "this statistic is defined on a single group; got "
            f"{len(g)} groups (use the aggregated or averaged form)"
        )


def _point_estimate(g: GroupedSeries, stat: str) -> float:
    if stat == "tau":
        _check_single_group(g)
        _, x, y = g.groups[0]
        return kendall_tau(x, y).value
    if stat == "weighted_tau":
        _check_single_group(g)
        _, x, y = g.groups[0]
        return weighted_tau(x, y).value
    if stat == "pearson":
        _check_single_group(g)
        _, x, y = g.groups[0]
        return pearson_r(x, y)
    if stat == "aggregated_weighted_tau":
        return aggregated_weighted_tau(g).value
    if stat == "averaged_weighted_tau":
        return averaged_weighted_tau(g)
    raise ValidationError(f"unknown statistic {stat!r}; choose from {STATISTICS}")


def _resample_stack(xs, ys, rng) -> tuple[np.ndarray, np.ndarray]:
    g, n = xs.shape
    idx = rng.integers(0, n, size=(g, n))
    return np.take_along_axis(xs, idx, axis=1), np.take_along_axis(ys, idx, axis=1)


def _draw_equal(stat, xs, ys, rng) -> float:
    """One bootstrap draw for equal-sized groups, fully vectorized."""
    rx, ry = _resample_stack(xs, ys, rng)
    if stat == "pearson":
        x, y = rx[0], ry[0]
        sx, sy = x.std(), y.std()
        if sx == 0.0 or sy == 0.0:
            raise StatisticsError("degenerate resample")
        return float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
    if stat == "tau":
        num, den = _tau_sums_stack(rx, ry, weighted=False)
        return float(num[0] / den[0])
    num, den = _tau_sums_stack(rx, ry, weighted=True)
    if stat == "weighted_tau":
        return float(num[0] / den[0])
    if stat == "aggregated_weighted_tau":
        total = float(den.sum())
        if total == 0.0:
            raise StatisticsError("degenerate resample")
        return float(num.sum() / total)
    # averaged_weighted_tau
    if np.any(den == 0.0):
        raise StatisticsError("degenerate resample")
    return float(np.mean(num / den))


def _draw_ragged(stat, groups, rng) -> float:
    resampled = []
    for x, y in groups:
        idx = rng.integers(0, x.size, size=x.size)
        resampled.append((x[idx], y[idx]))
    if stat in ("tau", "weighted_tau", "pearson"):
        x, y = resampled[0]
        if stat == "pearson":
            return pearson_r(x, y)
        weighted = stat == "weighted_tau"
        num, den = _tau_sums_stack(x[None, :], y[None, :], weighted=weighted)
        return float(num[0] / den[0])
    nums, dens = [], []
    for x, y in resampled:
        num, den = _tau_sums_stack(x[None, :], y[None, :], weighted=True)
        nums.append(float(num[0]))
        dens.append(float(den[0]))
    if stat == "aggregated_weighted_tau":
        total = sum(dens)
        if total == 0.0:
            raise StatisticsError("degenerate resample")
        return sum(nums) / total
    if any(d == 0.0 for d in dens):
        raise StatisticsError("degenerate resample")
    return float(np.mean([n / d for n, d in zip(nums, dens)]))


def bootstrap(
    g: GroupedSeries,
    stat: str,
    iterations: int = 1000,
    seed: int = 0,
) -> BootstrapSummary:
    """Stratified bootstrap of a rank statistic.

    Each iteration resamples with replacement independently within every
    group, keeping group sizes fixed, then evaluates the statistic.
    Iteration i draws from a Philox counter-based stream keyed by
    (seed, i), so the draws are reproducible and independent of any
    evaluation order.  Resamples on which the statistic is undefined are
    counted and excluded.  The interval is the 2.5/97.5 percentile of
    the retained draws.
    """
    if iterations < 1:
        raise ValidationError("iterations must be >= 1")
    point = float(_point_estimate(g, stat))

    sizes = {x.size for _, x, _ in g}
    equal = len(sizes) == 1
    if equal:
        xs = np.stack([x for _, x, _ in g])
        ys = np.stack([y for _, _, y in g])
    else:
        groups = [(x, y) for _, x, y in g]

    draws = []
    n_degenerate = 0
    for i in range(iterations):
        rng = np.random.Generator(np.random.Philox(key=[seed, i]))
        try:
            if equal:
                draws.append(_draw_equal(stat, xs, ys, rng))
            else:
                draws.append(_draw_ragged(stat, groups, rng))
        except StatisticsError:
            n_degenerate += 1
    if not draws:
        raise StatisticsError(
            f"all {iterations} bootstrap resamples were degenerate for {stat!r}"
        )
    arr = np.asarray(draws)
    ci_low, ci_high = np.percentile(arr, [2.5, 97.5])
    return BootstrapSummary(
        point=point,
        draws=arr,
        mean=float(arr.mean()),
        ci_low=float(ci_low),
        ci_high=float(ci_high),
        n_degenerate=n_degenerate,
    )
