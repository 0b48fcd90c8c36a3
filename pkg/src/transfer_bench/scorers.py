"""Transferability scorers computed from extracted features.

Each scorer maps a :class:`~transfer_bench.data.FeatureSet` to a single
real score oriented so that larger means more transferable.  The label
based scorers (nce, leep) additionally need the source-probability
matrix; all others work from features and target labels alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .data import FeatureSet
from .errors import StatisticsError, TransferBenchError, ValidationError

SV_CUTOFF = 1e-10  # relative singular-value cutoff for pseudo-inverses
VAR_FLOOR = 1e-8  # per-dimension variance floor for Gaussian fits


@dataclass(frozen=True)
class ScoreRecord:
    """A raw scorer output; all scorers here are higher-is-better."""

    scorer: str
    value: float
    higher_is_better: bool = True

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise StatisticsError(f"{self.scorer}: non-finite score {self.value}")


def _check_classes(fs: FeatureSet, minimum: int = 2) -> None:
    if fs.n_samples == 0:
        raise ValidationError("empty feature set")
    if fs.n_classes < minimum:
        raise ValidationError(f"need at least {minimum} classes, got {fs.n_classes}")


def _class_stats(fs: FeatureSet):
    """Class means, per-class counts, and the global mean."""
    k = fs.n_classes
    counts = np.bincount(fs.labels, minlength=k).astype(np.float64)
    means = np.zeros((k, fs.n_features))
    for c in range(k):
        means[c] = fs.features[fs.labels == c].mean(axis=0)
    return means, counts, fs.features.mean(axis=0)


def _between_class_cov(fs: FeatureSet) -> np.ndarray:
    """Covariance of class-conditional means, weighted by class frequency."""
    means, counts, grand = _class_stats(fs)
    centered = means - grand
    return (centered * (counts / fs.n_samples)[:, None]).T @ centered


def _feature_cov(features: np.ndarray) -> np.ndarray:
    centered = features - features.mean(axis=0)
    return centered.T @ centered / features.shape[0]


def h_score(fs: FeatureSet) -> ScoreRecord:
    """Inter-class over total feature variance: tr(pinv(cov_f) cov_b)."""
    _check_classes(fs)
    cov_f = _feature_cov(fs.features)
    cov_b = _between_class_cov(fs)
    value = float(np.trace(np.linalg.pinv(cov_f, rcond=SV_CUTOFF) @ cov_b))
    return ScoreRecord("h_score", value)


def ledoit_wolf_shrinkage(features: np.ndarray) -> float:
    """Closed-form Ledoit-Wolf shrinkage coefficient, clipped to [0, 1]."""
    n, d = features.shape
    centered = features - features.mean(axis=0)
    cov = centered.T @ centered / n
    mu = np.trace(cov) / d
    delta = float(((cov - mu * np.eye(d)) ** 2).sum()) / d
    if delta == 0.0:
        return 0.0
    sq = centered**2
    beta = float((sq.T @ sq / n - cov**2).sum()) / (d * n)
    return min(1.0, max(0.0, min(beta, delta) / delta))


def regularized_h_score(fs: FeatureSet, shrinkage: float | None = None) -> ScoreRecord:
    """H-score with the feature covariance shrunk toward a scaled identity.

    ``shrinkage`` overrides the Ledoit-Wolf coefficient when given (used
    by tests; 0 recovers the plain h-score).
    """
    _check_classes(fs)
    cov_f = _feature_cov(fs.features)
    lam = ledoit_wolf_shrinkage(fs.features) if shrinkage is None else float(shrinkage)
    target = (np.trace(cov_f) / fs.n_features) * np.eye(fs.n_features)
    shrunk = (1.0 - lam) * cov_f + lam * target
    cov_b = _between_class_cov(fs)
    value = float(np.trace(np.linalg.pinv(shrunk, rcond=SV_CUTOFF) @ cov_b))
    return ScoreRecord("reg_h_score", value)


def _log_evidence(n, d, s2, z, rho2, alpha, beta):
    """Log marginal likelihood of Bayesian ridge regression at (alpha, beta),
    expressed through the design matrix SVD (s2 = squared singular values,
    z = left-basis projection of the target, rho2 = off-span residual)."""
    denom = alpha + beta * s2
    m2 = float(np.sum(beta**2 * s2 * z**2 / denom**2))
    res2 = float(np.sum(z**2 * (alpha / denom) ** 2)) + rho2
    logdet = float(np.sum(np.log(denom))) + (d - s2.size) * math.log(alpha)
    ev = 0.5 * (
        d * math.log(alpha)
        + n * math.log(beta)
        - n * math.log(2.0 * math.pi)
        - beta * res2
        - alpha * m2
        - logdet
    )
    return ev, m2, res2


def _maximize_evidence(n, d, s2, z, rho2, tol=1e-5, max_iter=100):
    """Fixed-point iteration on (alpha, beta) for the evidence above."""
    alpha = beta = 1.0
    ev, m2, res2 = _log_evidence(n, d, s2, z, rho2, alpha, beta)
    for _ in range(max_iter):
        gamma = float(np.sum(beta * s2 / (alpha + beta * s2)))
        if m2 > 1e-300:
            alpha = gamma / m2
        if res2 > 1e-300:
            beta = (n - gamma) / res2
        new_ev, m2, res2 = _log_evidence(n, d, s2, z, rho2, alpha, beta)
        if abs(new_ev - ev) <= tol * max(1.0, abs(ev)):
            ev = new_ev
            break
        ev = new_ev
    return ev


def logme(fs: FeatureSet) -> ScoreRecord:
    """Mean per-class log maximum evidence of a Bayesian linear model
    fitted to each one-vs-all target, normalized by sample count."""
    _check_classes(fs)
    n, d = fs.features.shape
    try:
        u, s, _ = np.linalg.svd(fs.features, full_matrices=False)
    except np.linalg.LinAlgError as e:
        raise StatisticsError(f"logme: SVD failed ({e})") from e
    s2 = s**2
    evidences = []
    for c in range(fs.n_classes):
        y = (fs.labels == c).astype(np.float64)
        z = u.T @ y
        rho2 = max(float(y @ y - z @ z), 0.0)
        evidences.append(_maximize_evidence(n, d, s2, z, rho2))
    return ScoreRecord("logme", float(np.mean(evidences) / n))


def nce(fs: FeatureSet) -> ScoreRecord:
    """Negative conditional entropy -H(target | argmax source class)."""
    if fs.source_probs is None:
        raise ValidationError("nce requires source probabilities")
    z = fs.source_probs.argmax(axis=1)
    n = fs.n_samples
    joint: dict[tuple[int, int], int] = {}
    for zi, yi in zip(z, fs.labels):
        joint[(int(zi), int(yi))] = joint.get((int(zi), int(yi)), 0) + 1
    pz: dict[int, float] = {}
    for (zi, _), cnt in joint.items():
        pz[zi] = pz.get(zi, 0.0) + cnt / n
    score = 0.0
    for (zi, _), cnt in joint.items():
        p_joint = cnt / n
        score += p_joint * math.log(p_joint / pz[zi])
    return ScoreRecord("nce", score)


def leep(fs: FeatureSet) -> ScoreRecord:
    """Mean log-likelihood of the target labels under an idealized
    classifier built from the empirical source/target joint."""
    if fs.source_probs is None:
        raise ValidationError("leep requires source probabilities")
    n = fs.n_samples
    k = fs.n_classes
    onehot = np.zeros((n, k))
    onehot[np.arange(n), fs.labels] = 1.0
    joint = onehot.T @ fs.source_probs / n  # (K, C)
    pc = joint.sum(axis=0)
    live = pc > 0.0  # source classes with zero marginal are excluded
    cond = joint[:, live] / pc[live]
    per_sample = np.sum(cond[fs.labels] * fs.source_probs[:, live], axis=1)
    with np.errstate(divide="ignore"):
        value = float(np.mean(np.log(per_sample)))
    if not math.isfinite(value):
        raise StatisticsError("leep: a sample has zero likelihood")
    return ScoreRecord("leep", value)


def gbc(fs: FeatureSet) -> ScoreRecord:
    """Negative summed Bhattacharyya overlap between per-class diagonal
    Gaussian fits; closer to 0 means better-separated classes."""
    _check_classes(fs)
    k = fs.n_classes
    counts = np.bincount(fs.labels, minlength=k)
    small = np.nonzero(counts < 2)[0]
    if small.size:
        raise ValidationError(
            f"gbc: class {fs.label_names[small[0]]!r} has {counts[small[0]]} "
            "samples, need at least 2"
        )
    means = np.zeros((k, fs.n_features))
    variances = np.zeros((k, fs.n_features))
    for c in range(k):
        rows = fs.features[fs.labels == c]
        means[c] = rows.mean(axis=0)
        variances[c] = np.maximum(rows.var(axis=0), VAR_FLOOR)
    total = 0.0
    for a in range(k):
        for b in range(a + 1, k):
            avg = 0.5 * (variances[a] + variances[b])
            db = float(
                np.sum(
                    (means[a] - means[b]) ** 2 / (8.0 * avg)
                    + 0.5 * np.log(avg / np.sqrt(variances[a] * variances[b]))
                )
            )
            total += math.exp(-db)
    return ScoreRecord("gbc", -total)


def parc(fs: FeatureSet) -> ScoreRecord:
    """Spearman correlation between pairwise feature dissimilarities and
    pairwise label dissimilarities (1 - Pearson, computed across rows)."""
    _check_classes(fs)
    n = fs.n_samples
    if n < 3:
        raise ValidationError("parc needs at least 3 samples")
    row_sd = fs.features.std(axis=1)
    dead = np.nonzero(row_sd == 0.0)[0]
    if dead.size:
        raise ValidationError(
            f"parc: feature row {dead[0]} has zero variance, correlation undefined"
        )
    onehot = np.zeros((n, fs.n_classes))
    onehot[np.arange(n), fs.labels] = 1.0
    iu = np.triu_indices(n, k=1)
    dist_f = (1.0 - np.corrcoef(fs.features))[iu]
    dist_y = (1.0 - np.corrcoef(onehot))[iu]
    rf = rankdata(dist_f)
    ry = rankdata(dist_y)
    if rf.std() == 0.0 or ry.std() == 0.0:
        raise StatisticsError("parc: all pairwise dissimilarities tied")
    value = float(np.corrcoef(rf, ry)[0, 1])
    return ScoreRecord("parc", value)


SCORERS = {
    "h_score": h_score,
    "reg_h_score": regularized_h_score,
    "logme": logme,
    "nce": nce,
    "leep": leep,
    "gbc": gbc,
    "parc": parc,
}


def score_all(fs: FeatureSet, which) -> list[ScoreRecord]:
    """Evaluate the requested scorers in order; errors carry the scorer id."""
    records = []
    for name in which:
        if name not in SCORERS:
            raise ValidationError(
                f"unknown scorer {name!r}; available: {', '.join(sorted(SCORERS))}"
            )
        try:
            records.append(SCORERS[name](fs))
        except TransferBenchError as e:
            raise type(e)(f"{name}: {e}") from e
    return records
