"""Convergence diagnostics for multi-chain draws.

Implements the rank-normalized split R-hat and bulk effective sample
size of Vehtari et al. (2021): chains are split in half, draws are
mapped through normal quantiles of their average ranks, and the usual
between/within-chain variance ratio (for R-hat) or Geyer initial
monotone autocorrelation sum (for ESS) is computed on the transformed
chains.  Degenerate inputs (constant draws) yield NaN and are reported
as flagged rather than raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm, rankdata

from ..errors import ValidationError

RHAT_THRESHOLD = 1.01
ESS_THRESHOLD = 400.0


@dataclass(frozen=True)
class DiagnosticsReport:
    """Per-parameter R-hat and bulk ESS, with threshold flags."""

    names: tuple[str, ...]
    rhat: np.ndarray
    ess: np.ndarray
    flagged: tuple[str, ...]

    @property
    def max_rhat(self) -> float:
        finite = self.rhat[np.isfinite(self.rhat)]
        return float(finite.max()) if finite.size else float("nan")

    @property
    def min_ess(self) -> float:
        finite = self.ess[np.isfinite(self.ess)]
        return float(finite.min()) if finite.size else float("nan")

    @property
    def ok(self) -> bool:
        return not self.flagged


def _split_chains(chains: np.ndarray) -> np.ndarray:
    half = chains.shape[1] // 2
    return np.vstack((chains[:, :half], chains[:, -half:]))


def _z_scale(chains: np.ndarray) -> np.ndarray:
    ranks = rankdata(chains, method="average").reshape(chains.shape)
    return norm.ppf((ranks - 0.5) / chains.size)


def _rhat_of(chains: np.ndarray) -> float:
    n = chains.shape[1]
    chain_mean = chains.mean(axis=1)
    chain_var = chains.var(axis=1, ddof=1)
    between = n * np.var(chain_mean, ddof=1)
    within = np.mean(chain_var)
    if within == 0.0:
        return float("nan")
    return float(np.sqrt((between / within + n - 1.0) / n))


def split_rhat(chains: np.ndarray) -> float:
    """Rank-normalized split R-hat of one parameter's (chains, draws)."""
    chains = np.asarray(chains, dtype=np.float64)
    if np.ptp(chains) == 0.0:
        return float("nan")
    bulk = _rhat_of(_z_scale(_split_chains(chains)))
    folded = np.abs(chains - np.median(chains))
    tail = _rhat_of(_z_scale(_split_chains(folded)))
    return max(bulk, tail)


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.size
    centered = x - x.mean()
    nfft = 1 << (2 * n - 1).bit_length()
    freq = np.fft.rfft(centered, nfft)
    return np.fft.irfft(freq * np.conj(freq))[:n].real / n


def _ess_of(chains: np.ndarray) -> float:
    """Geyer initial-monotone-sequence ESS of (chains, draws)."""
    n_chain, n_draw = chains.shape
    if n_draw < 4:
        return float("nan")
    acov = np.asarray([_autocov(chains[c]) for c in range(n_chain)])
    chain_mean = chains.mean(axis=1)
    mean_var = float(np.mean(acov[:, 0])) * n_draw / (n_draw - 1.0)
    var_plus = mean_var * (n_draw - 1.0) / n_draw
    if n_chain > 1:
        var_plus += float(np.var(chain_mean, ddof=1))
    if var_plus == 0.0:
        return float("nan")

    rho = np.zeros(n_draw)
    rho[0] = 1.0
    rho_even = 1.0
    rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, 1]))) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n_draw - 2 and (rho_even + rho_odd) >= 0.0:
        rho_even = 1.0 - (mean_var - float(np.mean(acov[:, t + 1]))) / var_plus
        rho_odd = 1.0 - (mean_var - float(np.mean(acov[:, t + 2]))) / var_plus
        rho[t + 1] = rho_even
        if rho_even + rho_odd >= 0.0:
            rho[t + 2] = rho_odd
        t += 2
    max_t = t
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    tau = -1.0 + 2.0 * float(np.sum(rho[:max_t])) + float(np.sum(rho[max_t + 1 : max_t + 2]))
    if np.isnan(rho).any() or tau <= 0.0:
        return float("nan")
    return n_chain * n_draw / tau


def ess_bulk(chains: np.ndarray) -> float:
    """Bulk ESS: ESS of the rank-normalized split chains."""
    chains = np.asarray(chains, dtype=np.float64)
    if np.ptp(chains) == 0.0:
        return float("nan")
    return _ess_of(_z_scale(_split_chains(chains)))


def diagnose(names, chains_by_param: np.ndarray) -> DiagnosticsReport:
    """Diagnostics for an array of draws shaped (chains, draws, params).

    Parameters whose R-hat exceeds 1.01, whose bulk ESS falls below 400,
    or whose diagnostics are undefined (constant draws) are flagged.
    """
    arr = np.asarray(chains_by_param, dtype=np.float64)
    if arr.ndim != 3:
        raise ValidationError("expected draws shaped (chains, draws, params)")
    n_chain, n_draw, n_param = arr.shape
    if n_chain < 2:
        raise ValidationError("diagnostics need at least 2 chains")
    if n_draw < 4:
        raise ValidationError("diagnostics need at least 4 draws per chain")
    if len(names) != n_param:
        raise ValidationError("one name per parameter required")
    rhat = np.empty(n_param)
    ess = np.empty(n_param)
    flagged = []
    for j in range(n_param):
        chains = arr[:, :, j]
        rhat[j] = split_rhat(chains)
        ess[j] = ess_bulk(chains)
        bad = (
            not np.isfinite(rhat[j])
            or not np.isfinite(ess[j])
            or rhat[j] > RHAT_THRESHOLD
            or ess[j] < ESS_THRESHOLD
        )
        if bad:
            flagged.append(names[j])
    return DiagnosticsReport(
        names=tuple(names), rhat=rhat, ess=ess, flagged=tuple(flagged)
    )
