"""Three-level hierarchical regression of metrics on scorer outputs.

Per (scorer, dataset) cell the normalized metric follows a linear
regression on the normalized score with its own intercept, slope, and
noise scale.  Cell parameters pool toward per-scorer locations/scales,
and per-scorer parameters pool toward global ones:

    level 1:  m ~ N(alpha[s,d] + beta[s,d] * t, sigma[s,d])
              alpha[s,d] ~ N(mu_alpha[s], sigma_alpha[s])
              beta[s,d]  ~ N(mu_beta[s],  sigma_beta[s])
              sigma[s,d] ~ Exp(scale = sigma[s])
    level 2:  mu_alpha[s] ~ N(mu_alpha, sigma_alpha)
              mu_beta[s]  ~ N(mu_beta,  sigma_beta)
              sigma_alpha[s] ~ Exp(scale = sigma_alpha)   (same for beta)
              sigma[s]       ~ Exp(scale = sigma)
    level 3:  mu_alpha, mu_beta ~ N(0, 1)
              sigma_alpha, sigma_beta, sigma ~ Exp(scale = 1)

The sampler works in unconstrained coordinates: every scale is stored
as its log (with the +log-scale Jacobian term), and every Gaussian
location below level 3 is stored non-centered as a standardized offset
(alpha[s,d] = mu_alpha[s] + sigma_alpha[s] * z).  This keeps the
posterior geometry close to an isotropic Gaussian even when the data
pin hierarchy scales near zero.

The density core is batched: evaluating B points costs barely more
than one, which is how multiple chains run in lockstep on one core.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data import TupleTable
from ..errors import ValidationError

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelSpec:
    """Scorer/dataset index space plus the fixed top-level prior constants."""

    scorers: tuple[str, ...]
    datasets: tuple[str, ...]
    loc_mean: float = 0.0  # level-3 Gaussian location
    loc_sd: float = 1.0  # level-3 Gaussian scale
    scale_scale: float = 1.0  # level-3 exponential scale

    def __post_init__(self):
        if len(self.scorers) < 1 or len(self.datasets) < 1:
            raise ValidationError("model needs at least one scorer and one dataset")
        if len(set(self.scorers)) != len(self.scorers):
            raise ValidationError("duplicate scorer ids")
        if len(set(self.datasets)) != len(self.datasets):
            raise ValidationError("duplicate dataset ids")

    @property
    def n_scorers(self) -> int:
        return len(self.scorers)

    @property
    def n_datasets(self) -> int:
        return len(self.datasets)

    def scorer_index(self, scorer: str) -> int:
        try:
            return self.scorers.index(scorer)
        except ValueError:
            raise ValidationError(f"scorer {scorer!r} unknown to the model") from None

    def dataset_index(self, dataset: str) -> int:
        try:
            return self.datasets.index(dataset)
        except ValueError:
            raise ValidationError(f"dataset {dataset!r} unknown to the model") from None

    @classmethod
    def from_table(cls, table: TupleTable) -> "ModelSpec":
        if len(table) == 0:
            raise ValidationError("cannot infer a model spec from an empty table")
        return cls(scorers=table.scorers, datasets=table.datasets)


class ParamLayout:
    """Index bookkeeping for the flat unconstrained parameter vector.

    Unconstrained order: the 5 global coordinates, the 5 per-scorer
    blocks, then the 3 per-cell blocks (each cell block is row-major
    scorer x dataset).  ``constrain``/``unconstrain`` are exact inverses.
    """

    def __init__(self, spec: ModelSpec):
        s, d = spec.n_scorers, spec.n_datasets
        self.spec = spec
        self.n_cells = s * d
        self.i_mu_a, self.i_mu_b, self.i_la, self.i_lb, self.i_ls = range(5)
        off = 5
        self.sl_zma = slice(off, off + s)
        self.sl_zmb = slice(off + s, off + 2 * s)
        self.sl_las = slice(off + 2 * s, off + 3 * s)
        self.sl_lbs = slice(off + 3 * s, off + 4 * s)
        self.sl_lss = slice(off + 4 * s, off + 5 * s)
        off += 5 * s
        sd = self.n_cells
        self.sl_za = slice(off, off + sd)
        self.sl_zb = slice(off + sd, off + 2 * sd)
        self.sl_lsd = slice(off + 2 * sd, off + 3 * sd)
        self.dim = off + 3 * sd

        names = ["mu_alpha", "mu_beta", "sigma_alpha", "sigma_beta", "sigma"]
        names += [f"mu_alpha[{x}]" for x in spec.scorers]
        names += [f"mu_beta[{x}]" for x in spec.scorers]
        names += [f"sigma_alpha[{x}]" for x in spec.scorers]
        names += [f"sigma_beta[{x}]" for x in spec.scorers]
        names += [f"sigma[{x}]" for x in spec.scorers]
        for kind in ("alpha", "beta", "sigma"):
            names += [
                f"{kind}[{x},{y}]" for x in spec.scorers for y in spec.datasets
            ]
        self.constrained_names = tuple(names)

    def constrain(self, theta: np.ndarray) -> np.ndarray:
        """Map unconstrained coordinates to the model parameters, in the
        order of ``constrained_names``.  Accepts a single vector or a
        batch shaped (B, dim)."""
        theta = np.asarray(theta, dtype=np.float64)
        single = theta.ndim == 1
        batch = theta[None, :] if single else theta
        if batch.shape[1] != self.dim:
            raise ValidationError(f"expected parameter vector of length {self.dim}")
        d = self.spec.n_datasets
        mu_a, mu_b = batch[:, self.i_mu_a], batch[:, self.i_mu_b]
        sig_a = np.exp(batch[:, self.i_la])
        sig_b = np.exp(batch[:, self.i_lb])
        sig = np.exp(batch[:, self.i_ls])
        mu_as = mu_a[:, None] + sig_a[:, None] * batch[:, self.sl_zma]
        mu_bs = mu_b[:, None] + sig_b[:, None] * batch[:, self.sl_zmb]
        sas = np.exp(batch[:, self.sl_las])
        sbs = np.exp(batch[:, self.sl_lbs])
        sss = np.exp(batch[:, self.sl_lss])
        rep = lambda a: np.repeat(a, d, axis=1)  # noqa: E731
        alpha = rep(mu_as) + rep(sas) * batch[:, self.sl_za]
        beta = rep(mu_bs) + rep(sbs) * batch[:, self.sl_zb]
        sigma_sd = np.exp(batch[:, self.sl_lsd])
        out = np.concatenate(
            [
                mu_a[:, None], mu_b[:, None], sig_a[:, None], sig_b[:, None],
                sig[:, None], mu_as, mu_bs, sas, sbs, sss, alpha, beta, sigma_sd,
            ],
            axis=1,
        )
        return out[0] if single else out

    def unconstrain(self, constrained: np.ndarray) -> np.ndarray:
        """Exact inverse of :meth:`constrain` for a single vector."""
        c = np.asarray(constrained, dtype=np.float64)
        s, d = self.spec.n_scorers, self.spec.n_datasets
        if c.shape != (5 + 5 * s + 3 * s * d,):
            raise ValidationError("constrained vector has the wrong length")
        mu_a, mu_b, sig_a, sig_b, sig = c[:5]
        off = 5
        mu_as = c[off : off + s]
        mu_bs = c[off + s : off + 2 * s]
        sas = c[off + 2 * s : off + 3 * s]
        sbs = c[off + 3 * s : off + 4 * s]
        sss = c[off + 4 * s : off + 5 * s]
        off += 5 * s
        sd = s * d
        alpha = c[off : off + sd]
        beta = c[off + sd : off + 2 * sd]
        sigma_sd = c[off + 2 * sd : off + 3 * sd]
        theta = np.empty(self.dim)
        theta[self.i_mu_a] = mu_a
        theta[self.i_mu_b] = mu_b
        theta[self.i_la] = np.log(sig_a)
        theta[self.i_lb] = np.log(sig_b)
        theta[self.i_ls] = np.log(sig)
        theta[self.sl_zma] = (mu_as - mu_a) / sig_a
        theta[self.sl_zmb] = (mu_bs - mu_b) / sig_b
        theta[self.sl_las] = np.log(sas)
        theta[self.sl_lbs] = np.log(sbs)
        theta[self.sl_lss] = np.log(sss)
        theta[self.sl_za] = (alpha - np.repeat(mu_as, d)) / np.repeat(sas, d)
        theta[self.sl_zb] = (beta - np.repeat(mu_bs, d)) / np.repeat(sbs, d)
        theta[self.sl_lsd] = np.log(sigma_sd)
        return theta


class HierarchicalModel:
    """Log posterior (and exact gradient) of the model bound to a table.

    The table must be z-normalized; tuples missing a metric are
    rejected.  An empty table is allowed and yields the prior.
    """

    def __init__(self, spec: ModelSpec, table: TupleTable | None = None):
        self.spec = spec
        self.layout = ParamLayout(spec)
        if table is None or len(table) == 0:
            t = np.empty(0)
            m = np.empty(0)
            cell = np.empty(0, dtype=np.int64)
        else:
            if not table.normalized:
                raise ValidationError("model data must be z-normalized first")
            t_list, m_list, cell_list = [], [], []
            d = spec.n_datasets
            for tup in table:
                if tup.metric is None:
                    raise ValidationError(
                        f"tuple {tup.key} has no metric; calibration needs ground truth"
                    )
                t_list.append(tup.score)
                m_list.append(tup.metric)
                cell_list.append(
                    spec.scorer_index(tup.scorer) * d + spec.dataset_index(tup.dataset)
                )
            t = np.asarray(t_list)
            m = np.asarray(m_list)
            cell = np.asarray(cell_list, dtype=np.int64)
        self._t = t
        self._m = m
        self._cell = cell
        self._n_obs = t.size
        n_cells = self.layout.n_cells
        self._cell_counts = np.bincount(cell, minlength=n_cells).astype(np.float64)
        # dense observation->cell indicator, used to batch scatter sums
        self._indicator = np.zeros((t.size, n_cells))
        if t.size:
            self._indicator[np.arange(t.size), cell] = 1.0
        self._indicator_t = self._indicator * t[:, None] if t.size else self._indicator

    @property
    def dim(self) -> int:
        return self.layout.dim

    @property
    def n_observations(self) -> int:
        return self._n_obs

    def log_posterior(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        """Unnormalized log posterior in unconstrained space and its
        analytic gradient.  Includes all Gaussian/exponential prior terms
        and the log-Jacobians of the log transforms; returns -inf (with a
        zero gradient) where a scale overflows or the density is
        otherwise undefined."""
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.layout.dim,):
            raise ValidationError(
                f"expected parameter vector of length {self.layout.dim}"
            )
        if not np.all(np.isfinite(theta)):
            raise ValidationError("non-finite parameter value")
        lp, grad = self.log_posterior_batch(theta[None, :])
        return float(lp[0]), grad[0]

    def log_posterior_batch(self, batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`log_posterior` over rows of ``batch``.

        Rows containing non-finite coordinates, or where the density is
        undefined, yield -inf with a zero gradient row (no exception);
        the sampler treats such rows as divergent.
        """
        lt = self.layout
        spec = self.spec
        s, d = spec.n_scorers, spec.n_datasets
        batch = np.asarray(batch, dtype=np.float64)
        b = batch.shape[0]

        with np.errstate(all="ignore"):
            mu_a, mu_b = batch[:, lt.i_mu_a], batch[:, lt.i_mu_b]
            la, lb, ls = batch[:, lt.i_la], batch[:, lt.i_lb], batch[:, lt.i_ls]
            zma, zmb = batch[:, lt.sl_zma], batch[:, lt.sl_zmb]
            las, lbs, lss = batch[:, lt.sl_las], batch[:, lt.sl_lbs], batch[:, lt.sl_lss]
            za, zb, lsd = batch[:, lt.sl_za], batch[:, lt.sl_zb], batch[:, lt.sl_lsd]

            sig_a, sig_b, sig = np.exp(la), np.exp(lb), np.exp(ls)
            sas, sbs, sss = np.exp(las), np.exp(lbs), np.exp(lss)
            ssd = np.exp(lsd)

            mu_as = mu_a[:, None] + sig_a[:, None] * zma
            mu_bs = mu_b[:, None] + sig_b[:, None] * zmb
            alpha = (mu_as[:, :, None] + sas[:, :, None] * za.reshape(b, s, d)).reshape(b, -1)
            beta = (mu_bs[:, :, None] + sbs[:, :, None] * zb.reshape(b, s, d)).reshape(b, -1)

            if self._n_obs:
                cell = self._cell
                sf2 = np.square(ssd[:, cell])
                resid = self._m - alpha[:, cell] - beta[:, cell] * self._t
                w = resid / sf2
                ll = (
                    -(lsd @ self._cell_counts)
                    - 0.5 * self._n_obs * LOG_2PI
                    - 0.5 * np.einsum("bn,bn->b", w, resid)
                )
                g_alpha = w @ self._indicator
                g_beta = w @ self._indicator_t
                g_lsd_lik = (w * resid) @ self._indicator - self._cell_counts
            else:
                ll = np.zeros(b)
                g_alpha = np.zeros((b, lt.n_cells))
                g_beta = np.zeros((b, lt.n_cells))
                g_lsd_lik = np.zeros((b, lt.n_cells))

            # priors: standard-normal offsets and level-3 locations
            loc_mean, loc_sd = spec.loc_mean, spec.loc_sd
            z_sq = (
                np.einsum("bk,bk->b", zma, zma)
                + np.einsum("bk,bk->b", zmb, zmb)
                + np.einsum("bk,bk->b", za, za)
                + np.einsum("bk,bk->b", zb, zb)
            )
            n_gauss = 2 * s + 2 * lt.n_cells + 2
            r_mu_a = (mu_a - loc_mean) / loc_sd
            r_mu_b = (mu_b - loc_mean) / loc_sd
            lp = (
                ll
                - 0.5 * z_sq
                - 0.5 * (r_mu_a**2 + r_mu_b**2)
                - 2.0 * math.log(loc_sd)
                - 0.5 * n_gauss * LOG_2PI
            )

            # exponential priors in log space: -log(scale) - value/scale + u
            c3 = spec.scale_scale
            lp += (la - sig_a / c3) + (lb - sig_b / c3) + (ls - sig / c3)
            lp -= 3.0 * math.log(c3)
            lp += np.sum(-la[:, None] - sas / sig_a[:, None] + las, axis=1)
            lp += np.sum(-lb[:, None] - sbs / sig_b[:, None] + lbs, axis=1)
            lp += np.sum(-ls[:, None] - sss / sig[:, None] + lss, axis=1)
            ssd_cells = ssd.reshape(b, s, d)
            ratio_sd = ssd_cells / sss[:, :, None]
            lp += np.sum(-d * lss + lsd.reshape(b, s, d).sum(axis=2) - ratio_sd.sum(axis=2), axis=1)

            # gradient
            grad = np.empty((b, lt.dim))
            ga_cells = g_alpha.reshape(b, s, d)
            gb_cells = g_beta.reshape(b, s, d)
            ga_s = ga_cells.sum(axis=2)
            gb_s = gb_cells.sum(axis=2)
            grad[:, lt.i_mu_a] = ga_s.sum(axis=1) - r_mu_a / loc_sd
            grad[:, lt.i_mu_b] = gb_s.sum(axis=1) - r_mu_b / loc_sd
            grad[:, lt.i_la] = (
                sig_a * np.einsum("bk,bk->b", zma, ga_s)
                + 1.0
                - sig_a / c3
                + np.sum(sas / sig_a[:, None] - 1.0, axis=1)
            )
            grad[:, lt.i_lb] = (
                sig_b * np.einsum("bk,bk->b", zmb, gb_s)
                + 1.0
                - sig_b / c3
                + np.sum(sbs / sig_b[:, None] - 1.0, axis=1)
            )
            grad[:, lt.i_ls] = 1.0 - sig / c3 + np.sum(sss / sig[:, None] - 1.0, axis=1)
            grad[:, lt.sl_zma] = sig_a[:, None] * ga_s - zma
            grad[:, lt.sl_zmb] = sig_b[:, None] * gb_s - zmb
            grad[:, lt.sl_las] = (
                sas * (ga_cells * za.reshape(b, s, d)).sum(axis=2)
                + 1.0
                - sas / sig_a[:, None]
            )
            grad[:, lt.sl_lbs] = (
                sbs * (gb_cells * zb.reshape(b, s, d)).sum(axis=2)
                + 1.0
                - sbs / sig_b[:, None]
            )
            grad[:, lt.sl_lss] = (
                1.0 - sss / sig[:, None] + ratio_sd.sum(axis=2) - d
            )
            rep_sas = np.repeat(sas, d, axis=1)
            rep_sbs = np.repeat(sbs, d, axis=1)
            grad[:, lt.sl_za] = g_alpha * rep_sas - za
            grad[:, lt.sl_zb] = g_beta * rep_sbs - zb
            grad[:, lt.sl_lsd] = g_lsd_lik + 1.0 - ratio_sd.reshape(b, -1)

            bad = ~np.isfinite(lp)
            if np.any(bad):
                lp = np.where(bad, -np.inf, lp)
                grad[bad] = 0.0
            bad_grad = ~np.isfinite(grad).all(axis=1)
            if np.any(bad_grad):
                lp = np.where(bad_grad, -np.inf, lp)
                grad[bad_grad] = 0.0
        return lp, grad
