"""Posterior simulation, prediction, and leave-one-dataset-out runs.

Chains are independent given (seed, chain index): chain c draws from a
Philox stream keyed by (seed, c), so a run's draws depend only on
(data, seed, settings).  Held-out prediction draws likewise use
per-candidate streams keyed by (seed, candidate index).  Leave-one-out
fits over many datasets can run in a process pool (capped by the
TRANSFER_BENCH_THREADS environment variable) because every fit is
self-contained and deterministic.
"""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..data import TupleTable, z_normalize
from ..errors import SamplingError, ValidationError
from .diagnostics import DiagnosticsReport, diagnose
from .hmc import sample_chains
from .model import HierarchicalModel, ModelSpec

MAX_WARMUP_DIVERGENCE_FRACTION = 0.25

THREADS_ENV = "TRANSFER_BENCH_THREADS"


def resolve_workers(requested: int | None = None) -> int:
    """Worker count: explicit argument, else TRANSFER_BENCH_THREADS, else
    the machine's core count."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class PosteriorDraws:
    """Constrained post-warmup draws of every model parameter."""

    spec: ModelSpec
    names: tuple[str, ...]
    draws: np.ndarray  # (chains, kept draws, parameters)
    divergences_warmup: tuple[int, ...]
    divergences_sampling: tuple[int, ...]
    accept_rates: tuple[float, ...]
    step_sizes: tuple[float, ...]

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_kept(self) -> int:
        return self.draws.shape[1]

    @property
    def n_divergences(self) -> int:
        return int(sum(self.divergences_sampling))

    def parameter(self, name: str) -> np.ndarray:
        """Draws of one parameter, shaped (chains, kept)."""
        try:
            j = self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown parameter {name!r}") from None
        return self.draws[:, :, j]

    def flat(self, name: str) -> np.ndarray:
        """Draws of one parameter pooled across chains."""
        return self.parameter(name).reshape(-1)

    def diagnostics(self) -> DiagnosticsReport:
        return diagnose(self.names, self.draws)


@dataclass(frozen=True)
class Prediction:
    """Posterior-predictive samples of the normalized metric for one
    candidate; ``mean`` is the point prediction used for ranking."""

    candidate: str
    samples: np.ndarray
    mean: float
    q025: float
    q50: float
    q975: float

    @classmethod
    def from_samples(cls, candidate: str, samples: np.ndarray) -> "Prediction":
        q025, q50, q975 = np.percentile(samples, [2.5, 50.0, 97.5])
        return cls(
            candidate=candidate,
            samples=samples,
            mean=float(samples.mean()),
            q025=float(q025),
            q50=float(q50),
            q975=float(q975),
        )


def sample(
    table: TupleTable | None,
    spec: ModelSpec | None = None,
    chains: int = 4,
    warmup: int = 1000,
    keep: int = 1000,
    seed: int = 0,
    n_leapfrog: int = 32,
    target_accept: float = 0.8,
) -> PosteriorDraws:
    """Fit the hierarchical model by HMC and return the kept draws.

    ``table`` must be z-normalized with metrics present; passing ``None``
    (or an empty table) with an explicit ``spec`` samples the prior.
    """
    if chains < 1 or keep < 1 or warmup < 0:
        raise ValidationError("need chains >= 1, keep >= 1, warmup >= 0")
    if spec is None:
        if table is None or len(table) == 0:
            raise ValidationError("an explicit ModelSpec is required for empty data")
        spec = ModelSpec.from_table(table)
    model = HierarchicalModel(spec, table)
    rngs = [np.random.Generator(np.random.Philox(key=[seed, c])) for c in range(chains)]
    result = sample_chains(
        model.log_posterior_batch,
        model.dim,
        rngs,
        warmup=warmup,
        keep=keep,
        n_leapfrog=n_leapfrog,
        target_accept=target_accept,
    )
    if warmup > 0:
        worst = int(result.divergences_warmup.max())
        if worst > MAX_WARMUP_DIVERGENCE_FRACTION * warmup:
            raise SamplingError(
                f"{worst}/{warmup} warmup transitions diverged in a chain; "
                "the posterior is too ill-conditioned for the current settings",
                diagnostics={
                    "divergences_warmup": result.divergences_warmup.tolist(),
                    "step_sizes": result.step_sizes.tolist(),
                },
            )
    constrained = np.empty(
        (chains, keep, len(model.layout.constrained_names))
    )
    for c in range(chains):
        constrained[c] = model.layout.constrain(result.draws[c])
    return PosteriorDraws(
        spec=spec,
        names=model.layout.constrained_names,
        draws=constrained,
        divergences_warmup=tuple(int(x) for x in result.divergences_warmup),
        divergences_sampling=tuple(int(x) for x in result.divergences_sampling),
        accept_rates=tuple(float(x) for x in result.accept_rates),
        step_sizes=tuple(float(x) for x in result.step_sizes),
    )


def predict(
    draws: PosteriorDraws,
    candidates,
    seed: int = 0,
) -> list[Prediction]:
    """Posterior-predictive metric samples for unseen-dataset candidates.

    ``candidates`` is a list of (candidate id, [(scorer, normalized
    score), ...]) pairs.  For each posterior draw and scorer the
    unseen dataset's regression parameters are drawn ancestrally from
    the scorer-level posteriors (one triple per draw, no inner
    replication), the metric is simulated from the regression, and the
    per-scorer sample sets are pooled into a uniform mixture.
    """
    per_scorer = {}
    for s in draws.spec.scorers:
        per_scorer[s] = (
            draws.flat(f"mu_alpha[{s}]"),
            draws.flat(f"sigma_alpha[{s}]"),
            draws.flat(f"mu_beta[{s}]"),
            draws.flat(f"sigma_beta[{s}]"),
            draws.flat(f"sigma[{s}]"),
        )
    out = []
    for j, (candidate, scores) in enumerate(candidates):
        rng = np.random.Generator(np.random.Philox(key=[seed, j]))
        pools = []
        for scorer, t in scores:
            if scorer not in per_scorer:
                raise ValidationError(f"scorer {scorer!r} unknown to the model")
            mu_a, sig_a, mu_b, sig_b, sig = per_scorer[scorer]
            n = mu_a.size
            alpha_star = mu_a + sig_a * rng.standard_normal(n)
            beta_star = mu_b + sig_b * rng.standard_normal(n)
            sigma_star = rng.exponential(scale=sig)
            pools.append(
                alpha_star + beta_star * t + sigma_star * rng.standard_normal(n)
            )
        if not pools:
            raise ValidationError(f"candidate {candidate!r} has no scores")
        out.append(Prediction.from_samples(candidate, np.concatenate(pools)))
    return out


def _candidate_scores(held_norm: TupleTable, scorers) -> list:
    """(architecture, [(scorer, score), ...]) in first-appearance order."""
    by_arch: dict[str, dict[str, float]] = {}
    order: list[str] = []
    for t in held_norm:
        if t.architecture not in by_arch:
            by_arch[t.architecture] = {}
            order.append(t.architecture)
        by_arch[t.architecture][t.scorer] = t.score
    candidates = []
    for arch in order:
        missing = [s for s in scorers if s not in by_arch[arch]]
        if missing:
            raise ValidationError(
                f"candidate {arch!r} lacks a score from scorer {missing[0]!r}"
            )
        candidates.append((arch, [(s, by_arch[arch][s]) for s in scorers]))
    return candidates


def calibrate_loo(
    table: TupleTable,
    scorers=None,
    held_out: str = "",
    seed: int = 0,
    **sampler_kwargs,
) -> tuple[PosteriorDraws, list[Prediction]]:
    """Fit on every dataset except ``held_out``, then predict the held-out
    candidates from their scores (normalized within the held-out pool)."""
    if held_out not in table.datasets:
        raise ValidationError(f"held-out dataset {held_out!r} not present in table")
    scorers = tuple(scorers) if scorers is not None else table.scorers
    for s in scorers:
        if s not in table.scorers:
            raise ValidationError(f"scorer {s!r} not present in table")
    calib = table.select(scorers=scorers, exclude_datasets={held_out})
    if len(calib) == 0:
        raise ValidationError("no calibration data left after holding out")
    for s in scorers:
        if s not in calib.scorers:
            raise ValidationError(
                f"scorer {s!r} is absent from the calibration split"
            )
    held = table.select(scorers=scorers, datasets={held_out})
    calib_norm = z_normalize(calib)
    held_norm = z_normalize(held)
    draws = sample(calib_norm, seed=seed, **sampler_kwargs)
    predictions = predict(draws, _candidate_scores(held_norm, scorers), seed=seed)
    return draws, predictions


def _loo_job(args):
    table, scorers, dataset, seed, sampler_kwargs = args
    return dataset, calibrate_loo(
        table, scorers=scorers, held_out=dataset, seed=seed, **sampler_kwargs
    )


def loo_all(
    table: TupleTable,
    scorers=None,
    seed: int = 0,
    workers: int | None = None,
    **sampler_kwargs,
) -> dict[str, tuple[PosteriorDraws, list[Prediction]]]:
    """Leave-one-dataset-out over every dataset in the table.

    Fits are independent and may run in a process pool; results are
    keyed and ordered by dataset, so the pool layout cannot change them.
    """
    jobs = [
        (table, scorers, dataset, seed, sampler_kwargs) for dataset in table.datasets
    ]
    n_workers = min(resolve_workers(workers), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = dict(pool.map(_loo_job, jobs))
    else:
        results = dict(_loo_job(job) for job in jobs)
    return {dataset: results[dataset] for dataset in table.datasets}


def save_draws_csv(draws: PosteriorDraws, path) -> None:
    """Columnar draw dump: ``chain,draw,parameter,value``."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["chain", "draw", "parameter", "value"])
        for c in range(draws.n_chains):
            for i in range(draws.n_kept):
                row_vals = draws.draws[c, i]
                for name, value in zip(draws.names, row_vals):
                    writer.writerow([c, i, name, repr(float(value))])
