"""Hamiltonian Monte Carlo with leapfrog integration.

Plain fixed-trajectory HMC: momenta are refreshed from a diagonal
Gaussian each transition, a trajectory of ``n_leapfrog`` steps is
integrated, and the endpoint is accepted by a Metropolis test on the
Hamiltonian error.

Warmup schedule: the step size is tuned by dual averaging toward a
target acceptance throughout warmup; during the second half the
per-coordinate posterior variance is accumulated (Welford) and applied
as a running, regularized diagonal mass matrix, with the dual averaging
restarted at the midpoint so the final step size is tuned under the
final metric.  The estimate is shrunk toward unit variance, which is
the prior scale of the non-centered coordinates.

All chains advance in lockstep through batched density evaluations, but
each chain consumes only its own generator (one momentum refresh and
one uniform per transition), so draws are identical to running the
chains one at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DIVERGENCE_ENERGY = 1000.0  # Hamiltonian error treated as a divergence
STEP_JITTER = (0.67, 1.33)  # per-transition uniform step-size scaling


@dataclass
class ChainSetResult:
    """Post-warmup draws (chains, kept, dim) and per-chain statistics."""

    draws: np.ndarray
    accept_rates: np.ndarray
    divergences_warmup: np.ndarray
    divergences_sampling: np.ndarray
    step_sizes: np.ndarray


class DualAveraging:
    """Step-size adaptation toward a target acceptance statistic."""

    def __init__(self, initial_step, target_accept=0.8, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * initial_step)
        self.target_accept = target_accept
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.log_step = math.log(initial_step)
        self.log_step_avg = math.log(initial_step)
        self.h_bar = 0.0
        self.count = 0

    def update(self, accept_prob: float) -> None:
        self.count += 1
        frac = 1.0 / (self.count + self.t0)
        self.h_bar = (1.0 - frac) * self.h_bar + frac * (self.target_accept - accept_prob)
        self.log_step = self.mu - math.sqrt(self.count) / self.gamma * self.h_bar
        weight = self.count ** (-self.kappa)
        self.log_step_avg = weight * self.log_step + (1.0 - weight) * self.log_step_avg

    @property
    def current_step(self) -> float:
        return math.exp(self.log_step)

    @property
    def adapted_step(self) -> float:
        return math.exp(self.log_step_avg)


def _leapfrog_batch(theta, p, grad, steps, n_steps, logp_grad_batch, inv_mass):
    """Integrate all rows for ``n_steps``; rows that go non-finite keep a
    zero gradient and are flagged divergent by the energy check."""
    p = p + 0.5 * steps[:, None] * grad
    lp = None
    for i in range(n_steps):
        theta = theta + steps[:, None] * inv_mass * p
        lp, grad = logp_grad_batch(theta)
        factor = 1.0 if i < n_steps - 1 else 0.5
        p = p + factor * steps[:, None] * grad
    return theta, p, lp, grad


def find_reasonable_step(theta, lp, grad, logp_grad_batch, inv_mass, rng) -> float:
    """Doubling/halving heuristic for one chain's initial step size:
    pick the scale at which a single leapfrog step accepts near 0.5."""
    dim = theta.size
    step = 1.0
    p0 = rng.standard_normal(dim) / np.sqrt(inv_mass)
    h0 = -lp + 0.5 * float(np.sum(inv_mass * p0 * p0))

    def log_ratio(step):
        steps = np.array([step])
        t1, p1, lp1, _ = _leapfrog_batch(
            theta[None, :], p0[None, :], grad[None, :], steps, 1,
            logp_grad_batch, inv_mass[None, :],
        )
        with np.errstate(invalid="ignore", over="ignore"):
            h1 = -lp1[0] + 0.5 * float(np.sum(inv_mass * p1[0] * p1[0]))
        if not np.isfinite(h1):
            return -np.inf
        return h0 - h1

    ratio = log_ratio(step)
    direction = 1.0 if ratio > math.log(0.5) else -1.0
    for _ in range(60):
        if direction * ratio <= -direction * math.log(2.0):
            break
        step *= 2.0**direction
        if not 1e-10 < step < 1e3:
            break
        ratio = log_ratio(step)
    return step


def sample_chains(
    logp_grad_batch,
    dim: int,
    rngs: list[np.random.Generator],
    warmup: int = 1000,
    keep: int = 1000,
    n_leapfrog: int = 32,
    target_accept: float = 0.8,
) -> ChainSetResult:
    """Run len(rngs) chains in lockstep and return their kept draws."""
    n_chains = len(rngs)
    theta = np.stack([rng.uniform(-1.0, 1.0, size=dim) for rng in rngs])
    lp, grad = logp_grad_batch(theta)
    for c in range(n_chains):
        if not np.isfinite(lp[c]):
            theta[c] = 0.0
    lp, grad = logp_grad_batch(theta)

    inv_mass = np.ones((n_chains, dim))
    steps = np.array(
        [
            find_reasonable_step(theta[c], lp[c], grad[c], logp_grad_batch,
                                 inv_mass[c], rngs[c])
            for c in range(n_chains)
        ]
    )
    adapters = [DualAveraging(steps[c], target_accept=target_accept) for c in range(n_chains)]
    div_warmup = np.zeros(n_chains, dtype=int)
    div_sampling = np.zeros(n_chains, dtype=int)
    accepts = np.zeros(n_chains, dtype=int)

    def transition(theta, lp, grad, steps):
        p = np.stack([rng.standard_normal(dim) for rng in rngs]) / np.sqrt(inv_mass)
        # jitter breaks the resonance a fixed trajectory length hits when
        # the metric makes all coordinate periods nearly equal
        jitter = np.array([rng.uniform(*STEP_JITTER) for rng in rngs])
        with np.errstate(invalid="ignore", over="ignore"):
            h0 = -lp + 0.5 * np.sum(inv_mass * p * p, axis=1)
            t1, p1, lp1, grad1 = _leapfrog_batch(
                theta, p, grad, steps * jitter, n_leapfrog, logp_grad_batch, inv_mass
            )
            h1 = -lp1 + 0.5 * np.sum(inv_mass * p1 * p1, axis=1)
            delta = h1 - h0
            divergent = ~np.isfinite(delta) | (delta > DIVERGENCE_ENERGY)
            accept_prob = np.where(
                divergent, 0.0, np.exp(np.minimum(0.0, -np.where(divergent, 0.0, delta)))
            )
        u = np.array([rng.uniform() for rng in rngs])
        accepted = ~divergent & (u < accept_prob)
        theta = np.where(accepted[:, None], t1, theta)
        lp = np.where(accepted, lp1, lp)
        grad = np.where(accepted[:, None], grad1, grad)
        return theta, lp, grad, accept_prob, divergent, accepted

    half = warmup // 2
    welford_n = 0
    welford_mean = np.zeros((n_chains, dim))
    welford_m2 = np.zeros((n_chains, dim))
    for it in range(warmup):
        if it == half:
            for c in range(n_chains):
                adapters[c] = DualAveraging(
                    adapters[c].adapted_step, target_accept=target_accept
                )
        theta, lp, grad, accept_prob, divergent, _ = transition(theta, lp, grad, steps)
        div_warmup += divergent
        for c in range(n_chains):
            adapters[c].update(float(accept_prob[c]))
        steps = np.array([a.current_step for a in adapters])
        if it >= half:
            welford_n += 1
            delta_w = theta - welford_mean
            welford_mean += delta_w / welford_n
            welford_m2 += delta_w * (theta - welford_mean)
            if welford_n >= 3:
                var = welford_m2 / (welford_n - 1)
                shrink = welford_n / (welford_n + 5.0)
                inv_mass = np.maximum(shrink * var + (1.0 - shrink), 1e-8)

    if warmup > 0:
        steps = np.array([a.adapted_step for a in adapters])

    draws = np.empty((n_chains, keep, dim))
    for it in range(keep):
        theta, lp, grad, accept_prob, divergent, accepted = transition(
            theta, lp, grad, steps
        )
        div_sampling += divergent
        accepts += accepted
        draws[:, it] = theta

    return ChainSetResult(
        draws=draws,
        accept_rates=accepts / keep if keep else np.zeros(n_chains),
        divergences_warmup=div_warmup,
        divergences_sampling=div_sampling,
        step_sizes=steps,
    )
