"""Langevin dynamics in latent space.

One unadjusted Langevin step moves a state ``z`` along the score of the
target density plus Gaussian exploration noise:

    z' = z + s * score(z) + sqrt(2 s) * e,     e ~ N(0, I).

Prior sampling during training keeps a pool of persistent chains: each
update picks a subset of chains, advances every one by a fixed number of
steps with the current prior score, and writes the new states back, so the
pool tracks the (slowly moving) prior across training iterations.  No
Metropolis correction is applied.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractViolation, SamplerDivergence

# Any coordinate beyond this magnitude is treated as a diverged chain.
DIVERGENCE_LIMIT = 1e6


@dataclass
class LangevinConfig:
    """Step size and step count for one Langevin update."""

    step_size: float = 0.16
    n_steps: int = 20

    def __post_init__(self):
        if self.step_size < 0:
            raise ConfigError(f"step_size must be >= 0, got {self.step_size}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be >= 1, got {self.n_steps}")


class ChainPool:
    """Persistent latent-space chains plus per-chain age bookkeeping."""

    def __init__(self, n_chains, latent_dim, rng):
        if n_chains < 1:
            raise ConfigError(f"n_chains must be >= 1, got {n_chains}")
        self.states = rng.standard_normal((n_chains, latent_dim))
        self.ages = np.zeros(n_chains, dtype=np.int64)

    @property
    def n_chains(self):
        return self.states.shape[0]

    @property
    def latent_dim(self):
        return self.states.shape[1]

    def reinitialize(self, rng):
        """Draw fresh reference-prior states for every chain (rejuvenation)."""
        self.states = rng.standard_normal(self.states.shape)
        self.ages[:] = 0


def _check_state(z, context):
    if not np.all(np.isfinite(z)) or np.any(np.abs(z) > DIVERGENCE_LIMIT):
        raise SamplerDivergence(f"Langevin {context} produced a runaway state", state=z)


def langevin_step(z, score_fn, step_size, rng):
    """One Langevin update of a single latent vector.

    ``score_fn`` maps a latent vector to the score of the target log density.
    With ``step_size == 0`` this is the identity map.
    """
    z = np.asarray(z, dtype=np.float64)
    score = np.asarray(score_fn(z), dtype=np.float64)
    if score.shape != z.shape:
        raise ContractViolation(
            f"score has shape {score.shape}, expected {z.shape}"
        )
    if not np.all(np.isfinite(score)):
        raise SamplerDivergence("score function returned non-finite values", state=z)
    if step_size == 0:
        return z.copy()
    noise = rng.standard_normal(z.shape)
    z_new = z + step_size * score + np.sqrt(2.0 * step_size) * noise
    _check_state(z_new, "step")
    return z_new


def _run_chain_batch(states, score_fn, cfg, rng):
    """Advance a (m, d) batch of chains by cfg.n_steps; returns new states."""
    z = states
    root = np.sqrt(2.0 * cfg.step_size)
    for _ in range(cfg.n_steps):
        score = score_fn(z)
        if not np.all(np.isfinite(score)):
            raise SamplerDivergence("score function returned non-finite values", state=z)
        z = z + cfg.step_size * score + root * rng.standard_normal(z.shape)
        _check_state(z, "chain update")
    return z


def sample_prior(pool, prior, cfg, m, rng):
    """Draw m prior samples by advancing m randomly chosen persistent chains.

    Chains are picked uniformly without replacement, advanced ``cfg.n_steps``
    Langevin steps under the current prior score, and written back to the
    pool.  Returns copies of the m final states; unselected chains are
    untouched.
    """
    if m > pool.n_chains:
        raise ContractViolation(
            f"requested {m} chains from a pool of {pool.n_chains}"
        )
    idx = rng.choice(pool.n_chains, size=m, replace=False)
    new_states = _run_chain_batch(pool.states[idx], prior.grad_z_log_prior, cfg, rng)
    pool.states[idx] = new_states
    pool.ages[idx] += cfg.n_steps
    return new_states.copy(), pool


def sample_conditional(prior, label, cfg, m, rng):
    """Sample z from p(z | y=label) by Langevin on the fixed-label energy.

    The conditional density is proportional to exp(f(z)[label]) * N(z; 0, I),
    so the score keeps only the chosen logit's gradient.  Chains start from
    the reference prior; no persistent pool is involved.
    """
    if not 0 <= label < prior.n_categories:
        raise ContractViolation(
            f"label {label} out of range for {prior.n_categories} categories"
        )
    onehot = np.zeros(prior.n_categories)
    onehot[label] = 1.0

    def score(z):
        _, cache = prior.forward_logits(z)
        _, dz = prior.backward_logits(cache, np.broadcast_to(onehot, (z.shape[0], prior.n_categories)))
        return dz - z

    z0 = rng.standard_normal((m, prior.latent_dim))
    return _run_chain_batch(z0, score, cfg, rng)


def posterior_langevin(batch_one, model, cfg, rng):
    """Non-amortised posterior sampling for one example (diagnostics only).

    ``batch_one`` is a single-example batch dict in the model's modality
    layout.  Runs Langevin from a reference-prior initialisation with the
    score of prior-times-likelihood; training instead uses the amortised
    encoder.
    """

    def score(z):
        return model.prior.grad_z_log_prior(z) + model.loglik_z_grad(batch_one, z)

    z0 = rng.standard_normal((1, model.prior.latent_dim))
    return _run_chain_batch(z0, score, cfg, rng)[0]
