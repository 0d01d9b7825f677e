"""Energy-based prior coupling a discrete category with a continuous latent.

The joint prior over a category index ``y`` in 0..K-1 and a latent vector
``z`` in R^d is

    p(y, z)  propto  exp(f(z)[y]) * N(z; 0, I)

with ``f`` a small MLP producing K logits.  Summing out ``y`` gives the
marginal correction ``exp(F(z))`` with the log-sum-exp marginal energy
``F(z) = log sum_k exp(f(z)[k])``, and conditioning on ``z`` gives a softmax
classifier over the K categories.  The reference density is a standard
normal, so the score of the (unnormalised) marginal has the closed form

    grad_z [F(z) + log N(z; 0, I)] = sum_k p(y=k|z) grad_z f(z)[k] - z.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .errors import ContractViolation


class EnergyPrior:
    """Coupled category/latent EBM prior with a tanh MLP energy head.

    The default head has two hidden layers of width 200; the output layer is
    initialised near zero so the initial marginal is close to the standard
    normal reference (F approximately constant at log K).
    """

    def __init__(self, latent_dim, n_categories, hidden=(200, 200), rng=None,
                 out_scale=0.01):
        if latent_dim < 1:
            raise ContractViolation(f"latent_dim must be >= 1, got {latent_dim}")
        if n_categories < 1:
            raise ContractViolation(f"n_categories must be >= 1, got {n_categories}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.latent_dim = int(latent_dim)
        self.n_categories = int(n_categories)
        self.mlp = nn.Mlp((latent_dim, *hidden, n_categories), rng, out_scale=out_scale)

    # -- parameter plumbing -------------------------------------------------

    @property
    def params(self):
        return self.mlp.params

    def named_params(self, prefix="energy"):
        return {f"{prefix}.{k}": v for k, v in self.params.items()}

    def _check_z(self, z):
        z = np.asarray(z, dtype=np.float64)
        if z.shape[-1] != self.latent_dim:
            raise ContractViolation(
                f"latent vector has dimension {z.shape[-1]}, expected {self.latent_dim}"
            )
        if not np.all(np.isfinite(z)):
            raise ContractViolation("latent vector contains non-finite entries")
        return z

    # -- spec operations ----------------------------------------------------

    def logits(self, z):
        """K category logits f(z); accepts (d,) or (B, d)."""
        z = self._check_z(z)
        out, _ = self.mlp.forward(z)
        return out

    def marginal_energy(self, z):
        """Log-sum-exp marginal energy F(z), max-shifted for stability."""
        return nn.logsumexp(self.logits(z), axis=-1)

    def symbol_posterior(self, z):
        """Softmax category distribution p(y|z)."""
        return nn.softmax(self.logits(z), axis=-1)

    def unnormalized_log_prior(self, z):
        """F(z) + log N(z; 0, I), dropping the unknown -log Z constant."""
        z = self._check_z(z)
        return self.marginal_energy(z) + nn.standard_normal_logpdf(z)

    def grad_z_log_prior(self, z):
        """Score of the unnormalised marginal: softmax-weighted logit
        gradients minus z."""
        z = self._check_z(z)
        squeeze = z.ndim == 1
        zb = z[None, :] if squeeze else z
        logits, cache = self.mlp.forward(zb)
        probs = nn.softmax(logits, axis=-1)
        _, dz = self.mlp.backward(cache, probs)
        score = dz - zb
        return score[0] if squeeze else score

    # -- gradient plumbing used by the objectives ---------------------------

    def forward_logits(self, z_batch):
        """Batched logits with the backward cache exposed."""
        z = self._check_z(np.atleast_2d(z_batch))
        return self.mlp.forward(z)

    def backward_logits(self, cache, dlogits):
        """Backprop an upstream gradient on the logits.

        Returns (param grads, gradient w.r.t. the latent batch).
        """
        return self.mlp.backward(cache, dlogits)

    def marginal_energy_grads(self, z_batch, weights=None):
        """Parameter gradients of ``sum_i w_i F(z_i)`` (w defaults to 1).

        Also returns the per-row energies.
        """
        logits, cache = self.forward_logits(z_batch)
        probs = nn.softmax(logits, axis=-1)
        if weights is not None:
            w = np.asarray(weights, dtype=np.float64)
            probs = probs * (float(w) if w.ndim == 0 else w[:, None])
        grads, _ = self.mlp.backward(cache, probs)
        return grads, nn.logsumexp(logits, axis=-1)
