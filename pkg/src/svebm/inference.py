"""Amortised diagonal-Gaussian posterior q(z|x).

Encoders map an example to a posterior mean and log-variance of the latent
vector.  Three input modalities are supported: a recurrent encoder over
token sequences (final hidden state feeds the heads), and MLP encoders for
fixed-width point coordinates and for normalised bag-of-words counts.

Log-variances are clamped to [-10, 10] so sampling and the closed-form KL
stay numerically stable; the clamp's backward pass zeroes gradients at the
saturated entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ContractViolation

LOG_VAR_MIN = -10.0
LOG_VAR_MAX = 10.0


@dataclass
class GaussianPosterior:
    """Mean and log-variance of a diagonal Gaussian over the latent vector.

    Arrays are (d,) for a single example or (B, d) for a batch.
    """

    mean: np.ndarray
    log_var: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.log_var = np.asarray(self.log_var, dtype=np.float64)
        if self.mean.shape != self.log_var.shape:
            raise ContractViolation("mean and log_var shapes differ")
        if not (np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.log_var))):
            raise ContractViolation("posterior parameters must be finite")

    def row(self, i):
        return GaussianPosterior(self.mean[i], self.log_var[i])


def reparam_draw(post, rng):
    """Reparameterised sample z = mean + exp(log_var / 2) * e.

    Returns (z, e) so gradients can flow back through the draw.
    """
    e = rng.standard_normal(post.mean.shape)
    z = post.mean + np.exp(0.5 * post.log_var) * e
    return z, e


def reparam_sample(post, rng):
    """Reparameterised sample; see :func:`reparam_draw`."""
    return reparam_draw(post, rng)[0]


def reparam_backward(post, e, dz):
    """Gradients on (mean, log_var) given a gradient on the drawn sample."""
    dmean = dz
    dlog_var = dz * e * 0.5 * np.exp(0.5 * post.log_var)
    return dmean, dlog_var


def kl_to_reference(post):
    """Closed-form KL(q || N(0, I)) = 0.5 sum(mean^2 + var - 1 - log_var).

    Returns a scalar for a single posterior, a (B,) vector for a batch.
    """
    var = np.exp(post.log_var)
    return 0.5 * np.sum(post.mean**2 + var - 1.0 - post.log_var, axis=-1)


def kl_backward(post, dkl):
    """Gradients of ``dkl * kl_to_reference`` w.r.t. (mean, log_var).

    ``dkl`` is scalar or (B,) matching the posterior batch shape.
    """
    w = np.asarray(dkl, dtype=np.float64)
    if post.mean.ndim == 2 and w.ndim == 1:
        w = w[:, None]
    dmean = w * post.mean
    dlog_var = w * 0.5 * (np.exp(post.log_var) - 1.0)
    return dmean, dlog_var


def _clamp_log_var(raw):
    clamped = np.clip(raw, LOG_VAR_MIN, LOG_VAR_MAX)
    pass_through = (raw > LOG_VAR_MIN) & (raw < LOG_VAR_MAX)
    return clamped, pass_through


class MlpEncoder:
    """MLP trunk plus linear mean / log-variance heads.

    Used directly for point coordinates; document encoders normalise the
    count vector to frequencies before the trunk (``normalize=True``).
    ``hidden=()`` drops the trunk so the heads are affine in the input,
    which makes the encoder able to represent exact linear-Gaussian
    posteriors.
    """

    def __init__(self, in_dim, latent_dim, hidden, rng, normalize=False):
        self.in_dim = int(in_dim)
        self.latent_dim = int(latent_dim)
        self.normalize = normalize
        hidden = tuple(hidden)
        self.trunk = nn.Mlp((in_dim, *hidden), rng, final_activation=True) \
            if hidden else None
        width = hidden[-1] if hidden else in_dim
        self.head_mean = nn.Affine(width, latent_dim, rng)
        self.head_log_var = nn.Affine(width, latent_dim, rng)

    def named_params(self, prefix="enc"):
        out = {}
        if self.trunk is not None:
            out.update({f"{prefix}.trunk.{k}": v for k, v in self.trunk.params.items()})
        out.update({f"{prefix}.mean.{k}": v for k, v in self.head_mean.params.items()})
        out.update({f"{prefix}.logvar.{k}": v for k, v in self.head_log_var.params.items()})
        return out

    def encode_batch(self, x):
        """x is (B, in_dim); returns (GaussianPosterior, cache)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ContractViolation(
                f"encoder expects (B, {self.in_dim}) input, got {x.shape}"
            )
        if self.normalize:
            totals = x.sum(axis=1, keepdims=True)
            x = x / np.maximum(totals, 1.0)
        if self.trunk is None:
            h, trunk_cache = x, None
        else:
            h, trunk_cache = self.trunk.forward(x)
        mean, mean_cache = self.head_mean.forward(h)
        raw_lv, lv_cache = self.head_log_var.forward(h)
        log_var, lv_mask = _clamp_log_var(raw_lv)
        post = GaussianPosterior(mean, log_var)
        return post, (trunk_cache, mean_cache, lv_cache, lv_mask)

    def backward(self, cache, dmean, dlog_var):
        trunk_cache, mean_cache, lv_cache, lv_mask = cache
        gm, dh_m = self.head_mean.backward(mean_cache, dmean)
        gl, dh_l = self.head_log_var.backward(lv_cache, dlog_var * lv_mask)
        grads = {}
        if self.trunk is not None:
            gt, _ = self.trunk.backward(trunk_cache, dh_m + dh_l)
            grads.update({f"trunk.{k}": v for k, v in gt.items()})
        grads.update({f"mean.{k}": v for k, v in gm.items()})
        grads.update({f"logvar.{k}": v for k, v in gl.items()})
        return grads


class SequenceEncoder:
    """GRU over token embeddings; the final hidden state feeds the heads.

    The embedding table is shared with the sequence decoder, so it is owned
    by the caller and its gradient is reported under the shared name.
    """

    def __init__(self, embedding, embed_dim, hidden_size, latent_dim, rng):
        self.embedding = embedding
        self.hidden_size = int(hidden_size)
        self.latent_dim = int(latent_dim)
        self.gru = nn.GruCell(embed_dim, hidden_size, rng)
        self.head_mean = nn.Affine(hidden_size, latent_dim, rng)
        self.head_log_var = nn.Affine(hidden_size, latent_dim, rng)

    def named_params(self, prefix="enc"):
        out = {f"{prefix}.gru.{k}": v for k, v in self.gru.params.items()}
        out.update({f"{prefix}.mean.{k}": v for k, v in self.head_mean.params.items()})
        out.update({f"{prefix}.logvar.{k}": v for k, v in self.head_log_var.params.items()})
        return out

    def encode_batch(self, ids, mask):
        """ids (B, T) int token ids, mask (B, T) in {0,1}; PAD columns masked.

        Returns (GaussianPosterior, cache).
        """
        B, T = ids.shape
        emb, emb_cache = self.embedding.forward(ids)  # (B, T, E)
        xs = np.swapaxes(emb, 0, 1)  # (T, B, E)
        step_mask = np.swapaxes(np.asarray(mask, dtype=np.float64), 0, 1)
        h0 = np.zeros((B, self.hidden_size))
        hs, gru_caches = self.gru.run(xs, h0, step_mask)
        h_final = hs[-1]
        mean, mean_cache = self.head_mean.forward(h_final)
        raw_lv, lv_cache = self.head_log_var.forward(h_final)
        log_var, lv_mask = _clamp_log_var(raw_lv)
        post = GaussianPosterior(mean, log_var)
        cache = (emb_cache, gru_caches, (B, T), mean_cache, lv_cache, lv_mask)
        return post, cache

    def backward(self, cache, dmean, dlog_var):
        """Returns (own grads, shared-embedding table gradient)."""
        emb_cache, gru_caches, (B, T), mean_cache, lv_cache, lv_mask = cache
        gm, dh_m = self.head_mean.backward(mean_cache, dmean)
        gl, dh_l = self.head_log_var.backward(lv_cache, dlog_var * lv_mask)
        dhs = np.zeros((T, B, self.hidden_size))
        g_gru, dxs, _ = self.gru.run_backward(gru_caches, dhs, dh_final=dh_m + dh_l)
        demb = np.swapaxes(dxs, 0, 1)  # (B, T, E)
        emb_grads = self.embedding.backward(emb_cache, demb)["table"]
        grads = {f"gru.{k}": v for k, v in g_gru.items()}
        grads.update({f"mean.{k}": v for k, v in gm.items()})
        grads.update({f"logvar.{k}": v for k, v in gl.items()})
        return grads, emb_grads
