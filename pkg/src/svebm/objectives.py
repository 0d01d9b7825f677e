"""Training objectives and hand-assembled gradient passes.

Minimization convention throughout.  The per-batch surrogate is

    total = -recon + kl - prior_energy - lam * mutual_info + supervised

where recon is the batch-mean decoder log-likelihood at the reparameterised
posterior draw z+, kl is the closed-form KL to the N(0, I) reference,
prior_energy is the batch-mean marginal energy F(z+) (the log-partition
constant is dropped; it cancels from the parameter updates it would touch),
and mutual_info couples z+ to the symbol via the batch-aggregated posterior.
When lam == 0 the mutual-information product is skipped entirely so the
objective and every gradient reduce bitwise to the plain variant.

Gradient routing mirrors the alternating update scheme: the prior network
is updated from a positive/negative energy-gradient difference plus the
lam-weighted MI gradient; encoder and decoder are updated from the
surrogate, with MI reaching the encoder through the reparameterised draw;
the supervised cross-entropy touches prior and encoder only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ContractViolation, DataError
from .inference import kl_backward, kl_to_reference, reparam_backward

__all__ = [
    "LossBreakdown",
    "elbo_terms",
    "ib_objective",
    "prior_grad_estimate",
    "mutual_info_zy",
    "supervised_class_loss",
    "unsupervised_pass",
    "psi_descent_grads",
    "alpha_descent_grads",
    "supervised_pass",
]


@dataclass
class LossBreakdown:
    """All objective parts in nats, plus the combined minimization total."""

    recon: float = 0.0
    kl: float = 0.0
    prior_energy: float = 0.0
    mutual_info: float = 0.0
    supervised: float = 0.0
    total: float = 0.0

    FIELDS = ("recon", "kl", "prior_energy", "mutual_info", "supervised", "total")

    def validate(self):
        vals = [getattr(self, f) for f in self.FIELDS]
        if not np.all(np.isfinite(vals)):
            raise ContractViolation(f"non-finite loss parts: {self}")
        return self


def combine_total(recon, kl, prior_energy, mutual_info=0.0, lam=0.0, supervised=0.0):
    total = -recon + kl - prior_energy + supervised
    if lam != 0.0:
        total = total - lam * mutual_info
    return total


# ---- mutual information over the symbol posterior ---------------------------


def _mi_from_logits(logits):
    B = logits.shape[0]
    logp = nn.log_softmax(logits)
    lqb = nn.logsumexp(logp, axis=0) - np.log(B)
    h_mix = -float(np.sum(np.exp(lqb) * lqb))
    p = np.exp(logp)
    h_each = -np.sum(p * logp, axis=1)
    return max(h_mix - float(np.mean(h_each)), 0.0)


def _mi_dlogits(logits):
    B = logits.shape[0]
    logp = nn.log_softmax(logits)
    lqb = nn.logsumexp(logp, axis=0) - np.log(B)
    p = np.exp(logp)
    g = (logp - lqb[None, :]) / B
    return p * (g - np.sum(p * g, axis=1, keepdims=True))


def mutual_info_zy(prior, z_batch):
    """I(z, y) estimate from a latent batch: H(mean posterior) - mean H(posterior).

    Bounded by [0, ln K]; requires batch size >= 2.
    """
    z_batch = np.atleast_2d(np.asarray(z_batch, dtype=np.float64))
    if z_batch.shape[0] < 2:
        raise ContractViolation("mutual information needs a batch of size >= 2")
    logits, _ = prior.forward_logits(z_batch)
    return _mi_from_logits(logits)


# ---- prior gradient estimator -----------------------------------------------


def prior_grad_estimate(prior, z_pos, z_neg):
    """Ascent-direction gradient on the energy parameters.

    mean over z_pos of dF/dparams minus the same mean over z_neg.  Identical
    batches cancel to exact zeros.
    """
    z_pos = np.atleast_2d(np.asarray(z_pos, dtype=np.float64))
    z_neg = np.atleast_2d(np.asarray(z_neg, dtype=np.float64))
    if z_pos.shape[0] == 0 or z_neg.shape[0] == 0:
        raise ContractViolation("both latent batches must be non-empty")
    g_pos, _ = prior.marginal_energy_grads(z_pos, 1.0 / z_pos.shape[0])
    g_neg, _ = prior.marginal_energy_grads(z_neg, 1.0 / z_neg.shape[0])
    return {k: g_pos[k] - g_neg[k] for k in g_pos}


# ---- unsupervised pass ------------------------------------------------------


def unsupervised_pass(model, batch, lam, rng, z_override=None):
    """Forward pass for one unlabeled batch.

    Encodes, draws one reparameterised z+ per example (or uses z_override),
    scores the decoder, the reference KL, the marginal energy, and the MI
    term.  Returns (LossBreakdown, aux) where aux carries every cache needed
    by the gradient assemblers below.
    """
    post, enc_cache = model.encode_batch(batch)
    if z_override is None:
        e = rng.standard_normal(post.mean.shape)
        z = post.mean + np.exp(0.5 * post.log_var) * e
    else:
        z = np.asarray(z_override, dtype=np.float64)
        e = None
    ll, dec_cache = model.loglik_batch(batch, z)
    kl_rows = kl_to_reference(post)
    logits, pcache = model.prior.forward_logits(z)
    f_rows = nn.logsumexp(logits, axis=1)

    recon = float(np.mean(ll))
    kl = float(np.mean(kl_rows))
    f_bar = float(np.mean(f_rows))
    mi = _mi_from_logits(logits) if lam != 0.0 else 0.0
    bd = LossBreakdown(
        recon=recon, kl=kl, prior_energy=f_bar, mutual_info=mi, supervised=0.0,
        total=combine_total(recon, kl, f_bar, mi, lam),
    ).validate()
    aux = {
        "post": post, "enc_cache": enc_cache, "e": e, "z": z,
        "dec_cache": dec_cache, "logits": logits, "pcache": pcache,
        "B": post.mean.shape[0],
    }
    return bd, aux


def psi_descent_grads(model, aux, lam, kl_weight=1.0):
    """Descent gradients on the psi group (encoder + decoder + embedding).

    kl_weight scales only the reference-KL gradient (linear warm-up hook);
    the reported loss parts are unaffected.
    """
    B = aux["B"]
    post, e = aux["post"], aux["e"]

    dec_grads, dz = model.loglik_backward(aux["dec_cache"], np.full(B, -1.0 / B))

    dlogits = nn.softmax(aux["logits"]) * (-1.0 / B)
    if lam != 0.0:
        dlogits = dlogits + (-lam) * _mi_dlogits(aux["logits"])
    _, dz_prior = model.prior.backward_logits(aux["pcache"], dlogits)
    dz = dz + dz_prior

    if e is None:
        raise ContractViolation("psi gradients need the reparameterised draw")
    dmean, dlog_var = reparam_backward(post, e, dz)
    dm_kl, dlv_kl = kl_backward(post, np.full(B, kl_weight / B))
    enc_grads = model.encoder_backward(aux["enc_cache"], dmean + dm_kl,
                                       dlog_var + dlv_kl)
    return nn.add_grads(dec_grads, enc_grads)


def alpha_descent_grads(model, aux, z_neg, lam):
    """Descent gradients on the prior energy network."""
    ascent = prior_grad_estimate(model.prior, aux["z"], z_neg)
    grads = {k: -v for k, v in ascent.items()}
    if lam != 0.0:
        mi_grads, _ = model.prior.backward_logits(aux["pcache"],
                                                  _mi_dlogits(aux["logits"]))
        grads = nn.add_grads(grads, {k: -lam * v for k, v in mi_grads.items()})
    return {f"energy.{k}": v for k, v in grads.items()}


# ---- supervised pass --------------------------------------------------------


def supervised_pass(model, batch, labels):
    """Cross-entropy -log p(y=label | z=posterior mean) and gamma gradients.

    Returns (loss, grads) with grads over prior + encoder (+ embedding).
    """
    labels = np.asarray(labels, dtype=np.int64)
    K = model.config.n_categories
    if labels.size == 0:
        raise ContractViolation("labeled batch must be non-empty")
    if labels.min() < 0 or labels.max() >= K:
        raise DataError(f"label out of range [0, {K})")

    post, enc_cache = model.encode_batch(batch)
    logits, pcache = model.prior.forward_logits(post.mean)
    logp = nn.log_softmax(logits)
    n = labels.shape[0]
    loss = -float(np.mean(logp[np.arange(n), labels]))

    dlogits = nn.softmax(logits)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    a_grads, dmu = model.prior.backward_logits(pcache, dlogits)
    enc_grads = model.encoder_backward(enc_cache, dmu, np.zeros_like(post.log_var))
    grads = {f"energy.{k}": v for k, v in a_grads.items()}
    grads = nn.add_grads(grads, enc_grads)
    return loss, grads


def supervised_class_loss(model, batch_one, label):
    """Scalar classification loss for a single example."""
    loss, _ = supervised_pass(model, batch_one, np.asarray([label]))
    return loss


# ---- public single-call objective views -------------------------------------


def elbo_terms(model, batch, rng):
    """Reconstruction, reference KL, and marginal energy for one batch."""
    bd, _ = unsupervised_pass(model, batch, 0.0, rng)
    return bd


def ib_objective(model, batch, z_pos, lam):
    """LossBreakdown at a caller-supplied z+ batch.

    With lam == 0 the parts and total are bitwise those of the plain
    objective; no mutual-information product enters.
    """
    if lam < 0:
        raise ContractViolation("lam must be >= 0")
    bd, _ = unsupervised_pass(model, batch, lam, rng=None, z_override=z_pos)
    return bd
