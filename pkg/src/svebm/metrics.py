"""Evaluation suite: classification, clustering scores, text metrics, and
importance-sampled negative log-likelihood.

Conventions fixed here for reproducibility:

* classification predicts argmax_k p(y=k | z = posterior mean), ties broken
  toward the lowest index;
* BLEU is corpus-level over n-gram orders 1..4 with brevity penalty, adding
  1 to numerator and denominator for orders >= 2;
* word-level KL smooths the reference-side frequencies additively with
  eps = 1e-10 (renormalised over the union support), the target side is
  left exact;
* NLL is reported in per-sequence nats; the prior's log-partition constant
  is estimated once per evaluation as log-mean-exp of the marginal energy
  over draws from the reference Gaussian.
"""

from __future__ import annotations

import math
from collections import Counter

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import nn
from .errors import DataError, EvaluationError
from .sampler import LangevinConfig, sample_conditional

__all__ = [
    "classify",
    "accuracy",
    "homogeneity",
    "matched_accuracy",
    "bleu_reconstruction",
    "word_kl",
    "estimate_log_z",
    "nll_importance_sampling",
    "attribute_control_accuracy",
    "write_report",
]


# ---- classification ---------------------------------------------------------


def classify(model, batch):
    """Predicted symbol per example plus the full posterior over symbols.

    Returns (indices (B,), distribution (B, K)).  Uses the posterior mean
    only, so the result is independent of the decoder.
    """
    post, _ = model.encode_batch(batch)
    logits, _ = model.prior.forward_logits(post.mean)
    dist = nn.softmax(logits)
    return np.argmax(dist, axis=1), dist


# ---- clustering scores ------------------------------------------------------


def _check_pair(truth, pred):
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise DataError("truth and pred must be 1-d arrays of equal length")
    if truth.size == 0:
        raise DataError("empty label arrays")
    return truth, pred


def _entropy(counts):
    p = counts / counts.sum()
    p = p[p > 0]
    return float(-np.sum(p * np.log(p)))


def accuracy(truth, pred):
    truth, pred = _check_pair(truth, pred)
    return float(np.mean(truth == pred))


def homogeneity(truth, pred):
    """1 - H(truth | pred) / H(truth), from empirical counts; 1.0 if H(truth)=0."""
    truth, pred = _check_pair(truth, pred)
    h_truth = _entropy(np.bincount(truth))
    if h_truth == 0.0:
        return 1.0
    n = truth.size
    h_cond = 0.0
    for c in np.unique(pred):
        sel = truth[pred == c]
        h_cond += (sel.size / n) * _entropy(np.bincount(sel))
    return 1.0 - h_cond / h_truth


def matched_accuracy(truth, pred, n_clusters=None, n_classes=None):
    """Accuracy after the cluster-to-class assignment maximizing matches."""
    truth, pred = _check_pair(truth, pred)
    K = int(max(pred.max() + 1, n_clusters or 0))
    C = int(max(truth.max() + 1, n_classes or 0))
    conf = np.zeros((K, C), dtype=np.int64)
    np.add.at(conf, (pred, truth), 1)
    rows, cols = linear_sum_assignment(conf, maximize=True)
    return float(conf[rows, cols].sum() / truth.size)


# ---- text metrics -----------------------------------------------------------


def _ngram_counts(seq, n):
    return Counter(tuple(seq[i : i + n]) for i in range(len(seq) - n + 1))


def bleu_reconstruction(refs, hyps, max_order=4):
    """Corpus BLEU in [0, 100]; one reference per hypothesis.

    Geometric mean of modified n-gram precisions with brevity penalty;
    orders >= 2 are smoothed by adding 1 to numerator and denominator.
    """
    if len(refs) != len(hyps):
        raise DataError("refs and hyps must have equal counts")
    if len(refs) == 0:
        raise DataError("empty corpus")
    matched = np.zeros(max_order)
    total = np.zeros(max_order)
    ref_len = hyp_len = 0
    for ref, hyp in zip(refs, hyps):
        ref, hyp = list(ref), list(hyp)
        ref_len += len(ref)
        hyp_len += len(hyp)
        for n in range(1, max_order + 1):
            h_counts = _ngram_counts(hyp, n)
            r_counts = _ngram_counts(ref, n)
            total[n - 1] += max(len(hyp) - n + 1, 0)
            matched[n - 1] += sum(min(c, r_counts[g]) for g, c in h_counts.items())
    if hyp_len == 0:
        return 0.0
    log_precisions = []
    for n in range(1, max_order + 1):
        num, den = matched[n - 1], total[n - 1]
        if n >= 2:
            num, den = num + 1.0, den + 1.0
        if num == 0 or den == 0:
            return 0.0
        log_precisions.append(math.log(num / den))
    bp = 1.0 if hyp_len >= ref_len else math.exp(1.0 - ref_len / hyp_len)
    return 100.0 * bp * math.exp(sum(log_precisions) / max_order)


def word_kl(corpus_a, corpus_b, eps=1e-10):
    """KL(freq_a || freq_b) over unigram frequencies, smoothing only freq_b."""
    if len(corpus_a) == 0 or len(corpus_b) == 0:
        raise DataError("both corpora must be non-empty")
    count_a = Counter(w for seq in corpus_a for w in seq)
    count_b = Counter(w for seq in corpus_b for w in seq)
    vocab = sorted(set(count_a) | set(count_b), key=repr)
    na = sum(count_a.values())
    nb = sum(count_b.values())
    if na == 0 or nb == 0:
        raise DataError("corpora must contain at least one token")
    kl = 0.0
    denom_b = nb + len(vocab) * eps
    for w in vocab:
        p = count_a[w] / na
        if p == 0.0:
            continue
        q = (count_b[w] + eps) / denom_b
        kl += p * math.log(p / q)
    return kl


# ---- importance-sampled NLL -------------------------------------------------


def _gaussian_logpdf(z, mean, log_var):
    d = z.shape[-1]
    r = z - mean
    return (-0.5 * np.sum(r * r * np.exp(-log_var), axis=-1)
            - 0.5 * np.sum(log_var + np.zeros_like(r), axis=-1)
            - 0.5 * d * nn.LOG_2PI)


def estimate_log_z(prior, n_draws=100_000, rng=None, chunk=10_000):
    """log of the prior partition constant: log E_{p0}[exp F(z)].

    Computed as a log-mean-exp over reference draws, chunked to bound
    memory.  Cache the result per checkpoint; it is reused across examples.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    pieces = []
    left = int(n_draws)
    while left > 0:
        take = min(chunk, left)
        z = rng.standard_normal((take, prior.latent_dim))
        pieces.append(prior.marginal_energy(z))
        left -= take
    f_all = np.concatenate(pieces)
    return float(nn.logsumexp(f_all) - np.log(n_draws))


def nll_importance_sampling(model, batch, n_samples=500, rng=None, log_z=None):
    """Per-example -log p(x), importance-sampled from the amortised posterior.

    Returns an (B,) array of per-sequence nats.  Weights are handled in
    log-space throughout; an example whose every weight underflows to -inf
    raises an evaluation error.
    """
    if n_samples < 1:
        raise DataError("n_samples must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    if log_z is None:
        log_z = estimate_log_z(model.prior, rng=rng)
    post, _ = model.encode_batch(batch)
    B, d = post.mean.shape
    out = np.empty(B)
    from .model import _tile_batch
    for i in range(B):
        mean, lv = post.mean[i], post.log_var[i]
        e = rng.standard_normal((n_samples, d))
        z = mean[None, :] + np.exp(0.5 * lv)[None, :] * e
        one = _slice_batch(batch, i, model.config.modality)
        tiled = _tile_batch(one, n_samples, model.config.modality)
        ll, _ = model.loglik_batch(tiled, z)
        log_prior = model.prior.unnormalized_log_prior(z) - log_z
        log_q = _gaussian_logpdf(z, mean[None, :], lv[None, :])
        log_w = ll + log_prior - log_q
        if np.all(np.isinf(log_w) & (log_w < 0)):
            raise EvaluationError(f"all importance weights underflow for example {i}")
        out[i] = -(nn.logsumexp(log_w) - np.log(n_samples))
    return out


def _slice_batch(batch, i, modality):
    if modality == "points":
        return {"x": batch["x"][i : i + 1]}
    if modality == "document":
        return {"counts": batch["counts"][i : i + 1]}
    return {k: batch[k][i : i + 1] for k in ("inputs", "targets", "mask")}


# ---- attribute-controlled generation ----------------------------------------


def attribute_control_accuracy(model, label, n, judge, rng, langevin=None,
                               temperature=1.0, greedy=False):
    """Fraction of label-conditioned generations the judge assigns to label.

    Latents are drawn from the label-restricted prior by Langevin ascent on
    the chosen logit plus the reference log-density, then decoded by the
    sequence decoder.  ``judge`` maps a list of token-id lists to indices.
    """
    K = model.config.n_categories
    if K == 1:
        return 1.0
    cfg = langevin if langevin is not None else LangevinConfig()
    z = sample_conditional(model.prior, label, cfg, n, rng)
    seqs = model.decoder.sample_batch(z, rng, temperature=temperature, greedy=greedy)
    judged = np.asarray(judge(seqs), dtype=np.int64)
    return float(np.mean(judged == label))


def make_self_judge(model):
    """Judge that runs the model's own classifier on generated sequences."""
    from .generator import SequenceExample, pack_sequences

    def judge(seqs):
        examples = [SequenceExample(ids=list(s) if len(s) > 0 else [model.config.vocab_size - 1])
                    for s in seqs]
        inputs, targets, mask = pack_sequences(examples, model.config.vocab_size)
        idx, _ = classify(model, {"inputs": inputs, "targets": targets, "mask": mask})
        return idx

    return judge


# ---- report writing ---------------------------------------------------------


def write_report(path, rows):
    """Delimited metric table: name, value, n, seed, checkpoint id."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("metric\tvalue\tn\tseed\tcheckpoint\n")
        for name, value, n, seed, ckpt in rows:
            fh.write(f"{name}\t{value:.10e}\t{n}\t{seed}\t{ckpt}\n")
