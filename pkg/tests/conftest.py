"""Shared helpers: central-difference gradients and tiny model factories."""

import numpy as np

import svebm
from svebm.datasets import GrammarSpec


def numeric_grad(f, arrays, eps=1e-6):
    """Central finite differences of scalar f() w.r.t. a dict of arrays.

    Perturbs entries in place and restores them, so f may close over the
    same arrays.
    """
    out = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = f()
            flat[i] = orig - eps
            lo = f()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2 * eps)
        out[name] = g
    return out


def rel_error(analytic, numeric):
    """Scale-free gradient discrepancy: ||a - n|| / max(||a||, ||n||, 1e-8)."""
    a = np.concatenate([np.ravel(analytic[k]) for k in sorted(analytic)])
    n = np.concatenate([np.ravel(numeric[k]) for k in sorted(numeric)])
    denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-8)
    return np.linalg.norm(a - n) / denom


def tiny_points_model(rng, latent_dim=2, n_categories=3, x_dim=2):
    cfg = svebm.ModelConfig(modality="points", latent_dim=latent_dim,
                            n_categories=n_categories, x_dim=x_dim,
                            enc_hidden=(8,), dec_hidden=(8,),
                            prior_hidden=(8,))
    return svebm.Model(cfg, rng)


def tiny_sequence_model(rng, vocab_size=12, latent_dim=3, n_categories=3,
                        max_len=8):
    cfg = svebm.ModelConfig(modality="sequence", latent_dim=latent_dim,
                            n_categories=n_categories, vocab_size=vocab_size,
                            embed_dim=5, dec_hidden_size=6, enc_hidden=(7,),
                            prior_hidden=(8,), max_len=max_len)
    return svebm.Model(cfg, rng)


def tiny_document_model(rng, vocab_size=11, latent_dim=3, n_categories=4):
    cfg = svebm.ModelConfig(modality="document", latent_dim=latent_dim,
                            n_categories=n_categories, vocab_size=vocab_size,
                            enc_hidden=(6,), dec_hidden=(6,),
                            prior_hidden=(8,))
    return svebm.Model(cfg, rng)


def zero_energy_head(prior):
    """Zero the final energy-net layer: logits identically 0, F = ln K."""
    last = max(int(k[1:]) for k in prior.params if k.startswith("w"))
    prior.params[f"w{last}"][...] = 0.0
    prior.params[f"b{last}"][...] = 0.0
    return prior


def conjugate_points_model(a=0.8, b=0.3, sigma_x=0.5, var_inflation=1.0, k=4):
    """1-D linear-Gaussian model with hand-set exact parameters.

    x = a z + b + sigma_x e with z from the reference prior (the energy head
    is zeroed), so the marginal is N(b, a^2 + sigma_x^2) and the posterior
    over z is Gaussian in closed form.  The encoder is set to that posterior
    with its variance scaled by var_inflation.
    """
    cfg = svebm.ModelConfig(modality="points", latent_dim=1, n_categories=k,
                            x_dim=1, enc_hidden=(), dec_hidden=(),
                            prior_hidden=(4,))
    model = svebm.Model(cfg, np.random.default_rng(0))
    zero_energy_head(model.prior)
    model.decoder.mlp.params["w0"][...] = a
    model.decoder.mlp.params["b0"][...] = b
    model.decoder.log_sigma[...] = np.log(sigma_x)
    s2 = a * a + sigma_x * sigma_x
    model.encoder.head_mean.params["w"][...] = a / s2
    model.encoder.head_mean.params["b"][...] = -a * b / s2
    model.encoder.head_log_var.params["w"][...] = 0.0
    model.encoder.head_log_var.params["b"][...] = np.log(
        var_inflation * sigma_x * sigma_x / s2)
    stats = {"a": a, "b": b, "sigma_x": sigma_x, "marginal_var": s2,
             "q_var": var_inflation * sigma_x * sigma_x / s2,
             "post_var": sigma_x * sigma_x / s2}
    return model, stats


def analytic_marginal_nll(x, stats):
    """Closed-form -log p(x) for the conjugate model above."""
    s2 = stats["marginal_var"]
    r = np.asarray(x).reshape(-1) - stats["b"]
    return 0.5 * np.log(2 * np.pi * s2) + r * r / (2 * s2)


def random_sequence_batch(rng, vocab_size, n, max_len=8, content_max=6):
    """Packed (inputs, targets, mask) batch of random content sequences."""
    from svebm.generator import SequenceExample, pack_sequences
    examples = []
    content_max = min(content_max, max_len)
    for _ in range(n):
        length = int(rng.integers(1, content_max + 1))
        ids = rng.integers(4, vocab_size, size=length).tolist()
        examples.append(SequenceExample(ids=ids, label=None))
    return pack_sequences(examples, vocab_size, max_len)


def two_word_grammar():
    """Deterministic two-class grammar small enough for exhaustive checks."""
    return GrammarSpec(
        keywords=(("alpha", "beta"), ("gamma", "delta")),
        fillers=("one", "two", "three", "four"),
        patterns=(("<K>", "<F>", "<F>", "<K>"), ("<F>", "<K>", "<K>", "<F>")),
        min_len=4, max_len=4)
