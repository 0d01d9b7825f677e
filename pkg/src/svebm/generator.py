"""Top-down decoders p(x|z) and the vocabulary / example containers.

Three observation models are provided:

* ``SequenceDecoder`` — autoregressive GRU over tokens.  The latent vector
  initialises the hidden state through a tanh affine map and is concatenated
  to every step's input, a strong-conditioning scheme that keeps the decoder
  tied to z.  Scoring is teacher-forced from BOS and includes the EOS term;
  PAD positions are masked out of the loss.
* ``DocumentDecoder`` — bag-of-words multinomial: an MLP maps z to V logits
  and the log-likelihood is sum_w count_w * log softmax(logits)_w.  The
  multinomial coefficient is omitted; it is constant in the parameters, so
  gradients are unaffected.  Reported likelihoods follow this convention.
* ``PointDecoder`` — diagonal Gaussian over coordinate vectors with an MLP
  mean and a learned per-dimension log-scale.

Each decoder exposes batched scoring that returns a cache, and a backward
pass producing parameter gradients plus the gradient on z, so the
surrounding objectives can assemble full end-to-end gradients by hand.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import nn
from .errors import ContractViolation, DataError

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

LOG_2PI = float(np.log(2.0 * np.pi))


class Vocabulary:
    """Dense token <-> id mapping with fixed reserved ids.

    Ids 0..3 are PAD, BOS, EOS, UNK in that order; content tokens follow.
    """

    def __init__(self, tokens):
        tokens = list(tokens)
        if tokens[: len(RESERVED)] != list(RESERVED):
            tokens = list(RESERVED) + tokens
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}
        if len(self.index) != len(tokens):
            raise DataError("duplicate token in vocabulary")

    def __len__(self):
        return len(self.tokens)

    def to_id(self, token):
        return self.index.get(token, UNK)

    def to_token(self, idx):
        if not 0 <= idx < len(self.tokens):
            raise DataError(f"token id {idx} out of range for V={len(self.tokens)}")
        return self.tokens[idx]

    def encode(self, words):
        return [self.to_id(w) for w in words]

    def decode(self, ids, keep_reserved=False):
        if keep_reserved:
            return [self.to_token(i) for i in ids]
        return [self.to_token(i) for i in ids if i >= len(RESERVED)]

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            for t in self.tokens:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            tokens = [line.rstrip("\n") for line in fh if line.rstrip("\n")]
        if tokens[: len(RESERVED)] != list(RESERVED):
            raise DataError(f"vocabulary file {path} does not start with reserved tokens")
        return cls(tokens[len(RESERVED):])


@dataclass
class SequenceExample:
    """Token-id list (content only, no BOS/EOS) with an optional label."""

    ids: list = field(default_factory=list)
    label: Optional[int] = None

    def validate(self, vocab_size, max_len=None):
        if len(self.ids) == 0:
            raise ContractViolation("sequence must be non-empty")
        ids = np.asarray(self.ids)
        if ids.min() < 0 or ids.max() >= vocab_size:
            raise DataError("token id out of vocabulary")
        if np.any(ids == EOS):
            raise DataError("interior EOS in sequence")
        if max_len is not None and len(self.ids) > max_len:
            raise DataError(f"sequence length {len(self.ids)} exceeds max {max_len}")


@dataclass
class DocumentExample:
    """Bag-of-words count vector with an optional label."""

    counts: np.ndarray = None
    label: Optional[int] = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)

    def validate(self, vocab_size):
        if self.counts.shape != (vocab_size,):
            raise DataError(f"count vector has shape {self.counts.shape}, want ({vocab_size},)")
        if np.any(self.counts < 0):
            raise DataError("negative count")
        if self.counts.sum() < 1:
            raise DataError("document must have total count >= 1")


def pack_sequences(examples, vocab_size, max_len=None):
    """Pad a list of SequenceExample into teacher-forcing arrays.

    Returns (inputs, targets, mask), each (B, T+1) where T is the longest
    content length: inputs are BOS-prefixed, targets end with EOS, mask is 1
    through the EOS target.
    """
    for ex in examples:
        ex.validate(vocab_size, max_len)
    lengths = [len(ex.ids) for ex in examples]
    B, T = len(examples), max(lengths)
    inputs = np.full((B, T + 1), PAD, dtype=np.int64)
    targets = np.full((B, T + 1), PAD, dtype=np.int64)
    mask = np.zeros((B, T + 1), dtype=np.float64)
    inputs[:, 0] = BOS
    for i, ex in enumerate(examples):
        n = lengths[i]
        inputs[i, 1 : n + 1] = ex.ids
        targets[i, :n] = ex.ids
        targets[i, n] = EOS
        mask[i, : n + 1] = 1.0
    return inputs, targets, mask


# ---- sequence decoder -------------------------------------------------------


class SequenceDecoder:
    """GRU language model conditioned on z.

    The embedding table is shared with the sequence encoder and owned by the
    caller; its gradients are returned separately from this decoder's own.
    """

    def __init__(self, embedding, embed_dim, hidden_size, latent_dim, vocab_size, rng,
                 max_len=60):
        self.embedding = embedding
        self.embed_dim = int(embed_dim)
        self.hidden_size = int(hidden_size)
        self.latent_dim = int(latent_dim)
        self.vocab_size = int(vocab_size)
        self.max_len = int(max_len)
        self.gru = nn.GruCell(embed_dim + latent_dim, hidden_size, rng)
        self.init_map = nn.Affine(latent_dim, hidden_size, rng)
        self.out = nn.Affine(hidden_size, vocab_size, rng)

    def named_params(self, prefix="dec"):
        out = {f"{prefix}.gru.{k}": v for k, v in self.gru.params.items()}
        out.update({f"{prefix}.init.{k}": v for k, v in self.init_map.params.items()})
        out.update({f"{prefix}.out.{k}": v for k, v in self.out.params.items()})
        return out

    def _initial_state(self, z):
        pre, cache = self.init_map.forward(z)
        h0 = np.tanh(pre)
        return h0, (cache, h0)

    def score_batch(self, inputs, targets, mask, z):
        """Teacher-forced log p(x|z) per row.

        inputs/targets/mask are (B, S) arrays from pack_sequences, z is
        (B, d).  Returns (ll (B,), cache).
        """
        B, S = inputs.shape
        if S - 1 > self.max_len:
            raise DataError(f"sequence length {S - 1} exceeds max {self.max_len}")
        z = np.asarray(z, dtype=np.float64)
        emb, emb_cache = self.embedding.forward(inputs)  # (B, S, E)
        zs = np.broadcast_to(z[:, None, :], (B, S, self.latent_dim))
        xs = np.concatenate([emb, zs], axis=2).swapaxes(0, 1)  # (S, B, E+d)
        h0, h0_cache = self._initial_state(z)
        step_mask = mask.swapaxes(0, 1)
        hs, gru_caches = self.gru.run(xs, h0, step_mask)

        flat_h = hs.reshape(S * B, self.hidden_size)
        logits, out_cache = self.out.forward(flat_h)
        logp = nn.log_softmax(logits).reshape(S, B, self.vocab_size)
        tgt = targets.swapaxes(0, 1)  # (S, B)
        picked = np.take_along_axis(logp, tgt[:, :, None], axis=2)[:, :, 0]
        ll = np.sum(picked * step_mask, axis=0)
        cache = (emb_cache, gru_caches, h0_cache, out_cache,
                 logits, tgt, step_mask, (B, S))
        return ll, cache

    def backward(self, cache, dll):
        """Backprop sum_i dll[i] * ll[i].  Returns (grads, dz, emb_grads)."""
        emb_cache, gru_caches, h0_cache, out_cache, logits, tgt, step_mask, (B, S) = cache
        w = np.asarray(dll, dtype=np.float64)

        probs = nn.softmax(logits).reshape(S, B, self.vocab_size)
        dlogits = -probs
        np.add.at(dlogits, (np.arange(S)[:, None], np.arange(B)[None, :], tgt), 1.0)
        dlogits *= (w[None, :] * step_mask)[:, :, None]

        g_out, dflat_h = self.out.backward(out_cache, dlogits.reshape(S * B, self.vocab_size))
        dhs = dflat_h.reshape(S, B, self.hidden_size)
        g_gru, dxs, dh0 = self.gru.run_backward(gru_caches, dhs)

        init_cache, h0 = h0_cache
        g_init, dz_h0 = self.init_map.backward(init_cache, dh0 * (1.0 - h0**2))

        demb = dxs[:, :, : self.embed_dim].swapaxes(0, 1)
        dz = dz_h0 + dxs[:, :, self.embed_dim :].sum(axis=0)
        emb_grads = self.embedding.backward(emb_cache, demb)["table"]

        grads = {f"gru.{k}": v for k, v in g_gru.items()}
        grads.update({f"init.{k}": v for k, v in g_init.items()})
        grads.update({f"out.{k}": v for k, v in g_out.items()})
        return grads, dz, emb_grads

    def log_likelihood(self, example, z, vocab_size=None):
        """Convenience scalar scorer for a single example."""
        inputs, targets, mask = pack_sequences([example], self.vocab_size, self.max_len)
        ll, _ = self.score_batch(inputs, targets, mask, np.asarray(z)[None, :])
        return float(ll[0])

    def sample_batch(self, z, rng, max_len=None, temperature=1.0, greedy=False):
        """Ancestral sampling, one sequence per row of z.

        Reserved PAD/BOS ids are excluded from the predictive distribution.
        Generation stops at EOS or after max_len content tokens.  Returns a
        list of token-id lists (content only).
        """
        if temperature <= 0:
            raise ContractViolation("temperature must be > 0")
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        B = z.shape[0]
        cap = self.max_len if max_len is None else int(max_len)
        h, _ = self._initial_state(z)
        tok = np.full(B, BOS, dtype=np.int64)
        alive = np.ones(B, dtype=bool)
        out = [[] for _ in range(B)]
        for _ in range(cap):
            emb, _ = self.embedding.forward(tok)
            x = np.concatenate([emb, z], axis=1)
            h, _ = self.gru.step(x, h)
            logits, _ = self.out.forward(h)
            logits[:, PAD] = -np.inf
            logits[:, BOS] = -np.inf
            if greedy:
                nxt = np.argmax(logits, axis=1)
            else:
                p = nn.softmax(logits / temperature)
                u = rng.random((B, 1))
                nxt = np.argmax(np.cumsum(p, axis=1) > u, axis=1)
            for i in range(B):
                if alive[i]:
                    if nxt[i] == EOS:
                        alive[i] = False
                    else:
                        out[i].append(int(nxt[i]))
            if not alive.any():
                break
            tok = np.where(alive, nxt, EOS)
        return out

    def sample(self, z, rng, max_len=None, temperature=1.0, greedy=False):
        ids = self.sample_batch(np.asarray(z)[None, :], rng, max_len, temperature, greedy)[0]
        return SequenceExample(ids=ids)


# ---- document decoder -------------------------------------------------------


class DocumentDecoder:
    """Multinomial bag-of-words model: MLP from z to V logits."""

    def __init__(self, latent_dim, vocab_size, hidden, rng):
        self.latent_dim = int(latent_dim)
        self.vocab_size = int(vocab_size)
        self.mlp = nn.Mlp((latent_dim, *hidden, vocab_size), rng)

    def named_params(self, prefix="dec"):
        return {f"{prefix}.mlp.{k}": v for k, v in self.mlp.params.items()}

    def score_batch(self, counts, z):
        """counts (B, V), z (B, d) -> (ll (B,), cache)."""
        counts = np.asarray(counts, dtype=np.float64)
        logits, mlp_cache = self.mlp.forward(np.asarray(z, dtype=np.float64))
        logp = nn.log_softmax(logits)
        ll = np.sum(counts * logp, axis=1)
        cache = (mlp_cache, logits, counts)
        return ll, cache

    def backward(self, cache, dll):
        mlp_cache, logits, counts = cache
        w = np.asarray(dll, dtype=np.float64)[:, None]
        totals = counts.sum(axis=1, keepdims=True)
        dlogits = w * (counts - totals * nn.softmax(logits))
        grads, dz = self.mlp.backward(mlp_cache, dlogits)
        return {f"mlp.{k}": v for k, v in grads.items()}, dz

    def log_likelihood(self, example, z):
        ll, _ = self.score_batch(example.counts[None, :], np.asarray(z)[None, :])
        return float(ll[0])


# ---- point decoder ----------------------------------------------------------


class PointDecoder:
    """Diagonal Gaussian over coordinates: MLP mean, learned log-scales."""

    def __init__(self, latent_dim, x_dim, hidden, rng):
        self.latent_dim = int(latent_dim)
        self.x_dim = int(x_dim)
        self.mlp = nn.Mlp((latent_dim, *hidden, x_dim), rng)
        self.log_sigma = np.zeros(x_dim)

    def named_params(self, prefix="dec"):
        out = {f"{prefix}.mlp.{k}": v for k, v in self.mlp.params.items()}
        out[f"{prefix}.log_sigma"] = self.log_sigma
        return out

    def score_batch(self, x, z):
        """x (B, x_dim), z (B, d) -> (ll (B,), cache)."""
        x = np.asarray(x, dtype=np.float64)
        mean, mlp_cache = self.mlp.forward(np.asarray(z, dtype=np.float64))
        inv_var = np.exp(-2.0 * self.log_sigma)
        resid = x - mean
        ll = -0.5 * np.sum(resid**2 * inv_var + 2.0 * self.log_sigma + LOG_2PI, axis=1)
        cache = (mlp_cache, resid, inv_var)
        return ll, cache

    def backward(self, cache, dll):
        mlp_cache, resid, inv_var = cache
        w = np.asarray(dll, dtype=np.float64)[:, None]
        dmean = w * resid * inv_var
        grads, dz = self.mlp.backward(mlp_cache, dmean)
        out = {f"mlp.{k}": v for k, v in grads.items()}
        out["log_sigma"] = np.sum(w * (resid**2 * inv_var - 1.0), axis=0)
        return out, dz

    def sample_batch(self, z, rng):
        mean, _ = self.mlp.forward(np.atleast_2d(np.asarray(z, dtype=np.float64)))
        return mean + np.exp(self.log_sigma) * rng.standard_normal(mean.shape)

    def mean_batch(self, z):
        mean, _ = self.mlp.forward(np.atleast_2d(np.asarray(z, dtype=np.float64)))
        return mean
