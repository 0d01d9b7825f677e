"""Model bundle: energy prior + amortised encoder + decoder for one modality.

The bundle owns every trainable array and exposes them as flat name -> array
dicts in three overlapping groups used by the training loop:

* ``alpha``  — prior energy network.
* ``psi``    — encoder + decoder (and the shared token embedding).
* ``gamma``  — prior + encoder (+ shared embedding), the parameters touched
  by the supervised classification loss.

Modalities: ``points`` (Gaussian decoder over coordinate vectors),
``sequence`` (GRU autoregressive decoder, embedding shared with the
encoder), ``document`` (multinomial bag-of-words decoder).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .errors import ConfigError, ContractViolation
from .generator import DocumentDecoder, PointDecoder, SequenceDecoder
from .inference import MlpEncoder, SequenceEncoder
from .prior import EnergyPrior

MODALITIES = ("points", "sequence", "document")


@dataclass
class ModelConfig:
    modality: str = "points"
    latent_dim: int = 2
    n_categories: int = 2
    x_dim: int = 2                      # points mode
    vocab_size: int = 0                 # text modes; 0 = derive from data
    embed_dim: int = 64                 # sequence mode
    enc_hidden: tuple = (128,)
    dec_hidden: tuple = (128,)          # MLP decoders
    dec_hidden_size: int = 512          # GRU decoder hidden state
    prior_hidden: tuple = (200, 200)
    max_len: int = 60

    def __post_init__(self):
        self.enc_hidden = tuple(int(h) for h in self.enc_hidden)
        self.dec_hidden = tuple(int(h) for h in self.dec_hidden)
        self.prior_hidden = tuple(int(h) for h in self.prior_hidden)
        if self.modality not in MODALITIES:
            raise ConfigError(f"unknown modality {self.modality!r}")
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.n_categories < 2:
            raise ConfigError("n_categories must be >= 2")
        if self.modality in ("sequence", "document") \
                and not (self.vocab_size == 0 or self.vocab_size >= 5):
            # 0 means "derive from the vocabulary file"; Model requires >= 5.
            raise ConfigError("text modalities need vocab_size >= 5")

    def to_dict(self):
        d = asdict(self)
        for k in ("enc_hidden", "dec_hidden", "prior_hidden"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class Model:
    """All networks for one modality plus parameter-group bookkeeping."""

    def __init__(self, config: ModelConfig, rng):
        self.config = config
        c = config
        if c.modality in ("sequence", "document") and c.vocab_size < 5:
            raise ConfigError("vocab_size unresolved: text models need vocab_size >= 5")
        self.prior = EnergyPrior(c.latent_dim, c.n_categories, c.prior_hidden, rng)
        self.embedding = None

        if c.modality == "points":
            self.encoder = MlpEncoder(c.x_dim, c.latent_dim, c.enc_hidden, rng)
            self.decoder = PointDecoder(c.latent_dim, c.x_dim, c.dec_hidden, rng)
        elif c.modality == "document":
            self.encoder = MlpEncoder(c.vocab_size, c.latent_dim, c.enc_hidden, rng,
                                      normalize=True)
            self.decoder = DocumentDecoder(c.latent_dim, c.vocab_size, c.dec_hidden, rng)
        else:
            self.embedding = nn.Embedding(c.vocab_size, c.embed_dim, rng)
            self.encoder = SequenceEncoder(self.embedding, c.embed_dim,
                                           c.dec_hidden_size, c.latent_dim, rng)
            self.decoder = SequenceDecoder(self.embedding, c.embed_dim,
                                           c.dec_hidden_size, c.latent_dim,
                                           c.vocab_size, rng, max_len=c.max_len)

    # ---- parameter groups ---------------------------------------------------

    def params_alpha(self):
        return self.prior.named_params("energy")

    def params_psi(self):
        out = self.encoder.named_params("enc")
        out.update(self.decoder.named_params("dec"))
        if self.embedding is not None:
            out["embed.table"] = self.embedding.params["table"]
        return out

    def params_gamma(self):
        out = self.prior.named_params("energy")
        out.update(self.encoder.named_params("enc"))
        if self.embedding is not None:
            out["embed.table"] = self.embedding.params["table"]
        return out

    def all_params(self):
        out = self.params_alpha()
        out.update(self.params_psi())
        return out

    # ---- encoding -----------------------------------------------------------

    def encode_batch(self, batch):
        """Returns (GaussianPosterior, cache) for a prepared batch dict."""
        m = self.config.modality
        if m == "points":
            return self.encoder.encode_batch(batch["x"])
        if m == "document":
            return self.encoder.encode_batch(batch["counts"])
        return self.encoder.encode_batch(batch["targets"], batch["mask"])

    def encoder_backward(self, cache, dmean, dlog_var):
        """Gradients on the psi/gamma encoder names (incl. shared embedding)."""
        if self.config.modality == "sequence":
            own, emb = self.encoder.backward(cache, dmean, dlog_var)
            grads = {f"enc.{k}": v for k, v in own.items()}
            grads["embed.table"] = emb
            return grads
        own = self.encoder.backward(cache, dmean, dlog_var)
        return {f"enc.{k}": v for k, v in own.items()}

    # ---- decoding -----------------------------------------------------------

    def loglik_batch(self, batch, z):
        """Per-example log p(x|z); returns (ll (B,), cache)."""
        m = self.config.modality
        if m == "points":
            return self.decoder.score_batch(batch["x"], z)
        if m == "document":
            return self.decoder.score_batch(batch["counts"], z)
        return self.decoder.score_batch(batch["inputs"], batch["targets"],
                                        batch["mask"], z)

    def loglik_backward(self, cache, dll):
        """Returns (decoder grads on psi names, dz)."""
        if self.config.modality == "sequence":
            own, dz, emb = self.decoder.backward(cache, dll)
            grads = {f"dec.{k}": v for k, v in own.items()}
            grads["embed.table"] = emb
            return grads, dz
        own, dz = self.decoder.backward(cache, dll)
        return {f"dec.{k}": v for k, v in own.items()}, dz

    def loglik_z_grad(self, batch_one, z):
        """Gradient of log p(x|z) w.r.t. z for one example x and (m, d) z rows."""
        z = np.atleast_2d(np.asarray(z, dtype=np.float64))
        m = z.shape[0]
        tiled = _tile_batch(batch_one, m, self.config.modality)
        _, cache = self.loglik_batch(tiled, z)
        _, dz = self.loglik_backward(cache, np.ones(m))
        return dz

    # ---- checkpoint plumbing ------------------------------------------------

    def state_arrays(self):
        return {k: v for k, v in self.all_params().items()}

    def load_arrays(self, arrays):
        own = self.all_params()
        missing = set(own) - set(arrays)
        extra = set(arrays) - set(own)
        if missing or extra:
            raise ContractViolation(
                f"parameter name mismatch: missing={sorted(missing)} extra={sorted(extra)}"
            )
        for k, v in own.items():
            a = np.asarray(arrays[k], dtype=np.float64)
            if a.shape != v.shape:
                raise ContractViolation(f"shape mismatch for {k}: {a.shape} vs {v.shape}")
            v[...] = a


def _tile_batch(batch_one, m, modality):
    if modality == "points":
        return {"x": np.repeat(np.atleast_2d(batch_one["x"]), m, axis=0)}
    if modality == "document":
        return {"counts": np.repeat(np.atleast_2d(batch_one["counts"]), m, axis=0)}
    return {
        "inputs": np.repeat(batch_one["inputs"], m, axis=0),
        "targets": np.repeat(batch_one["targets"], m, axis=0),
        "mask": np.repeat(batch_one["mask"], m, axis=0),
    }
