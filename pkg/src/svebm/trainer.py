"""Training loop: persistent-chain prior sampling, amortised posterior
sampling, and three alternating parameter updates per iteration.

Each iteration runs, in order: draw negative latents from the persistent
chains, draw positive latents through the encoder, then compute all three
gradient sets at the iteration-start parameters before applying any update:
the prior update (positive/negative energy difference plus the lam-weighted
MI gradient), the encoder+decoder update (surrogate objective plus the MI
gradient through the reparameterised draw), and, when a labeled batch is
present, the supervised update touching prior and encoder.

Determinism: one PCG64 generator drives chain selection, Langevin noise,
reparameterisation, and epoch shuffling; its state, the shuffle cursors,
the chains, and all optimizer moments go into the checkpoint, so a resumed
run reproduces the uninterrupted one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from . import nn
from .errors import CheckpointError, ConfigError
from .model import Model, ModelConfig
from .objectives import (LossBreakdown, alpha_descent_grads, combine_total,
                         psi_descent_grads, supervised_pass, unsupervised_pass)
from .sampler import ChainPool, LangevinConfig, sample_prior

CHECKPOINT_FORMAT = 1

LOG_FIELDS = ("recon", "kl", "prior_energy", "mutual_info", "supervised", "total")
LOG_HEADER = "step\t" + "\t".join(LOG_FIELDS)


@dataclass
class TrainConfig:
    """Loop hyperparameters.

    Learning rates may be zero (freezes the group); negative rates are
    rejected.  ``batch_labeled`` = 0 disables the supervised step.  By
    default a labeled batch contributes only the classification loss;
    ``labeled_elbo`` = True additionally descends the
    reconstruction/regularisation objective on that batch (encoder and
    decoder only, information term off).
    """

    iterations: int = 1000
    lr_prior: float = 1e-4
    lr_gen: float = 1e-3
    lr_cls: float = 1e-3
    batch_unlabeled: int = 64
    batch_labeled: int = 0
    labeled_elbo: bool = False
    langevin: LangevinConfig = field(default_factory=LangevinConfig)
    n_chains: int = 1000
    lam: float = 0.0
    seed: int = 0
    optimizer: str = "adam"
    grad_clip: float = 5.0
    posterior_samples: int = 1
    kl_warmup: int = 0
    log_every: int = 1
    ckpt_every: int = 0

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")
        for name in ("lr_prior", "lr_gen", "lr_cls"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.batch_unlabeled < 1:
            raise ConfigError("batch_unlabeled must be >= 1")
        if self.batch_labeled < 0:
            raise ConfigError("batch_labeled must be >= 0")
        if self.lam < 0:
            raise ConfigError("lam must be >= 0")
        if self.n_chains < self.batch_unlabeled:
            raise ConfigError("n_chains must be >= batch_unlabeled")
        if self.posterior_samples < 1:
            raise ConfigError("posterior_samples must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not isinstance(self.langevin, LangevinConfig):
            self.langevin = LangevinConfig(**self.langevin)

    def to_dict(self):
        d = asdict(self)
        d["langevin"] = asdict(self.langevin)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if isinstance(d.get("langevin"), dict):
            d["langevin"] = LangevinConfig(**d["langevin"])
        return cls(**d)


class TrainState:
    """Everything the loop mutates: model, chains, optimizers, RNG, cursors."""

    def __init__(self, model: Model, cfg: TrainConfig, rng=None):
        self.model = model
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed) if rng is None else rng
        self.pool = ChainPool(cfg.n_chains, model.config.latent_dim, self.rng)
        self.opt_alpha = nn.make_optimizer(cfg.optimizer, model.params_alpha(), cfg.lr_prior)
        self.opt_psi = nn.make_optimizer(cfg.optimizer, model.params_psi(), cfg.lr_gen)
        self.opt_gamma = nn.make_optimizer(cfg.optimizer, model.params_gamma(), cfg.lr_cls)
        self.step = 0
        self.perm = None
        self.cursor = 0
        self.labeled_perm = None
        self.labeled_cursor = 0
        self.run_meta = {}  # CLI provenance (mode, data paths); echoed in checkpoints


def init_state(model, cfg, rng=None):
    return TrainState(model, cfg, rng)


def _next_indices(state, n, batch, labeled=False):
    """Epoch-reshuffled minibatch indices; short final slice wraps to a new epoch."""
    perm = state.labeled_perm if labeled else state.perm
    cursor = state.labeled_cursor if labeled else state.cursor
    if perm is None or len(perm) != n or cursor + batch > n:
        perm = state.rng.permutation(n)
        cursor = 0
    idx = perm[cursor : cursor + batch]
    cursor += batch
    if labeled:
        state.labeled_perm, state.labeled_cursor = perm, cursor
    else:
        state.perm, state.cursor = perm, cursor
    return idx


def _kl_weight(state):
    w = state.cfg.kl_warmup
    if w <= 0:
        return 1.0
    return min(1.0, (state.step + 1) / w)


def train_step(state, batch, labeled_batch=None, labels=None):
    """One full iteration; mutates and returns (state, LossBreakdown)."""
    cfg = state.cfg
    model = state.model

    z_neg, _ = sample_prior(state.pool, model.prior, cfg.langevin,
                            cfg.batch_unlabeled, state.rng)

    bds, alpha_list, psi_list = [], [], []
    kl_w = _kl_weight(state)
    for _ in range(cfg.posterior_samples):
        bd, aux = unsupervised_pass(model, batch, cfg.lam, state.rng)
        bds.append(bd)
        alpha_list.append(alpha_descent_grads(model, aux, z_neg, cfg.lam))
        psi_list.append(psi_descent_grads(model, aux, cfg.lam, kl_weight=kl_w))
    alpha_grads = _average_grads(alpha_list)
    psi_grads = _average_grads(psi_list)
    bd = LossBreakdown(*[float(np.mean([getattr(b, f) for b in bds]))
                         for f in LossBreakdown.FIELDS])

    gamma_grads = None
    if labeled_batch is not None and labels is not None and len(labels) > 0:
        sup_loss, gamma_grads = supervised_pass(model, labeled_batch, labels)
        if cfg.labeled_elbo:
            _, laux = unsupervised_pass(model, labeled_batch, 0.0, state.rng)
            psi_grads = nn.add_grads(
                psi_grads, psi_descent_grads(model, laux, 0.0, kl_weight=kl_w))
        bd.supervised = sup_loss
        bd.total = combine_total(bd.recon, bd.kl, bd.prior_energy,
                                 bd.mutual_info, cfg.lam, sup_loss)
    bd.validate()

    if cfg.grad_clip > 0:
        nn.clip_grads(alpha_grads, cfg.grad_clip)
        nn.clip_grads(psi_grads, cfg.grad_clip)
        if gamma_grads is not None:
            nn.clip_grads(gamma_grads, cfg.grad_clip)

    state.opt_alpha.step(alpha_grads)
    state.opt_psi.step(psi_grads)
    if gamma_grads is not None:
        state.opt_gamma.step(gamma_grads)

    state.step += 1
    return state, bd


def _average_grads(grad_dicts):
    if len(grad_dicts) == 1:
        return grad_dicts[0]
    out = grad_dicts[0]
    for g in grad_dicts[1:]:
        out = nn.add_grads(out, g)
    return {k: v / len(grad_dicts) for k, v in out.items()}


def format_log_line(step, bd):
    vals = "\t".join(f"{getattr(bd, f):.10e}" for f in LOG_FIELDS)
    return f"{step}\t{vals}"


def fit(state, data, labeled=None, log_path=None, ckpt_path=None, quiet=True):
    """Run the loop from state.step to cfg.iterations.

    ``data`` and ``labeled`` expose .n, .batch(indices), and (labeled only)
    .labels.  The log is appended one line per log_every steps; checkpoints
    are written every ckpt_every steps and at the end.
    """
    cfg = state.cfg
    use_labels = labeled is not None and cfg.batch_labeled > 0
    log_fh = None
    if log_path is not None:
        path = Path(log_path)
        fresh = not path.exists() or path.stat().st_size == 0
        log_fh = open(path, "a", encoding="utf-8")
        if fresh:
            log_fh.write(LOG_HEADER + "\n")
    try:
        while state.step < cfg.iterations:
            idx = _next_indices(state, data.n, cfg.batch_unlabeled)
            batch = data.batch(idx)
            lbatch = labels = None
            if use_labels:
                lidx = _next_indices(state, labeled.n, cfg.batch_labeled, labeled=True)
                lbatch = labeled.batch(lidx)
                labels = labeled.labels[lidx]
            state, bd = train_step(state, batch, lbatch, labels)
            if log_fh is not None and (state.step % max(cfg.log_every, 1) == 0
                                       or state.step == cfg.iterations):
                log_fh.write(format_log_line(state.step, bd) + "\n")
            if not quiet and state.step % 50 == 0:
                print(f"step {state.step}: {bd}")
            if ckpt_path is not None and cfg.ckpt_every > 0 \
                    and state.step % cfg.ckpt_every == 0:
                save_checkpoint(ckpt_path, state)
        if ckpt_path is not None:
            save_checkpoint(ckpt_path, state)
    finally:
        if log_fh is not None:
            log_fh.close()
    return state


# ---- checkpointing ----------------------------------------------------------


def save_checkpoint(path, state):
    """Single-file snapshot: parameters, chains, optimizer moments, RNG, cursors."""
    arrays = {}
    for k, v in state.model.state_arrays().items():
        arrays[f"param/{k}"] = v
    arrays["chains/states"] = state.pool.states
    arrays["chains/ages"] = state.pool.ages
    opt_meta = {}
    for tag, opt in (("alpha", state.opt_alpha), ("psi", state.opt_psi),
                     ("gamma", state.opt_gamma)):
        sd = opt.state_dict()
        opt_meta[tag] = {"t": int(sd["t"])}
        for k, arr in sd.items():
            if k != "t":
                arrays[f"opt_{tag}/{k}"] = arr
    if state.perm is not None:
        arrays["data/perm"] = state.perm
    if state.labeled_perm is not None:
        arrays["data/labeled_perm"] = state.labeled_perm
    meta = {
        "format": CHECKPOINT_FORMAT,
        "step": state.step,
        "model_config": state.model.config.to_dict(),
        "train_config": state.cfg.to_dict(),
        "rng_state": state.rng.bit_generator.state,
        "cursor": state.cursor,
        "labeled_cursor": state.labeled_cursor,
        "optimizers": opt_meta,
        "run": state.run_meta,
    }
    arrays["__meta__"] = np.array(json.dumps(meta))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    tmp.replace(path)


def load_checkpoint(path):
    """Rebuild a TrainState from a checkpoint file."""
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as zf:
            try:
                meta = json.loads(str(zf["__meta__"][()]))
            except KeyError:
                raise CheckpointError(f"{path} is not a checkpoint (missing metadata)")
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise CheckpointError(f"unsupported checkpoint format {meta.get('format')}")
            arrays = {k: zf[k] for k in zf.files if k != "__meta__"}
    except CheckpointError:
        raise
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc

    model_cfg = ModelConfig.from_dict(meta["model_config"])
    train_cfg = TrainConfig.from_dict(meta["train_config"])
    model = Model(model_cfg, np.random.default_rng(0))
    model.load_arrays({k[len("param/"):]: v for k, v in arrays.items()
                       if k.startswith("param/")})
    state = TrainState(model, train_cfg)
    state.pool.states[...] = arrays["chains/states"]
    state.pool.ages[...] = arrays["chains/ages"]
    for tag, opt in (("alpha", state.opt_alpha), ("psi", state.opt_psi),
                     ("gamma", state.opt_gamma)):
        sd = {"t": meta["optimizers"][tag]["t"]}
        prefix = f"opt_{tag}/"
        for k, arr in arrays.items():
            if k.startswith(prefix):
                sd[k[len(prefix):]] = arr
        opt.load_state_dict(sd)
    state.step = int(meta["step"])
    state.rng.bit_generator.state = meta["rng_state"]
    state.cursor = int(meta["cursor"])
    state.labeled_cursor = int(meta["labeled_cursor"])
    state.perm = arrays.get("data/perm")
    state.labeled_perm = arrays.get("data/labeled_perm")
    state.run_meta = meta.get("run", {})
    return state
