"""Command-line entry points: train, eval, sample, classify, plot-density.

Every command is deterministic under (config, seed).  Failures print a
single ``error[code]: message`` line to stderr and exit nonzero: 2 for
configuration and usage problems, 1 for runtime errors.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import metrics as M
from .config import RunConfig, parse_config, write_config
from .datasets import (DocumentData, PointData, PointDataset, SequenceData,
                       kde_grid, load_bow, load_corpus, load_points,
                       save_points, stratified_label_subset)
from .errors import ConfigError, DataError, SvebmError
from .generator import Vocabulary
from .model import Model
from .objectives import mutual_info_zy
from .sampler import ChainPool, LangevinConfig, sample_conditional, sample_prior
from .trainer import TrainState, fit, load_checkpoint

VALID_METRICS = ("accuracy", "homogeneity", "matched_accuracy", "mutual_info",
                 "bleu", "word_kl", "nll")

DEFAULT_METRICS = ("homogeneity", "matched_accuracy")


# ---- data plumbing ----------------------------------------------------------


def _require(value, key):
    if not value:
        raise ConfigError(f"missing required field {key}")
    return value


def _load_vocab(rc):
    path = _require(rc.data.vocab, "data.vocab")
    vocab = Vocabulary.load(path)
    if rc.model.vocab_size not in (0, len(vocab)):
        raise ConfigError(f"model.vocab_size = {rc.model.vocab_size} does not "
                          f"match vocabulary of size {len(vocab)}")
    rc.model.vocab_size = len(vocab)
    return vocab


def _load_split(rc, path, vocab=None):
    m = rc.model.modality
    if m == "points":
        ds = load_points(path)
        return PointData(ds.x, ds.component)
    if m == "sequence":
        seqs = load_corpus(path, vocab)
        return SequenceData(seqs, len(vocab), rc.model.max_len)
    counts, labels = load_bow(path, len(vocab))
    return DocumentData(counts, labels)


def _resolve_data(rc, which="train"):
    """Load the requested split; returns (data, vocab or None)."""
    vocab = None
    if rc.model.modality in ("sequence", "document"):
        vocab = _load_vocab(rc)
    path = getattr(rc.data, which) or _require(rc.data.train,
                                               f"data.{which} (or data.train)")
    return _load_split(rc, path, vocab), vocab


def _labeled_view(rc, data):
    """Labeled stream for semi-supervised training, or None."""
    if rc.data.labeled:
        vocab = None
        if rc.model.modality in ("sequence", "document"):
            vocab = Vocabulary.load(rc.data.vocab)
        labeled = _load_split(rc, rc.data.labeled, vocab)
        if labeled.labels is None or np.any(labeled.labels < 0):
            raise DataError(f"labeled file {rc.data.labeled} has unlabeled rows")
        return labeled
    if rc.data.labeled_fraction > 0:
        if data.labels is None or np.all(data.labels < 0):
            raise DataError("data.labeled_fraction needs labels in data.train")
        keep = data.labels >= 0
        idx = np.flatnonzero(keep)
        sub = stratified_label_subset(data.labels[idx], rc.data.labeled_fraction,
                                      rc.data.labeled_seed)
        return data.subset(idx[sub])
    return None


def _rc_from_checkpoint(state):
    """Rebuild a RunConfig view from a checkpoint's provenance echo."""
    rc = RunConfig(model=state.model.config, train=state.cfg)
    run = state.run_meta or {}
    rc.mode = run.get("mode", "ib-ebm" if state.cfg.lam > 0 else "svebm")
    rc.out = run.get("out", "run")
    for k, v in run.get("data", {}).items():
        setattr(rc.data, k, v)
    for k, v in run.get("eval", {}).items():
        setattr(rc.eval, k, tuple(v) if isinstance(v, list) else v)
    return rc


# ---- evaluation engine ------------------------------------------------------


def _prior_latents(model, cfg_train, n, n_steps, rng):
    """Fresh burned-in Langevin draws from the current prior."""
    pool = ChainPool(n, model.config.latent_dim, rng)
    cfg = LangevinConfig(step_size=cfg_train.langevin.step_size, n_steps=n_steps)
    z, _ = sample_prior(pool, model.prior, cfg, n, rng)
    return z


def run_metrics(state, data, names, rc, seed, ckpt_id, vocab=None):
    """Compute the named metrics; returns report rows."""
    model = state.model
    for name in names:
        if name not in VALID_METRICS:
            raise ConfigError(f"unknown metric {name!r}; valid: "
                              + ", ".join(VALID_METRICS))
    rng = np.random.default_rng(seed)
    rows = []
    full = data.batch(np.arange(data.n))
    pred = dist = None
    if {"accuracy", "homogeneity", "matched_accuracy"} & set(names):
        pred, dist = M.classify(model, full)
    labels = data.labels
    has_labels = labels is not None and np.any(labels >= 0)

    for name in names:
        if name in ("accuracy", "homogeneity", "matched_accuracy"):
            if not has_labels:
                raise DataError(f"metric {name} needs labeled data")
            keep = labels >= 0
            truth, p = labels[keep], pred[keep]
            if name == "accuracy":
                value = M.accuracy(truth, p)
            elif name == "homogeneity":
                value = M.homogeneity(truth, p)
            else:
                value = M.matched_accuracy(truth, p,
                                           n_clusters=model.config.n_categories)
            n_used = int(keep.sum())
        elif name == "mutual_info":
            post, _ = model.encode_batch(full)
            value = mutual_info_zy(model.prior, post.mean)
            n_used = data.n
        elif name == "bleu":
            if model.config.modality != "sequence":
                raise DataError("bleu needs the sequence modality")
            post, _ = model.encode_batch(full)
            hyps = model.decoder.sample_batch(post.mean, rng, greedy=True)
            refs = [ex.ids for ex in data.examples]
            value = M.bleu_reconstruction(refs, hyps)
            n_used = data.n
        elif name == "word_kl":
            if model.config.modality != "sequence":
                raise DataError("word_kl needs the sequence modality")
            z = _prior_latents(model, state.cfg, rc.eval.sample_count,
                               rc.eval.langevin_steps, rng)
            gen = model.decoder.sample_batch(z, rng)
            gen = [g for g in gen if len(g) > 0]
            refs = [ex.ids for ex in data.examples]
            value = M.word_kl(refs, gen)
            n_used = len(gen)
        elif name == "nll":
            n_used = min(data.n, 256)
            sub = data.batch(np.arange(n_used))
            log_z = M.estimate_log_z(model.prior, rng=rng)
            value = float(np.mean(M.nll_importance_sampling(
                model, sub, n_samples=rc.eval.nll_samples, rng=rng, log_z=log_z)))
        rows.append((name, value, n_used, seed, ckpt_id))
    return rows


# ---- commands ---------------------------------------------------------------


def cmd_train(args):
    rc, _ = parse_config(args.config)
    if args.out:
        rc.out = args.out
    if args.seed is not None:
        rc.train.seed = args.seed
    if args.mode:
        rc.mode = args.mode
        if rc.mode == "ib-ebm" and rc.train.lam <= 0:
            rc.train.lam = 50.0
        if rc.mode == "svebm":
            rc.train.lam = 0.0
    _require(rc.data.train, "data.train")

    data, vocab = _resolve_data(rc)
    labeled = _labeled_view(rc, data)
    if labeled is not None and rc.train.batch_labeled == 0:
        raise ConfigError("labeled data given but train.batch_labeled = 0; "
                          "set train.batch_labeled")

    out = Path(rc.out)
    out.mkdir(parents=True, exist_ok=True)
    write_config(out / "config.txt", rc)

    rng = np.random.default_rng(rc.train.seed)
    model = Model(rc.model, rng)
    state = TrainState(model, rc.train, rng)
    state.run_meta = {"mode": rc.mode, "out": str(rc.out),
                      "data": asdict(rc.data), "eval": asdict(rc.eval)}

    ckpt = out / "checkpoint.npz"
    state = fit(state, data, labeled=labeled, log_path=out / "train_log.tsv",
                ckpt_path=ckpt)

    names = rc.eval.metrics or DEFAULT_METRICS
    eval_data = data
    if rc.data.eval:
        eval_data, _ = _resolve_data(rc, "eval")
    rows = run_metrics(state, eval_data, names, rc, rc.train.seed,
                       f"{ckpt.name}@{state.step}", vocab)
    M.write_report(out / "report.tsv", rows)
    print(f"trained {state.step} steps -> {ckpt}")
    for name, value, *_ in rows:
        print(f"  {name}: {value:.4f}")
    return 0


def cmd_eval(args):
    state = load_checkpoint(args.checkpoint)
    if args.config:
        rc, _ = parse_config(args.config)
        rc.model = state.model.config
        rc.train = state.cfg
    else:
        rc = _rc_from_checkpoint(state)
    seed = args.seed if args.seed is not None else 0
    names = tuple(args.metrics.split(",")) if args.metrics \
        else (rc.eval.metrics or DEFAULT_METRICS)
    which = "eval" if rc.data.eval else "train"
    data, vocab = _resolve_data(rc, which)
    ckpt_id = f"{Path(args.checkpoint).name}@{state.step}"
    rows = run_metrics(state, data, names, rc, seed, ckpt_id, vocab)
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "report.tsv"
    M.write_report(out, rows)
    for name, value, *_ in rows:
        print(f"{name}\t{value:.6f}")
    return 0


def cmd_sample(args):
    state = load_checkpoint(args.checkpoint)
    model = state.model
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    out = Path(args.out)
    if args.count == 0:
        out.write_text("")
        return 0
    if args.label is not None:
        cfg = LangevinConfig(step_size=state.cfg.langevin.step_size, n_steps=100)
        z = sample_conditional(model.prior, args.label, cfg, args.count, rng)
    elif args.count <= state.pool.n_chains:
        z, _ = sample_prior(state.pool, model.prior, state.cfg.langevin,
                            args.count, rng)
    else:
        z = _prior_latents(model, state.cfg, args.count, 100, rng)

    modality = model.config.modality
    if modality == "points":
        x = model.decoder.sample_batch(z, rng)
        comp = np.full(len(x), args.label if args.label is not None else -1)
        save_points(out, PointDataset(x, comp))
    else:
        vocab = None
        rc = _rc_from_checkpoint(state)
        if rc.data.vocab:
            vocab = Vocabulary.load(rc.data.vocab)
        if modality == "sequence":
            seqs = model.decoder.sample_batch(z, rng, temperature=args.temperature)
        else:
            seqs = _document_token_samples(model, z, rng)
        with open(out, "w", encoding="utf-8") as fh:
            for s in seqs:
                toks = " ".join(vocab.decode(s) if vocab else map(str, s))
                if args.label is not None:
                    fh.write(f"{args.label}\t{toks}\n")
                else:
                    fh.write(toks + "\n")
    print(f"wrote {args.count} samples -> {out}")
    return 0


def _document_token_samples(model, z, rng, n_tokens=8):
    from . import nn
    logits = model.decoder.mlp.forward(np.atleast_2d(z))[0]
    probs = nn.softmax(logits)
    out = []
    for p in probs:
        out.append(list(rng.choice(len(p), size=n_tokens, p=p)))
    return out


def cmd_classify(args):
    state = load_checkpoint(args.checkpoint)
    if args.config:
        rc, _ = parse_config(args.config)
        rc.model = state.model.config
    else:
        rc = _rc_from_checkpoint(state)
    data, _ = _resolve_data(rc)
    pred, dist = M.classify(state.model, data.batch(np.arange(data.n)))
    out = Path(args.out) if args.out else Path("predictions.tsv")
    with open(out, "w", encoding="utf-8") as fh:
        header = "pred\t" + "\t".join(f"p{k}" for k in range(dist.shape[1]))
        fh.write(header + "\n")
        for p, row in zip(pred, dist):
            fh.write(str(int(p)) + "\t" + "\t".join(f"{v:.10e}" for v in row) + "\n")
    print(f"wrote {data.n} predictions -> {out}")
    return 0


def _write_grid(path, grid, xs, ys):
    with open(path, "w", encoding="utf-8") as fh:
        for row in grid:
            fh.write("\t".join(f"{v:.10e}" for v in row) + "\n")
    return xs[0], xs[-1], ys[0], ys[-1]


def cmd_plot_density(args):
    if not args.checkpoint and not args.config:
        raise ConfigError("plot-density needs --checkpoint and/or --config")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resolution = 100
    panels = []

    state = model = None
    rc = None
    if args.checkpoint:
        state = load_checkpoint(args.checkpoint)
        model = state.model
        if model.config.modality != "points" or model.config.x_dim != 2:
            raise DataError("plot-density needs a 2-d points checkpoint")
        rc = _rc_from_checkpoint(state)
    if args.config:
        file_rc, _ = parse_config(args.config)
        if rc is None:
            rc = file_rc
        else:
            rc.data = file_rc.data
            rc.eval = file_rc.eval
    if rc.model.modality != "points":
        raise DataError("plot-density needs the points modality")

    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    count = args.count or rc.eval.sample_count

    data = None
    if rc.data.train:
        data, _ = _resolve_data(rc)
        grid, xs, ys = kde_grid(data.x, resolution=resolution)
        panels.append(("true_x", *_write_grid(out / "true_x.tsv", grid, xs, ys)))

    if model is not None and data is not None:
        post, _ = model.encode_batch(data.batch(np.arange(data.n)))
        e = rng.standard_normal(post.mean.shape)
        z_post = post.mean + np.exp(0.5 * post.log_var) * e
        x_post = model.decoder.sample_batch(z_post, rng)
        grid, xs, ys = kde_grid(x_post, resolution=resolution)
        panels.append(("posterior_x", *_write_grid(out / "posterior_x.tsv", grid, xs, ys)))
        if model.config.latent_dim == 2:
            grid, xs, ys = kde_grid(z_post, resolution=resolution)
            panels.append(("posterior_z", *_write_grid(out / "posterior_z.tsv", grid, xs, ys)))

    if model is not None:
        z_prior = _prior_latents(model, state.cfg, count, rc.eval.langevin_steps, rng)
        x_prior = model.decoder.sample_batch(z_prior, rng)
        grid, xs, ys = kde_grid(x_prior, resolution=resolution)
        panels.append(("prior_x", *_write_grid(out / "prior_x.tsv", grid, xs, ys)))
        if model.config.latent_dim == 2:
            grid, xs, ys = kde_grid(z_prior, resolution=resolution)
            panels.append(("prior_z", *_write_grid(out / "prior_z.tsv", grid, xs, ys)))

    with open(out / "index.tsv", "w", encoding="utf-8") as fh:
        fh.write("panel\tfile\txmin\txmax\tymin\tymax\tresolution\n")
        for name, x0, x1, y0, y1 in panels:
            fh.write(f"{name}\t{name}.tsv\t{x0:.10e}\t{x1:.10e}"
                     f"\t{y0:.10e}\t{y1:.10e}\t{resolution}\n")
    print(f"wrote {len(panels)} density panels -> {out}")
    return 0


# ---- argument parsing -------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(
        prog="svebm",
        description="Latent-space energy-based model with symbol-vector coupling")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a config file")
    t.add_argument("--config", required=True)
    t.add_argument("--out", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--mode", choices=("svebm", "ib-ebm"), default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--config", default=None)
    e.add_argument("--metrics", default=None)
    e.add_argument("--out", default=None)
    e.add_argument("--seed", type=int, default=None)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("sample", help="sample from the prior and decode")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--count", type=int, default=100)
    s.add_argument("--label", type=int, default=None)
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--seed", type=int, default=None)
    s.set_defaults(func=cmd_sample)

    c = sub.add_parser("classify", help="predict symbols for a dataset")
    c.add_argument("--checkpoint", required=True)
    c.add_argument("--config", default=None)
    c.add_argument("--out", default=None)
    c.set_defaults(func=cmd_classify)

    d = sub.add_parser("plot-density", help="write density grids for 2-d runs")
    d.add_argument("--checkpoint", default=None)
    d.add_argument("--config", default=None)
    d.add_argument("--out", required=True)
    d.add_argument("--count", type=int, default=None)
    d.add_argument("--seed", type=int, default=None)
    d.set_defaults(func=cmd_plot_density)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except SvebmError as exc:
        print(f"error[{exc.code}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
