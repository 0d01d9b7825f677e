"""Run configuration: flat ``section.key = value`` text files.

Example::

    run.mode = ib-ebm
    run.out = runs/eight
    data.train = data/eight.tsv
    model.modality = points
    model.latent_dim = 2
    model.n_categories = 8
    train.iterations = 3000
    train.lam = 50
    langevin.step_size = 0.16
    langevin.n_steps = 20
    eval.metrics = homogeneity,matched_accuracy

Blank lines and ``#`` comments are ignored.  Unknown keys and malformed
values are rejected with ``file:line:`` anchored messages.  ``run.mode``
selects the objective family: ``svebm`` forces ``train.lam`` = 0 and
``ib-ebm`` requires a positive ``train.lam`` (defaulting to 50 when the key
is omitted).  The resolved configuration, defaults included, can be echoed
back out with :func:`write_config` for provenance.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .model import ModelConfig
from .sampler import LangevinConfig
from .trainer import TrainConfig

MODES = ("svebm", "ib-ebm")

IB_DEFAULT_LAM = 50.0


@dataclass
class DataConfig:
    train: str = ""
    vocab: str = ""
    labeled: str = ""
    labeled_fraction: float = 0.0
    labeled_seed: int = 0
    eval: str = ""


@dataclass
class EvalConfig:
    metrics: tuple = ()
    nll_samples: int = 500
    sample_count: int = 2000
    langevin_steps: int = 100


@dataclass
class RunConfig:
    mode: str = "svebm"
    out: str = "run"
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def _cast(raw, default, where):
    kind = type(default)
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(f"expected a boolean, got {raw!r}")
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            items = [p.strip() for p in raw.split(",") if p.strip()]
            out = []
            for p in items:
                try:
                    out.append(int(p))
                except ValueError:
                    out.append(p)
            return tuple(out)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _section_fields(dc_default):
    return {f.name: getattr(dc_default, f.name)
            for f in dataclasses.fields(dc_default)}

_RUN_DEFAULT = RunConfig()

_SECTIONS = {
    "run": {"mode": "svebm", "out": "run"},
    "model": _section_fields(_RUN_DEFAULT.model),
    "train": {k: v for k, v in _section_fields(_RUN_DEFAULT.train).items()
              if k != "langevin"},
    "langevin": _section_fields(LangevinConfig()),
    "data": _section_fields(_RUN_DEFAULT.data),
    "eval": _section_fields(_RUN_DEFAULT.eval),
}


def parse_config(path):
    """Parse a config file into (RunConfig, set of explicitly given keys)."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    raw = {sec: {} for sec in _SECTIONS}
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            where = f"{path}:{ln}"
            if "=" not in line:
                raise ConfigError(f"{where}: expected 'section.key = value'")
            key, val = (p.strip() for p in line.split("=", 1))
            if "." not in key:
                raise ConfigError(f"{where}: key {key!r} has no section prefix")
            sec, name = key.split(".", 1)
            if sec not in _SECTIONS:
                raise ConfigError(f"{where}: unknown section {sec!r}")
            if name not in _SECTIONS[sec]:
                valid = ", ".join(sorted(_SECTIONS[sec]))
                raise ConfigError(f"{where}: unknown key {key!r} (valid: {valid})")
            if key in seen:
                raise ConfigError(f"{where}: duplicate key {key!r}")
            seen.add(key)
            raw[sec][name] = _cast(val, _SECTIONS[sec][name], where)

    try:
        langevin = LangevinConfig(**raw["langevin"])
        train = TrainConfig(langevin=langevin, **raw["train"])
        model = ModelConfig(**raw["model"])
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    rc = RunConfig(
        mode=raw["run"].get("mode", "svebm"),
        out=raw["run"].get("out", "run"),
        model=model, train=train,
        data=DataConfig(**raw["data"]),
        eval=EvalConfig(**raw["eval"]),
    )
    _apply_mode(rc, "train.lam" in seen, path)
    return rc, seen


def _apply_mode(rc, lam_given, path):
    if rc.mode not in MODES:
        raise ConfigError(f"{path}: run.mode must be one of {MODES}, got {rc.mode!r}")
    if rc.mode == "ib-ebm":
        if not lam_given:
            rc.train.lam = IB_DEFAULT_LAM
        elif rc.train.lam <= 0:
            raise ConfigError(f"{path}: run.mode=ib-ebm requires train.lam > 0")
    elif rc.train.lam != 0.0:
        raise ConfigError(f"{path}: run.mode=svebm requires train.lam = 0 "
                          f"(got {rc.train.lam}); use run.mode=ib-ebm")


def _format_value(v):
    if isinstance(v, tuple):
        return ",".join(str(p) for p in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def write_config(path, rc):
    """Echo the full resolved configuration, defaults included."""
    lines = [f"run.mode = {rc.mode}", f"run.out = {rc.out}"]
    for sec, obj in (("data", rc.data), ("model", rc.model),
                     ("train", rc.train), ("eval", rc.eval)):
        for f in dataclasses.fields(obj):
            if f.name == "langevin":
                continue
            lines.append(f"{sec}.{f.name} = {_format_value(getattr(obj, f.name))}")
    lines.append(f"langevin.step_size = {rc.train.langevin.step_size}")
    lines.append(f"langevin.n_steps = {rc.train.langevin.n_steps}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
