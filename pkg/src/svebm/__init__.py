"""Latent-space energy-based models with symbol-vector coupling.

A small numpy library for jointly training an energy-based prior over
(symbol, latent-vector) pairs with an amortized inference network and a
decoder, plus the information-bottleneck variant that adds a mutual
information term between latents and symbols.
"""

from .config import DataConfig, EvalConfig, RunConfig, parse_config, write_config
from .errors import (CheckpointError, ConfigError, ContractViolation, DataError,
                     EvaluationError, SamplerDivergence, SvebmError)
from .inference import GaussianPosterior, MlpEncoder, SequenceEncoder
from .generator import (DocumentDecoder, DocumentExample, PointDecoder,
                        SequenceDecoder, SequenceExample, Vocabulary)
from .model import Model, ModelConfig
from .objectives import (LossBreakdown, elbo_terms, ib_objective,
                         mutual_info_zy, prior_grad_estimate,
                         supervised_class_loss)
from .prior import EnergyPrior
from .sampler import (ChainPool, LangevinConfig, posterior_langevin,
                      sample_conditional, sample_prior)
from .trainer import (TrainConfig, TrainState, fit, init_state,
                      load_checkpoint, save_checkpoint, train_step)

__version__ = "0.1.0"

__all__ = [
    "CheckpointError", "ChainPool", "ConfigError", "ContractViolation",
    "DataConfig", "DataError", "DocumentDecoder", "DocumentExample",
    "EnergyPrior", "EvalConfig", "EvaluationError", "GaussianPosterior",
    "LangevinConfig", "LossBreakdown", "MlpEncoder", "Model", "ModelConfig",
    "PointDecoder", "RunConfig", "SamplerDivergence", "SequenceDecoder",
    "SequenceEncoder", "SequenceExample", "SvebmError", "TrainConfig",
    "TrainState", "Vocabulary", "elbo_terms", "fit", "ib_objective",
    "init_state", "load_checkpoint", "mutual_info_zy", "parse_config",
    "posterior_langevin", "prior_grad_estimate", "sample_conditional",
    "sample_prior", "save_checkpoint", "supervised_class_loss", "train_step",
    "write_config", "__version__",
]
