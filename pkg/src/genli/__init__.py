"""Generative long-term user-interest modeling for click-through prediction.

The package trains a CTR model whose long-term history signal comes from
generated per-user interest distributions over a hashed id space instead of
target-conditioned attention over the raw history, so serving cost per
(user, candidate) pair is a constant-time table lookup in the history
length.  Everything runs on a small numpy-backed autodiff core; no deep
learning framework is required.

Typical flow::

    from genli import Config, build_model, generate_synthetic, load_dataset
    from genli import synthetic_spec, train

    cfg = Config()
    generate_synthetic(synthetic_spec(cfg), "data/")
    train_ds = load_dataset("data/train.tsv", cfg.seq_len)
    eval_ds = load_dataset("data/eval.tsv", cfg.seq_len)
    model = build_model(cfg, n_items=601, n_categories=31)
    report = train(model, train_ds, eval_ds, cfg, out_dir="run/")

or, equivalently, the ``genli`` command line (see ``genli --help``).
"""

from .config import (Config, build_config, config_fields, read_config_file,
                     synthetic_spec)
from .data import Dataset, SyntheticSpec, generate_synthetic, load_dataset
from .errors import ConfigError, DataError, GenliError, NumericalError
from .metrics import AucAccumulator, auc
from .model import CtrModelBase, GenLIModel, build_model
from .nn import Tensor, load_checkpoint, save_checkpoint
from .training import TrainReport, evaluate_auc, negative_sample, train

__version__ = "0.1.0"

__all__ = [
    "AucAccumulator",
    "Config",
    "ConfigError",
    "CtrModelBase",
    "DataError",
    "Dataset",
    "GenLIModel",
    "GenliError",
    "NumericalError",
    "SyntheticSpec",
    "Tensor",
    "TrainReport",
    "auc",
    "build_config",
    "build_model",
    "config_fields",
    "evaluate_auc",
    "generate_synthetic",
    "load_checkpoint",
    "load_dataset",
    "negative_sample",
    "read_config_file",
    "save_checkpoint",
    "synthetic_spec",
    "train",
]
