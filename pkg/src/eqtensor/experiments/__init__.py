"""Data generators, baselines and training pipelines for the three experiments."""

from .audit import equivariance_audit
from .io import ConfigError, Dataset, ExperimentConfig, load_config, parse_config, read_dataset, write_dataset
from .signatures import chen_product, discrete_signature_baseline, gen_poly_path, signature_oracle
from .sparse import (
    LearnedH,
    estimate_sparse,
    gen_sparse_instance,
    sample_sparse_vectors,
    sos_h_hopkins,
    sos_h_mao,
)
from .stress import gen_neohookean
from .training import NumericalError, eval_experiment, generate_dataset, train_experiment

__all__ = [
    "ConfigError",
    "Dataset",
    "ExperimentConfig",
    "LearnedH",
    "NumericalError",
    "chen_product",
    "discrete_signature_baseline",
    "equivariance_audit",
    "estimate_sparse",
    "eval_experiment",
    "gen_neohookean",
    "gen_poly_path",
    "gen_sparse_instance",
    "generate_dataset",
    "load_config",
    "parse_config",
    "read_dataset",
    "sample_sparse_vectors",
    "signature_oracle",
    "sos_h_hopkins",
    "sos_h_mao",
    "train_experiment",
    "write_dataset",
]
