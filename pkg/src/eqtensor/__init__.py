"""Equivariant tensor maps built from isotropic tensors."""

from .tensor_core import (
    MetricSignature,
    TensorValue,
    contract,
    group_act,
    kronecker_delta,
    levi_civita,
    outer,
    permute_indices,
)

__version__ = "0.1.0"

__all__ = [
    "MetricSignature",
    "TensorValue",
    "contract",
    "group_act",
    "kronecker_delta",
    "levi_civita",
    "outer",
    "permute_indices",
]
