"""Deterministic federated-learning simulator.

Compares FedAvg, signSGD, STC, CMFL, FedMMD, federated dropout and a
shared-data warm-start under IID and label-sorted client partitions, with an
exact bit ledger for every payload that crosses the simulated network.
"""

from fedsim.errors import (
    AggregationError,
    ConfigError,
    CorruptionError,
    FedSimError,
    FormatError,
    NumericError,
    PartitionError,
    RoundError,
    ShapeError,
)
from fedsim.nn import ModelArch, ModelParams, evaluate, gradient, init_model, local_train

__version__ = "0.1.0"

__all__ = [
    "AggregationError",
    "ConfigError",
    "CorruptionError",
    "FedSimError",
    "FormatError",
    "ModelArch",
    "ModelParams",
    "NumericError",
    "PartitionError",
    "RoundError",
    "ShapeError",
    "evaluate",
    "gradient",
    "init_model",
    "local_train",
]
