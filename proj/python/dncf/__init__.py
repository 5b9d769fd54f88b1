"""Dual-embedding neural collaborative filtering.

Configs are plain dicts using the command-line option names without dashes,
for example ``{"model": "dgmf", "factors": 8, "epochs": 5}``.
"""

from ._dncf import (
    TEST_NEGATIVES,
    TOP_K,
    CheckpointError,
    ConfigError,
    DataError,
    Dataset,
    Error,
    FusionError,
    IndexError,
    Model,
    NumericError,
    ProtocolError,
    ShapeError,
    TestInstance,
    default_config,
    evaluate,
    hr_at_k,
    ndcg_at_k,
    pretrain_fuse,
    sweep,
    train,
)

__all__ = [
    "TEST_NEGATIVES",
    "TOP_K",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "Dataset",
    "Error",
    "FusionError",
    "IndexError",
    "Model",
    "NumericError",
    "ProtocolError",
    "ShapeError",
    "TestInstance",
    "default_config",
    "evaluate",
    "hr_at_k",
    "ndcg_at_k",
    "pretrain_fuse",
    "sweep",
    "train",
]
