"""Unsupervised cross-modal hashing: anchor graphs, joint binary codes, hash functions and retrieval metrics."""

import json as _json

from ._core import (
    ConfigError,
    HashModel,
    StageError,
    XmhashError,
    __version__,
    default_config as _default_config,
    evaluate_codes,
    graph_laplacians,
    hamming_distances,
    joint_codes,
    mean_average_precision,
    normalize,
    precision_at_radius,
    run_pipeline as _run_pipeline,
    synthesize,
    train_hash_models,
)


def default_config():
    """Every accepted configuration key with its default value."""
    return _json.loads(_default_config())


def run_pipeline(config, force=False):
    """Run the full pipeline. `config` is a dict overlaying the defaults."""
    return _run_pipeline(_json.dumps(config), force)


__all__ = [
    "ConfigError",
    "HashModel",
    "StageError",
    "XmhashError",
    "__version__",
    "default_config",
    "evaluate_codes",
    "graph_laplacians",
    "hamming_distances",
    "joint_codes",
    "mean_average_precision",
    "normalize",
    "precision_at_radius",
    "run_pipeline",
    "synthesize",
    "train_hash_models",
]
