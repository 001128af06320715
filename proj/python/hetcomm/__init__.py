"""Python bindings for the hetcomm C++ core."""

import json

from ._hetcomm import (
    AgentGraph,
    CheckpointError,
    ConfigError,
    EnvError,
    Environment,
    Error,
    GraphError,
    ShapeError,
    aggregate,
    default_config,
    epsilon,
    evaluate,
    make_environment,
    normalize_config,
    percentile,
    smoke,
    vdn_mix,
)
from ._hetcomm import train as _train


def train(config, out_dir):
    """Train from a config dict (missing keys keep defaults) or JSON text."""
    text = config if isinstance(config, str) else json.dumps(config)
    return _train(text, str(out_dir))


__all__ = [
    "AgentGraph",
    "CheckpointError",
    "ConfigError",
    "EnvError",
    "Environment",
    "Error",
    "GraphError",
    "ShapeError",
    "aggregate",
    "default_config",
    "epsilon",
    "evaluate",
    "make_environment",
    "normalize_config",
    "percentile",
    "smoke",
    "train",
    "vdn_mix",
]
