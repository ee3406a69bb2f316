"""Knowledge-graph tokenized next-POI recommendation (C++ core bindings)."""

import json as _json

from ._core import (
    ConfigError,
    ContractError,
    DataError,
    MissingArtifact,
    NumericalFailure,
    Recommender,
    __version__,
    adjacent_pairs,
    haversine_km,
    hr_at_k,
    ndcg_at_k,
    project,
    quantize,
    run_pipeline,
    run_stage,
    set_log_level,
    synthetic_city,
    time_bucket,
)
from ._core import config_json as _config_json


def load_config(path="", overrides=()):
    """Fully materialised run configuration as a dict."""
    return _json.loads(_config_json(str(path), list(overrides)))


__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "MissingArtifact",
    "NumericalFailure",
    "Recommender",
    "adjacent_pairs",
    "haversine_km",
    "hr_at_k",
    "load_config",
    "ndcg_at_k",
    "project",
    "quantize",
    "run_pipeline",
    "run_stage",
    "set_log_level",
    "synthetic_city",
    "time_bucket",
]
