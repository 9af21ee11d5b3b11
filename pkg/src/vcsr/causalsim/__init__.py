"""Discrete SCM oracle for the front-door adjustment and the synthetic confounded dataset."""

from .scm import (
    DiscreteSCM,
    ZeroProbabilityError,
    dumps_scm,
    frontdoor_adjust,
    interventional_truth,
    load_fixture,
    loads_scm,
    max_tv,
    naive_conditional,
    random_scm,
    search_confounded_scm,
    total_variation,
)
from .synthetic import (
    DatasetSpec,
    PatternBank,
    SyntheticSample,
    generate_dataset,
    make_patterns,
    nearest_pattern_answer,
)

__all__ = [
    "DatasetSpec",
    "DiscreteSCM",
    "PatternBank",
    "SyntheticSample",
    "ZeroProbabilityError",
    "dumps_scm",
    "frontdoor_adjust",
    "generate_dataset",
    "interventional_truth",
    "load_fixture",
    "loads_scm",
    "make_patterns",
    "max_tv",
    "naive_conditional",
    "nearest_pattern_answer",
    "random_scm",
    "search_confounded_scm",
    "total_variation",
]
