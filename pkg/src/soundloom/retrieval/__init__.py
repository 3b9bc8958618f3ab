"""Clip retrieval: exact cosine search plus the diversity controller."""

from .index import (
    SELECT_STRATEGIES,
    IndexError_,
    LatentIndex,
    build_index,
    load_index,
    rank,
    save_index,
    select,
)
from .perlin import (
    MODES,
    DiversityController,
    continuity_bound,
    next_k,
    perlin1d,
)

__all__ = [
    "SELECT_STRATEGIES",
    "IndexError_",
    "LatentIndex",
    "build_index",
    "load_index",
    "rank",
    "save_index",
    "select",
    "MODES",
    "DiversityController",
    "continuity_bound",
    "next_k",
    "perlin1d",
]
