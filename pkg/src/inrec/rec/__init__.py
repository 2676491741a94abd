"""Relative entropy coding: deterministic proposal streams, truncated-Gumbel
perturbation search, and index serialization."""

from .coder import (
    EncodedBlock,
    RecSettings,
    astar_decode,
    astar_encode,
    proposal_samples,
    sample_budget,
    truncated_gumbel,
)
from .indexcodes import (
    FIXED_MODE,
    HISTOGRAM_MODE,
    IndexCode,
    code_indices,
    decode_indices,
    fixed_width,
)
from .normal import QUANTILE_VERSION, standard_normal_quantile

__all__ = [
    "EncodedBlock",
    "RecSettings",
    "astar_decode",
    "astar_encode",
    "proposal_samples",
    "sample_budget",
    "truncated_gumbel",
    "FIXED_MODE",
    "HISTOGRAM_MODE",
    "IndexCode",
    "code_indices",
    "decode_indices",
    "fixed_width",
    "QUANTILE_VERSION",
    "standard_normal_quantile",
]
