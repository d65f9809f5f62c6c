"""Forced-choice neural cognitive diagnosis.

The heavy lifting lives in the compiled ``_core`` extension; this package
re-exports it under friendlier names.
"""

from ._core import (  # noqa: F401
    Dataset,
    Error,
    Model,
    ParseError,
    ShapeError,
    ValidationError,
    block_loss,
    doa,
    encode_response,
    lra,
    model_names,
    original_bpr_pair,
    pra,
    profile,
    rank_scores,
    simulate,
    simulation_defaults,
    train,
    weighted_bpr_pair,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
