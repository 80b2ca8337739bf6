"""Transductive zero-shot classification via Gaussian class signatures.

Estimates per-class Gaussians in a feature space, synthesizes virtual
signatures for classes without labeled data by transferring sparse
reconstruction coefficients from a label-embedding space, and refines
them with a regularized Gaussian-mixture EM solver.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataFormatError,
    DegenerateCodeError,
    InvalidSplitError,
    NumericalError,
    ZsigError,
)

__all__ = [
    "__version__",
    "ZsigError",
    "ConfigError",
    "DataFormatError",
    "DegenerateCodeError",
    "InvalidSplitError",
    "NumericalError",
]
