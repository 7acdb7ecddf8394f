"""Conditional mean embeddings, a diagonal ground-truth model and rate checks."""

from .cme import (CmeModel, ConditionalMeanEmbedding, GaussianConditionalOracle, lambda_schedule,
                  rkhs_error, theoretical_rate)
from .diagonal_model import DiagonalModel, FeatureSample
from .exceptions import ConfigError, NumericError
from .kernels import GramMatrix, KernelSpec, gram
from .spectral import MercerDecomposition, SpectralModel, effective_dimension

__version__ = "0.1.0"

__all__ = ["CmeModel", "ConditionalMeanEmbedding", "GaussianConditionalOracle", "lambda_schedule",
           "rkhs_error", "theoretical_rate", "DiagonalModel", "FeatureSample", "ConfigError", "NumericError",
           "GramMatrix", "KernelSpec", "gram", "MercerDecomposition", "SpectralModel", "effective_dimension"]
