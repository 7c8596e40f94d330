"""Separation of independent binary sources from boolean OR mixtures."""

from orsep.binmat import BinaryMatrix, hamming_distance, read_matrix, write_matrix
from orsep.errors import (
    CapacityError,
    DegenerateSourceError,
    DimensionError,
    InfeasibilityError,
    OrsepError,
    ParameterError,
    ParseError,
    PartitionError,
)
from orsep.mixture import (
    ActivitySampler,
    MixingMatrix,
    SourceModel,
    canonical_mixing_matrix,
    exact_distribution,
    inject_noise,
    or_mix,
    sample_activities,
)

__version__ = "0.1.0"

__all__ = [
    "ActivitySampler",
    "BinaryMatrix",
    "CapacityError",
    "DegenerateSourceError",
    "DimensionError",
    "InfeasibilityError",
    "MixingMatrix",
    "OrsepError",
    "ParameterError",
    "ParseError",
    "PartitionError",
    "SourceModel",
    "canonical_mixing_matrix",
    "exact_distribution",
    "hamming_distance",
    "inject_noise",
    "or_mix",
    "read_matrix",
    "sample_activities",
    "write_matrix",
]
