"""Koopman mode decomposition of multi-detector traffic flow.

Companion-matrix DMD on time-delay embeddings, shared-eigenvalue detection
across several cities, eigenvalue-constrained transfer onto a data-poor
target and forecasting from the resulting spectrum.
"""
from .errors import (
    ConditioningError,
    DataError,
    DelayError,
    EmptySpectrumError,
    KoopflowError,
    ModeOverflowError,
    NumericError,
    RankError,
)
from .data import CityRecord, IngestConfig, center, load_csv, snapshot_pair, split_train_test
from .embedding import dehankelize, hankelize
from .dmd import SpectralDecomposition, dmd, eigen_cycle_times, svht_rank

__version__ = "0.1.0"
