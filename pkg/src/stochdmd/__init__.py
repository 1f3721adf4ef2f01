"""Stochastic dynamics from trajectory ensembles via dynamic mode decomposition."""

from ._validation import ConfigError, NumericalError, StochDMDWarning
from .coherence import T2Extraction, T2StarEstimator, extract_t2
from .dmd import DmdDecomposition, StochasticDMD, build_snapshots, decompose, reconstruct
from .extrapolation import ConstrainedExtrapolator, ExtrapolationResult, extrapolate
from .noise_sim import (
    FluctuatorEnsembleConfig,
    QubitConfig,
    TimeGrid,
    TrajectoryEnsemble,
    WhiteNoiseConfig,
    coherence_envelope,
    ensemble_average,
    generate_ensemble,
)
from .spectral import DMDNoiseSpectrum, Spectrum, build_psd

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConstrainedExtrapolator",
    "DMDNoiseSpectrum",
    "DmdDecomposition",
    "ExtrapolationResult",
    "FluctuatorEnsembleConfig",
    "NumericalError",
    "QubitConfig",
    "Spectrum",
    "StochDMDWarning",
    "StochasticDMD",
    "T2Extraction",
    "T2StarEstimator",
    "TimeGrid",
    "TrajectoryEnsemble",
    "WhiteNoiseConfig",
    "build_psd",
    "build_snapshots",
    "coherence_envelope",
    "decompose",
    "ensemble_average",
    "extract_t2",
    "extrapolate",
    "generate_ensemble",
    "reconstruct",
]
