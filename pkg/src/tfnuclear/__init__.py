"""Desk-scale numerics for weighted time-frequency spaces and their nuclearity.

Submodules
----------
weights   weight functions, structural constants, Young conjugates
grid      sampled functions, Fourier transform, mixed and amalgam norms
gabor     STFT, Gabor analysis/synthesis, frame operator, canonical dual
koethe    Koethe matrices, echelon norms, Grothendieck-Pietsch summability
komatsu   weight sequences, associated function, Hermite expansions
cli       batch command-line front end
"""

from tfnuclear.errors import (
    CGFailure,
    ConditionFailure,
    ConfigError,
    DomainError,
    GridMismatch,
)
from tfnuclear.lattice import CoefficientArray, LatticeSpec
from tfnuclear.weights import WeightFunction
from tfnuclear.grid import MixedNormSpec, PhasePlaneFunction, SampledFunction
from tfnuclear.gabor import GaborSystem
from tfnuclear.koethe import KoetheMatrix
from tfnuclear.komatsu import MpSequence

__version__ = "0.1.0"

__all__ = [
    "CGFailure",
    "CoefficientArray",
    "ConditionFailure",
    "ConfigError",
    "DomainError",
    "GaborSystem",
    "GridMismatch",
    "KoetheMatrix",
    "LatticeSpec",
    "MixedNormSpec",
    "MpSequence",
    "PhasePlaneFunction",
    "SampledFunction",
    "WeightFunction",
]
