"""Shallow, deep and heterogeneous (multi-delay) echo state networks with a
closed-form ridge readout, plus an LHCB speech front-end and a frame-level
classification harness."""

from .errors import (
    ConfigError,
    EmptyInputError,
    ESNError,
    FormatError,
    ManifestError,
    NumericalError,
    ShapeError,
)
from .readout import (
    ReadoutWeights,
    RidgeAccumulator,
    RidgeConfig,
    assemble_extended,
    classify,
    fit_ridge,
    predict,
)
from .reservoir import (
    DelayBuffer,
    Layer,
    LayerConfig,
    LayerWeights,
    ReservoirModel,
    SubGroupPartition,
    build_model,
    init_layer,
    run_sequence,
    step_deep,
    step_hetero_deep,
    step_hetero_shallow,
    step_shallow,
)
from .spectral import spectral_radius

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "EmptyInputError",
    "ESNError",
    "FormatError",
    "ManifestError",
    "NumericalError",
    "ShapeError",
    "ReadoutWeights",
    "RidgeAccumulator",
    "RidgeConfig",
    "assemble_extended",
    "classify",
    "fit_ridge",
    "predict",
    "DelayBuffer",
    "Layer",
    "LayerConfig",
    "LayerWeights",
    "ReservoirModel",
    "SubGroupPartition",
    "build_model",
    "init_layer",
    "run_sequence",
    "step_deep",
    "step_hetero_deep",
    "step_hetero_shallow",
    "step_shallow",
    "spectral_radius",
]
