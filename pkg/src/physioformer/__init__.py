"""Affective-state prediction from wearable physiological signals.

Pipeline: low-pass denoising and fixed windowing of raw streams, per-indicator
statistical feature extraction, a per-indicator contribution/affect network
stack with causal cumulative temporal encoding, per-subject training, and a
genetic-programming distillation stage that fits closed-form laws to the
trained per-indicator outputs.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DistillationError,
    ExtractionError,
    IngestionError,
    PreprocessingError,
    TrainingError,
)

__all__ = [
    "ConfigurationError",
    "DistillationError",
    "ExtractionError",
    "IngestionError",
    "PreprocessingError",
    "TrainingError",
    "__version__",
]
