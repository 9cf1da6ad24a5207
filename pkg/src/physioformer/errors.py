"""Exception hierarchy shared across the pipeline stages."""


class PhysioFormerError(Exception):
    """Base class for all pipeline errors."""


class ConfigurationError(PhysioFormerError):
    """Invalid filter, window, model, or search configuration."""


class PreprocessingError(PhysioFormerError):
    """Signal too short, empty window plan, or similar stage failures."""


class ExtractionError(PhysioFormerError):
    """Feature extraction received unusable input."""


class IngestionError(PhysioFormerError):
    """On-disk data violates the columnar schema or the attribute domain."""


class AlignmentError(PhysioFormerError):
    """Window counts disagree across indicators of one subject."""


class TrainingError(PhysioFormerError):
    """Non-finite loss or gradients during optimization."""


class DistillationError(PhysioFormerError):
    """Symbolic-law extraction could not run on the given inputs."""


class MetricsError(PhysioFormerError):
    """Metrics requested on an empty evaluation set."""
