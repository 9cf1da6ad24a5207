"""WESAD archive to neutral columnar recording converter."""

__version__ = "0.1.0"

from .convert import ConversionManifest, convert_subject

__all__ = ["ConversionManifest", "convert_subject", "__version__"]
