"""modalgauge-extractor: produce modalgauge embedding files from a dual
encoder and an image-classification dataset."""

__version__ = "0.1.0"

from .datasets import ImageFolderDataset, SyntheticDataset, resolve_dataset
from .encoders import StubEncoder, resolve_encoder
from .extract import (
    DEFAULT_PROMPT,
    ExtractionJob,
    MetadataError,
    extract,
    make_validation_split,
)

__all__ = [
    "DEFAULT_PROMPT",
    "ExtractionJob",
    "ImageFolderDataset",
    "MetadataError",
    "StubEncoder",
    "SyntheticDataset",
    "extract",
    "make_validation_split",
    "resolve_dataset",
    "resolve_encoder",
]
