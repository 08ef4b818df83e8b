"""Descriptor extraction for the gnncca association pipeline."""

from .extract import ExtractJob, JobError, extract_descriptors
from .formats import FormatError, load_detections, load_store, save_store

__version__ = "0.1.0"
