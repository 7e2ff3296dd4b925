"""Extraction adapter: images in, VPRF/VPRG interchange files out.

Runs a local-feature detector (and a whole-image descriptor) over image
folders, resizing each image to the engine's working resolution, and
serializes the results into the byte formats the re-ranking engine
loads. The byte formats are the entire contract: this package never
imports the engine.
"""

from .detectors import DETECTORS, Detection, Detector, tiny_image_descriptor
from .errors import DetectorError, ExtractionError, FormatError, JobError
from .formats import write_features, write_globals
from .job import ExtractionJob, ExtractionReport, extract_and_serialize

__version__ = "0.1.0"

__all__ = [
    "DETECTORS",
    "Detection",
    "Detector",
    "DetectorError",
    "ExtractionError",
    "ExtractionJob",
    "ExtractionReport",
    "FormatError",
    "JobError",
    "extract_and_serialize",
    "tiny_image_descriptor",
    "write_features",
    "write_globals",
    "__version__",
]
