"""Run a detector over an image list and serialize the results.

One VPRF file per image (named after the image's stem) plus one VPRG
file for the whole sequence. Images are processed independently: a
failure to read or detect on one image skips that image with a log
entry and leaves the rest of the batch intact.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .detectors import DETECTORS, tiny_image_descriptor
from .errors import JobError
from .formats import write_features, write_globals

log = logging.getLogger("vprextract")


@dataclass(frozen=True)
class ExtractionJob:
    """What to extract: images, working resolution, detector, output.

    Every image is resized to ``resolution`` x ``resolution`` before
    detection, so stored coordinates are pixels of the engine's working
    resolution. ``min_score`` drops features below the detector's
    native response; detectors whose useful features score weakly are
    typically run with this lowered to 0.1.
    """

    images: tuple[Path, ...]
    out_dir: Path
    resolution: int = 336
    detector: str = "sift"
    min_score: float = 0.0
    sequence_id: str = "sequence"

    def __post_init__(self):
        object.__setattr__(self, "images", tuple(Path(p) for p in self.images))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        if not self.images:
            raise JobError("job lists no images")
        if isinstance(self.resolution, bool) or not isinstance(self.resolution, int) \
                or self.resolution < 1:
            raise JobError(f"resolution must be a positive integer, "
                           f"got {self.resolution!r}")
        if self.detector not in DETECTORS:
            raise JobError(f"unknown detector {self.detector!r}; available: "
                           f"{', '.join(sorted(DETECTORS))}")
        if not (math.isfinite(self.min_score) and self.min_score >= 0):
            raise JobError(f"min_score must be finite and >= 0, "
                           f"got {self.min_score!r}")
        if not self.sequence_id or any(c in self.sequence_id for c in "/\\"):
            raise JobError(f"sequence_id {self.sequence_id!r} is not a file name")
        dupes = [s for s, c in Counter(p.stem for p in self.images).items() if c > 1]
        if dupes:
            raise JobError(f"duplicate image stems (ids collide): {sorted(dupes)}")


@dataclass(frozen=True)
class ExtractionReport:
    """Which files were produced and which images were skipped."""

    written: tuple[Path, ...]
    skipped: tuple[tuple[Path, str], ...]  # (image path, reason)
    descriptor_path: Path


def _load_grayscale(path: Path, resolution: int) -> np.ndarray:
    with Image.open(path) as img:
        gray = img.convert("L").resize((resolution, resolution), Image.BILINEAR)
    return np.asarray(gray, dtype=np.uint8)


def _finalize(detection, side: int, min_score: float):
    """Cast to the stored float32, then filter on the stored values.

    Keeps features whose score clears the threshold, whose position
    lands inside the image after the cast, and whose descriptor has
    usable norm; descriptors are normalized in float64 before the final
    cast so the stored norms stay within the format's 1e-4 tolerance.
    """
    positions = np.asarray(detection.positions, dtype=np.float32).reshape(-1, 2)
    scores = np.asarray(detection.scores, dtype=np.float32).reshape(-1)
    scores = np.maximum(scores, 0.0)
    descriptors = np.asarray(detection.descriptors, dtype=np.float64)
    norms = np.linalg.norm(descriptors, axis=1)
    keep = (scores >= min_score) & (norms > 1e-12)
    keep &= (positions[:, 0] >= 0) & (positions[:, 0] < side)
    keep &= (positions[:, 1] >= 0) & (positions[:, 1] < side)
    descriptors = (descriptors[keep] / norms[keep, None]).astype(np.float32)
    return positions[keep], scores[keep], descriptors


def extract_and_serialize(job: ExtractionJob) -> ExtractionReport:
    """Write one VPRF per readable image and one VPRG for the sequence.

    Returns the report rather than raising on per-image failures; the
    caller decides whether a partial batch is acceptable (the CLI does
    not: any skip makes its exit status nonzero).
    """
    spec = DETECTORS[job.detector]
    job.out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    skipped: list[tuple[Path, str]] = []
    globals_: list[tuple[str, np.ndarray]] = []

    for path in job.images:
        try:
            gray = _load_grayscale(path, job.resolution)
            detection = spec.run(gray)
        except Exception as exc:
            log.warning("skipping %s: %s", path, exc)
            skipped.append((path, str(exc)))
            continue
        positions, scores, descriptors = _finalize(
            detection, job.resolution, job.min_score)
        out = job.out_dir / f"{path.stem}.vprf"
        write_features(out, width=job.resolution, height=job.resolution,
                       positions=positions, scores=scores,
                       descriptors=descriptors, descriptor_dim=spec.dim)
        written.append(out)
        globals_.append((path.stem, tiny_image_descriptor(gray)))

    descriptor_path = job.out_dir / f"{job.sequence_id}.vprg"
    write_globals(descriptor_path, globals_)
    return ExtractionReport(tuple(written), tuple(skipped), descriptor_path)
