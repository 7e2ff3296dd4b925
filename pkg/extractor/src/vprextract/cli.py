"""Command-line front end: ``vprextract IMAGES --out DIR``.

Exit status: 0 when every image was serialized, 1 when any image was
skipped (each skip is logged), 2 for unusable arguments.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .detectors import DETECTORS
from .errors import ExtractionError
from .job import ExtractionJob, extract_and_serialize

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".webp"}


def _collect_images(src: Path) -> list[Path]:
    if src.is_file():
        return [src]
    if src.is_dir():
        return sorted(p for p in src.iterdir()
                      if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    return []


def build_parser() -> argparse.ArgumentParser:
    detector_lines = "; ".join(f"{name}: {spec.summary}"
                               for name, spec in sorted(DETECTORS.items()))
    parser = argparse.ArgumentParser(
        prog="vprextract",
        description="Run a local-feature detector over images and serialize "
                    "VPRF/VPRG files for the re-ranking engine.",
        epilog=f"detectors -- {detector_lines}")
    parser.add_argument("images",
                        help="an image file or a folder of images "
                             f"({', '.join(sorted(IMAGE_SUFFIXES))})")
    parser.add_argument("--out", required=True, metavar="DIR",
                        help="output directory (created if missing)")
    parser.add_argument("--resolution", type=int, default=336, metavar="R",
                        help="square side every image is resized to before "
                             "detection; stored coordinates are pixels at this "
                             "resolution (default %(default)s, commonly 336 or 320)")
    parser.add_argument("--detector", choices=sorted(DETECTORS), default="sift",
                        help="local-feature detector (default %(default)s)")
    parser.add_argument("--min-score", type=float, default=0.0, metavar="S",
                        help="drop features whose native detector score is below "
                             "S; detectors whose useful features score weakly are "
                             "typically run at 0.1 (default %(default)s)")
    parser.add_argument("--sequence-id", metavar="NAME",
                        help="stem of the global-descriptor file "
                             "(default: the input folder or file name)")
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)

    src = Path(args.images)
    images = _collect_images(src)
    if not images:
        parser.error(f"no images found at {src}")
    sequence_id = args.sequence_id or (src.stem if src.is_file() else src.name)

    try:
        job = ExtractionJob(images=tuple(images), out_dir=Path(args.out),
                            resolution=args.resolution, detector=args.detector,
                            min_score=args.min_score, sequence_id=sequence_id)
        report = extract_and_serialize(job)
    except ExtractionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    print(f"wrote {len(report.written)} feature file(s) and "
          f"{report.descriptor_path.name} to {job.out_dir}")
    if report.skipped:
        print(f"skipped {len(report.skipped)} image(s):", file=sys.stderr)
        for path, reason in report.skipped:
            print(f"  {path}: {reason}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
