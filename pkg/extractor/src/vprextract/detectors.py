"""Local-feature detectors and the whole-image descriptor.

Each detector maps a grayscale uint8 image to raw keypoint positions
(x, y pixel coordinates), native scores and descriptors; score
thresholds, bounds filtering and unit normalization are applied later by
the job runner. Detectors that have no native score (the patch grid)
report 1.0 for every feature, which downstream weighting treats as a
uniform-confidence degenerate case.

OpenCV-backed detectors import cv2 lazily, so the pure-NumPy fallback
works without it.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np
from PIL import Image

from .errors import DetectorError

PATCH = 16  # patch side for the grid detector; descriptor dim is PATCH**2
TINY_SIDE = 16  # global descriptor is a TINY_SIDE**2 standardized thumbnail


class Detection(NamedTuple):
    """Raw detector output, aligned row by row (float64 throughout)."""

    positions: np.ndarray  # (n, 2), columns x, y
    scores: np.ndarray  # (n,)
    descriptors: np.ndarray  # (n, dim), not necessarily normalized


class Detector(NamedTuple):
    dim: int
    run: Callable[[np.ndarray], Detection]
    summary: str


def _empty(dim: int) -> Detection:
    return Detection(np.zeros((0, 2)), np.zeros(0), np.zeros((0, dim)))


def _cv2():
    try:
        import cv2
    except ImportError as exc:  # pragma: no cover - cv2 present in CI
        raise DetectorError(
            "this detector needs OpenCV (pip install opencv-python-headless)"
        ) from exc
    return cv2


def _detect_sift(gray: np.ndarray) -> Detection:
    cv2 = _cv2()
    keypoints, desc = cv2.SIFT_create().detectAndCompute(gray, None)
    if not keypoints:
        return _empty(128)
    positions = np.array([kp.pt for kp in keypoints], dtype=np.float64)
    scores = np.array([kp.response for kp in keypoints], dtype=np.float64)
    return Detection(positions, scores, desc.astype(np.float64))


def _detect_orb(gray: np.ndarray) -> Detection:
    cv2 = _cv2()
    keypoints, desc = cv2.ORB_create(nfeatures=1500).detectAndCompute(gray, None)
    if not keypoints:
        return _empty(256)
    positions = np.array([kp.pt for kp in keypoints], dtype=np.float64)
    scores = np.array([kp.response for kp in keypoints], dtype=np.float64)
    # 32 binary bytes -> 256 bits, so Euclidean distance between the
    # unit-normalized rows is monotone in Hamming distance.
    bits = np.unpackbits(desc, axis=1).astype(np.float64)
    return Detection(positions, scores, bits)


def _detect_grid(gray: np.ndarray) -> Detection:
    """Dense patch grid: mean-subtracted raw pixels, no native score.

    Flat patches carry no signal and are skipped, so a constant image
    yields zero features.
    """
    img = gray.astype(np.float64)
    half = PATCH // 2
    stride = max(half, min(img.shape) // 14)
    ys = np.arange(half, img.shape[0] - half + 1, stride)
    xs = np.arange(half, img.shape[1] - half + 1, stride)
    positions, descriptors = [], []
    for cy in ys:
        for cx in xs:
            patch = img[cy - half:cy + half, cx - half:cx + half].ravel()
            patch = patch - patch.mean()
            norm = np.linalg.norm(patch)
            if norm < 1e-6:
                continue
            positions.append((float(cx), float(cy)))
            descriptors.append(patch / norm)
    if not positions:
        return _empty(PATCH * PATCH)
    return Detection(np.asarray(positions), np.ones(len(positions)),
                     np.asarray(descriptors))


DETECTORS: dict[str, Detector] = {
    "sift": Detector(128, _detect_sift,
                     "OpenCV SIFT keypoints, detector response as score"),
    "orb": Detector(256, _detect_orb,
                    "OpenCV ORB, descriptor bits unpacked to 256-d, "
                    "detector response as score"),
    "grid": Detector(PATCH * PATCH, _detect_grid,
                     "dense patch grid, uniform score 1.0 (no native score)"),
}


def tiny_image_descriptor(gray: np.ndarray) -> np.ndarray:
    """Whole-image descriptor: standardized thumbnail, unit float64.

    A constant image standardizes to zero, which cannot be normalized;
    it falls back to the uniform unit vector so every image gets a valid
    descriptor.
    """
    thumb = Image.fromarray(gray).resize((TINY_SIDE, TINY_SIDE), Image.BILINEAR)
    vec = np.asarray(thumb, dtype=np.float64).ravel()
    vec = vec - vec.mean()
    norm = np.linalg.norm(vec)
    if norm < 1e-9:
        return np.full(TINY_SIDE * TINY_SIDE, 1.0 / TINY_SIDE)
    return vec / norm
