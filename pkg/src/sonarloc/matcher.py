"""Cross-domain similarity between acoustic frames and map crops, plus score normalization.

A scorer is any callable (AcousticImage, CropImage) -> distance: deterministic,
finite, non-negative, lower is better. Two concrete scorers are provided: a
classical overlap baseline and a ground-truth oracle for simulator runs. Raw
distances turn into particle weights through `normalize_scores`.
"""

from __future__ import annotations

import math

import numpy as np

from .geomap import STRUCTURE, CropImage, wrap_angle
from .sonar import AcousticImage


class DimensionMismatch(ValueError):
    """Acoustic frame and map crop do not share the fan grid shape."""


class MissingGroundTruth(ValueError):
    """Oracle scorer received a frame without a ground-truth pose tag."""


class EmptyInput(ValueError):
    """An operation that needs at least one element got none."""


def baseline_scorer(acoustic: AcousticImage, crop: CropImage) -> float:
    """Distance = 1 - IoU between the echo mask and the crop's Structure mask.

    The acoustic image is binarized at intensity > 0; the crop mask keeps only
    Structure cells (Movable and Unknown cells are not matchable). Two empty
    masks give distance 1 so featureless pairs never look like a match.
    """
    if acoustic.pixels.shape != crop.cells.shape:
        raise DimensionMismatch(
            f"acoustic {acoustic.pixels.shape} vs crop {crop.cells.shape}"
        )
    echo = acoustic.pixels > 0.0
    structure = crop.cells == STRUCTURE
    union = np.count_nonzero(echo | structure)
    if union == 0:
        return 1.0
    inter = np.count_nonzero(echo & structure)
    return 1.0 - inter / union


def oracle_scorer(acoustic: AcousticImage, crop: CropImage) -> float:
    """Distance = position error plus absolute wrapped heading error to ground truth.

    Test instrument for simulator runs: ranks candidate poses exactly by their
    true pose error. Requires the frame's true_pose tag.
    """
    if acoustic.pixels.shape != crop.cells.shape:
        raise DimensionMismatch(
            f"acoustic {acoustic.pixels.shape} vs crop {crop.cells.shape}"
        )
    if acoustic.true_pose is None:
        raise MissingGroundTruth("acoustic frame carries no ground-truth pose")
    true = acoustic.true_pose
    return math.hypot(crop.pose.x - true.x, crop.pose.y - true.y) + abs(
        wrap_angle(crop.pose.theta - true.theta)
    )


def normalize_scores(distances) -> np.ndarray:
    """Invert match distances into a weight vector summing to 1.

    With dmax and dmin the extreme distances, each raw score is
    fhat_k = dmax - d_k + dmin, then scores are normalized by their sum. The
    best (lowest-distance) candidate gets the largest weight. When the sum is
    zero (all distances zero) the vector is uniform.
    """
    d = np.asarray(distances, dtype=np.float64).ravel()
    if d.size == 0:
        raise EmptyInput("need at least one distance")
    if not np.all(np.isfinite(d)):
        raise ValueError("distances must be finite")
    if d.min() < 0.0:
        raise ValueError("distances must be non-negative")
    fhat = d.max() - d + d.min()
    total = fhat.sum()
    if total == 0.0:
        return np.full(d.size, 1.0 / d.size)
    return fhat / total
