"""Acoustic frame processing: I/O, information gate, centroid extraction, 2D ICP, enhancement.

Frames are polar rasters sharing the SonarFootprint grid of `geomap`. The
enhancement pipeline registers a rolling batch of frames with ICP on segment
centroids, warps them into the newest frame's viewpoint, and averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.spatial import cKDTree

from .geomap import Pose2D, SonarFootprint, sensor_offsets, wrap_angle


class DegenerateCloud(RuntimeError):
    """Point clouds too small or too ill-conditioned to register."""


@dataclass
class AcousticImage:
    """Polar intensity raster from a fan-beam sonar.

    pixels[r, b] is in [0, 1]; rows are range bins ascending, columns bearing
    bins ascending from -fov/2. true_pose is simulator-only ground truth used
    by the oracle scorer; real frames carry None.
    """

    pixels: np.ndarray
    footprint: SonarFootprint
    timestamp: float | None = None
    true_pose: Pose2D | None = None

    def __post_init__(self):
        pixels = np.ascontiguousarray(self.pixels, dtype=np.float64)
        if pixels.shape != self.footprint.shape:
            raise ValueError(
                f"pixel shape {pixels.shape} does not match footprint {self.footprint.shape}"
            )
        if pixels.size and (pixels.min() < 0.0 or pixels.max() > 1.0):
            raise ValueError("pixel intensities must lie in [0, 1]")
        self.pixels = pixels


def save_acoustic_frame(img: AcousticImage, path: str | Path) -> Path:
    """Write a frame as an 8-bit grayscale image (intensity 1.0 -> 255)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    quantized = np.rint(img.pixels * 255.0).astype(np.uint8)
    Image.fromarray(quantized, mode="L").save(path)
    return path


def load_acoustic_frame(path: str | Path, fp: SonarFootprint,
                        timestamp: float | None = None) -> AcousticImage:
    """Read an 8-bit grayscale frame and scale to [0, 1]."""
    path = Path(path)
    with Image.open(path) as im:
        if im.mode != "L":
            raise ValueError(f"acoustic frame must be 8-bit single-channel, got mode {im.mode!r}")
        raw = np.asarray(im, dtype=np.float64)
    if raw.shape != fp.shape:
        raise ValueError(f"frame shape {raw.shape} does not match footprint {fp.shape}")
    return AcousticImage(pixels=raw / 255.0, footprint=fp, timestamp=timestamp)


def is_informative(img: AcousticImage, threshold: float = 0.02) -> bool:
    """True when the fraction of non-zero pixels reaches `threshold`.

    Frames below the threshold carry too little structure to match against the
    map and are discarded by the filter's observation update.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    count = np.count_nonzero(img.pixels > 0.0)
    return count / img.pixels.size >= threshold


def extract_centroids(img: AcousticImage, grad_threshold: float = 0.1,
                      min_blob_px: int = 4) -> np.ndarray:
    """Segment echo borders and return one sensor-frame point per segment.

    Border detection thresholds the central-difference gradient magnitude of
    the polar raster at `grad_threshold`. Each 4-connected component with at
    least `min_blob_px` pixels yields one point: the intensity-weighted
    centroid (falling back to the plain mean when the component covers only
    zero-intensity pixels), converted to Cartesian meters through the bin
    center geometry. Returns an (N, 2) array of (x, y); x is forward.
    """
    fp = img.footprint
    gr, gb = np.gradient(img.pixels)
    mask = np.hypot(gr, gb) > grad_threshold
    labels, n_labels = ndimage.label(mask)
    if n_labels == 0:
        return np.empty((0, 2), dtype=np.float64)

    lab = labels.ravel()
    member = lab > 0
    lab = lab[member]
    rows, cols = np.indices(fp.shape)
    rows = rows.ravel()[member].astype(np.float64)
    cols = cols.ravel()[member].astype(np.float64)
    intensity = img.pixels.ravel()[member]

    counts = np.bincount(lab, minlength=n_labels + 1)[1:]
    wsum = np.bincount(lab, weights=intensity, minlength=n_labels + 1)[1:]
    r_w = np.bincount(lab, weights=intensity * rows, minlength=n_labels + 1)[1:]
    b_w = np.bincount(lab, weights=intensity * cols, minlength=n_labels + 1)[1:]
    r_u = np.bincount(lab, weights=rows, minlength=n_labels + 1)[1:]
    b_u = np.bincount(lab, weights=cols, minlength=n_labels + 1)[1:]

    keep = counts >= min_blob_px
    if not keep.any():
        return np.empty((0, 2), dtype=np.float64)
    weighted = wsum[keep] > 0.0
    r_frac = np.where(weighted, r_w[keep] / np.where(wsum[keep] > 0, wsum[keep], 1.0),
                      r_u[keep] / counts[keep])
    b_frac = np.where(weighted, b_w[keep] / np.where(wsum[keep] > 0, wsum[keep], 1.0),
                      b_u[keep] / counts[keep])

    rng_m = (r_frac + 0.5) / fp.range_bins * fp.max_range
    brg = -fp.fov / 2.0 + (b_frac + 0.5) / fp.bearing_bins * fp.fov
    return np.column_stack((rng_m * np.cos(brg), rng_m * np.sin(brg)))


@dataclass(frozen=True)
class RigidTransform2D:
    """Planar rigid motion p' = R(theta) p + (tx, ty)."""

    theta: float
    tx: float
    ty: float

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
        c, s = math.cos(self.theta), math.sin(self.theta)
        out = np.empty_like(points)
        out[:, 0] = c * points[:, 0] - s * points[:, 1] + self.tx
        out[:, 1] = s * points[:, 0] + c * points[:, 1] + self.ty
        return out

    def compose(self, other: "RigidTransform2D") -> "RigidTransform2D":
        """Transform equivalent to applying `other` first, then self."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        return RigidTransform2D(
            theta=wrap_angle(self.theta + other.theta),
            tx=c * other.tx - s * other.ty + self.tx,
            ty=s * other.tx + c * other.ty + self.ty,
        )

    def inverse(self) -> "RigidTransform2D":
        c, s = math.cos(self.theta), math.sin(self.theta)
        return RigidTransform2D(
            theta=wrap_angle(-self.theta),
            tx=-(c * self.tx + s * self.ty),
            ty=-(-s * self.tx + c * self.ty),
        )

    def is_identity(self, tol: float = 1e-12) -> bool:
        return abs(self.theta) <= tol and math.hypot(self.tx, self.ty) <= tol

    @classmethod
    def identity(cls) -> "RigidTransform2D":
        return cls(0.0, 0.0, 0.0)


def _fit_rigid(src: np.ndarray, dst: np.ndarray) -> RigidTransform2D:
    """Closed-form least-squares rigid transform mapping src onto dst (paired)."""
    cs = src.mean(axis=0)
    cd = dst.mean(axis=0)
    s = src - cs
    d = dst - cd
    dot = float(np.sum(s[:, 0] * d[:, 0] + s[:, 1] * d[:, 1]))
    cross = float(np.sum(s[:, 0] * d[:, 1] - s[:, 1] * d[:, 0]))
    if dot == 0.0 and cross == 0.0:
        raise DegenerateCloud("rotation is unconstrained (coincident or empty clouds)")
    theta = math.atan2(cross, dot)
    c, si = math.cos(theta), math.sin(theta)
    tx = cd[0] - (c * cs[0] - si * cs[1])
    ty = cd[1] - (si * cs[0] + c * cs[1])
    return RigidTransform2D(theta=theta, tx=tx, ty=ty)


def icp_align(src: np.ndarray, dst: np.ndarray, max_iters: int = 50,
              conv_tol: float = 1e-6,
              history: list | None = None) -> tuple[RigidTransform2D, float]:
    """Register src onto dst with iterative closest point.

    Correspondences are nearest neighbors in dst; each iteration refits the
    closed-form rigid transform to the matched pairs, so the RMS residual is
    non-increasing. Starts from centroid pre-alignment. Terminates when the
    residual improves by less than conv_tol meters or after max_iters
    refits. Returns (transform, final RMS nearest-neighbor distance); appends
    the residual after every evaluation to `history` when given.
    """
    src = np.asarray(src, dtype=np.float64).reshape(-1, 2)
    dst = np.asarray(dst, dtype=np.float64).reshape(-1, 2)
    if len(src) < 3 or len(dst) < 3:
        raise DegenerateCloud(f"need at least 3 points per cloud, got {len(src)} and {len(dst)}")

    tree = cKDTree(dst)
    shift = dst.mean(axis=0) - src.mean(axis=0)
    transform = RigidTransform2D(0.0, float(shift[0]), float(shift[1]))
    dists, idx = tree.query(transform.apply(src))
    residual = float(np.sqrt(np.mean(dists ** 2)))
    if history is not None:
        history.append(residual)

    for _ in range(max_iters):
        transform = _fit_rigid(src, dst[idx])
        dists, idx = tree.query(transform.apply(src))
        new_residual = float(np.sqrt(np.mean(dists ** 2)))
        if history is not None:
            history.append(new_residual)
        improvement = residual - new_residual
        residual = new_residual
        if improvement < conv_tol:
            break
    return transform, residual


def _warp_into(target_fp: SonarFootprint, source: AcousticImage,
               source_from_target: RigidTransform2D) -> tuple[np.ndarray, np.ndarray]:
    """Resample `source` onto the target polar grid.

    source_from_target maps target sensor-frame points into the source sensor
    frame. Returns (values, valid) flattened over the target grid; cells whose
    source location falls outside the source fan are invalid.
    """
    tx, ty = sensor_offsets(target_fp)
    pts = source_from_target.apply(np.column_stack((tx, ty)))
    fp = source.footprint
    rho = np.hypot(pts[:, 0], pts[:, 1])
    beta = np.arctan2(pts[:, 1], pts[:, 0])
    ri = rho / fp.max_range * fp.range_bins - 0.5
    bi = (beta + fp.fov / 2.0) / fp.fov * fp.bearing_bins - 0.5
    valid = (ri >= 0.0) & (ri <= fp.range_bins - 1) & (bi >= 0.0) & (bi <= fp.bearing_bins - 1)

    ri = np.clip(ri, 0.0, fp.range_bins - 1)
    bi = np.clip(bi, 0.0, fp.bearing_bins - 1)
    r0 = np.minimum(ri.astype(np.int64), fp.range_bins - 2) if fp.range_bins > 1 else np.zeros(ri.shape, np.int64)
    b0 = np.minimum(bi.astype(np.int64), fp.bearing_bins - 2) if fp.bearing_bins > 1 else np.zeros(bi.shape, np.int64)
    fr = ri - r0
    fb = bi - b0
    r1 = np.minimum(r0 + 1, fp.range_bins - 1)
    b1 = np.minimum(b0 + 1, fp.bearing_bins - 1)
    px = source.pixels
    values = (
        px[r0, b0] * (1 - fr) * (1 - fb)
        + px[r1, b0] * fr * (1 - fb)
        + px[r0, b1] * (1 - fr) * fb
        + px[r1, b1] * fr * fb
    )
    return values, valid


def enhance(batch: list[AcousticImage], max_residual: float = 1.0,
            grad_threshold: float = 0.1, min_blob_px: int = 4,
            max_iters: int = 50, conv_tol: float = 1e-6) -> AcousticImage:
    """Fuse a time-ordered batch of frames into the newest frame's viewpoint.

    Consecutive frame pairs are registered by ICP on their segment centroids;
    chained transforms carry each older frame into the last frame's sensor
    frame, where it is bilinearly resampled and averaged per pixel over the
    frames that cover that pixel. A frame is dropped when any link of its
    chain is degenerate or registers with an RMS residual above max_residual
    meters. The newest frame always contributes; a batch of one is returned
    unchanged.
    """
    if not batch:
        raise ValueError("enhance needs at least one frame")
    fp = batch[-1].footprint
    for frame in batch:
        if frame.footprint.shape != fp.shape:
            raise ValueError("all frames in a batch must share the footprint shape")
    if len(batch) == 1:
        return batch[-1]

    clouds = [extract_centroids(f, grad_threshold, min_blob_px) for f in batch]
    links: list[RigidTransform2D | None] = []
    for i in range(len(batch) - 1):
        try:
            transform, residual = icp_align(clouds[i], clouds[i + 1],
                                            max_iters=max_iters, conv_tol=conv_tol)
        except DegenerateCloud:
            links.append(None)
            continue
        links.append(transform if residual <= max_residual else None)

    accum = batch[-1].pixels.copy().ravel()
    coverage = np.ones_like(accum)
    for i in range(len(batch) - 1):
        chain = RigidTransform2D.identity()
        ok = True
        for link in links[i:]:
            if link is None:
                ok = False
                break
            chain = link.compose(chain)
        if not ok:
            continue
        if chain.is_identity():
            accum += batch[i].pixels.ravel()
            coverage += 1.0
        else:
            values, valid = _warp_into(fp, batch[i], chain.inverse())
            accum[valid] += values[valid]
            coverage[valid] += 1.0

    fused = np.clip(accum / coverage, 0.0, 1.0).reshape(fp.shape)
    return replace(batch[-1], pixels=fused)
