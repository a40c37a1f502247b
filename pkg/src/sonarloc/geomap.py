"""Semantic aerial map: class raster, world/pixel transforms, pose-conditioned polar crops.

The map is a georeferenced grid of class labels (Water, Structure, Movable,
Unknown). Crops sample the map along the sonar's fan geometry so they share
shape and scale with acoustic frames and can be compared directly.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# Class labels of the semantic raster.
WATER = 0
STRUCTURE = 1
MOVABLE = 2
UNKNOWN = 255

CLASS_LABELS = frozenset((WATER, STRUCTURE, MOVABLE, UNKNOWN))

TWO_PI = 2.0 * math.pi


class MapFormatError(ValueError):
    """A map file or its JSON sidecar violates the on-disk contract."""


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    return wrapped


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorized wrap_angle: normalize angles to (-pi, pi]."""
    wrapped = np.mod(np.asarray(theta, dtype=np.float64) + np.pi, TWO_PI) - np.pi
    return np.where(wrapped <= -np.pi, wrapped + TWO_PI, wrapped)


@dataclass(frozen=True)
class Pose2D:
    """Planar pose: position in meters (world frame), heading in radians.

    theta is normalized to (-pi, pi] at construction.
    """

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        for v in (self.x, self.y, self.theta):
            if not math.isfinite(v):
                raise ValueError(f"pose components must be finite, got {self}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=np.float64)


@dataclass(frozen=True)
class SonarFootprint:
    """Fan-beam geometry shared by acoustic frames and map crops.

    Rows of a polar raster are range bins (ascending range), columns are
    bearing bins ascending from -fov/2. Both axes sample bin centers.
    """

    max_range: float = 30.0
    fov: float = math.radians(90.0)
    range_bins: int = 128
    bearing_bins: int = 256

    def __post_init__(self):
        if not (self.max_range > 0 and math.isfinite(self.max_range)):
            raise ValueError(f"max_range must be positive, got {self.max_range}")
        if not (0 < self.fov < TWO_PI):
            raise ValueError(f"fov must be in (0, 2*pi), got {self.fov}")
        if self.range_bins < 1 or self.bearing_bins < 1:
            raise ValueError("range_bins and bearing_bins must be >= 1")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.range_bins, self.bearing_bins)

    def to_dict(self) -> dict:
        return {
            "max_range": self.max_range,
            "fov": self.fov,
            "range_bins": self.range_bins,
            "bearing_bins": self.bearing_bins,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SonarFootprint":
        extra = set(d) - {"max_range", "fov", "range_bins", "bearing_bins"}
        if extra:
            raise ValueError(f"unknown footprint keys: {sorted(extra)}")
        return cls(**d)


@functools.lru_cache(maxsize=16)
def bin_ranges(fp: SonarFootprint) -> np.ndarray:
    """Center range (m) of each range bin."""
    r = (np.arange(fp.range_bins, dtype=np.float64) + 0.5) / fp.range_bins * fp.max_range
    r.flags.writeable = False
    return r


@functools.lru_cache(maxsize=16)
def bin_bearings(fp: SonarFootprint) -> np.ndarray:
    """Center bearing (rad) of each bearing column, ascending from -fov/2."""
    b = -fp.fov / 2.0 + (np.arange(fp.bearing_bins, dtype=np.float64) + 0.5) / fp.bearing_bins * fp.fov
    b.flags.writeable = False
    return b


@functools.lru_cache(maxsize=16)
def sensor_offsets(fp: SonarFootprint) -> tuple[np.ndarray, np.ndarray]:
    """Sensor-frame sample points of every polar cell, flattened row-major.

    Returns (x, y) arrays of length range_bins * bearing_bins; x is forward,
    positive bearing turns counterclockwise (+y).
    """
    r = bin_ranges(fp)[:, None]
    b = bin_bearings(fp)[None, :]
    x = (r * np.cos(b)).ravel()
    y = (r * np.sin(b)).ravel()
    x.flags.writeable = False
    y.flags.writeable = False
    return x, y


@dataclass
class SemanticMap:
    """Immutable class-label raster with world georeferencing.

    cells[iy, ix] is the label of the pixel whose center sits at
    (origin_x + (ix + 0.5) * resolution, origin_y + (iy + 0.5) * resolution).
    """

    cells: np.ndarray
    resolution: float
    origin_x: float = 0.0
    origin_y: float = 0.0

    def __post_init__(self):
        cells = np.ascontiguousarray(self.cells, dtype=np.uint8)
        if cells.ndim != 2 or cells.shape[0] < 1 or cells.shape[1] < 1:
            raise MapFormatError(f"cells must be a non-empty 2D array, got shape {cells.shape}")
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise MapFormatError(f"resolution must be positive, got {self.resolution}")
        bad = np.setdiff1d(np.unique(cells), sorted(CLASS_LABELS))
        if bad.size:
            raise MapFormatError(f"cells contain labels outside the class set: {bad.tolist()}")
        cells.flags.writeable = False
        self.cells = cells

    @property
    def height_px(self) -> int:
        return self.cells.shape[0]

    @property
    def width_px(self) -> int:
        return self.cells.shape[1]

    @property
    def width_m(self) -> float:
        return self.width_px * self.resolution

    @property
    def height_m(self) -> float:
        return self.height_px * self.resolution

    def contains(self, x: float, y: float) -> bool:
        """True if the world point falls inside the map rectangle."""
        return (
            self.origin_x <= x < self.origin_x + self.width_m
            and self.origin_y <= y < self.origin_y + self.height_m
        )

    def world_to_pixel(self, x: float, y: float) -> tuple[int, int] | None:
        """Pixel index (ix, iy) containing a world point, or None if off-map."""
        ix = math.floor((x - self.origin_x) / self.resolution)
        iy = math.floor((y - self.origin_y) / self.resolution)
        if 0 <= ix < self.width_px and 0 <= iy < self.height_px:
            return ix, iy
        return None

    def pixel_to_world(self, ix: int, iy: int) -> tuple[float, float]:
        """World coordinates of a pixel center."""
        return (
            self.origin_x + (ix + 0.5) * self.resolution,
            self.origin_y + (iy + 0.5) * self.resolution,
        )

    def class_at(self, x: float, y: float) -> int:
        """Class label at a world point; Unknown off-map."""
        px = self.world_to_pixel(x, y)
        if px is None:
            return UNKNOWN
        return int(self.cells[px[1], px[0]])

    def classes_at(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized class lookup; off-map points yield Unknown."""
        ix = np.floor((np.asarray(xs) - self.origin_x) / self.resolution).astype(np.int64)
        iy = np.floor((np.asarray(ys) - self.origin_y) / self.resolution).astype(np.int64)
        inb = (ix >= 0) & (ix < self.width_px) & (iy >= 0) & (iy < self.height_px)
        out = np.full(ix.shape, UNKNOWN, dtype=np.uint8)
        out[inb] = self.cells[iy[inb], ix[inb]]
        return out

    def contains_batch(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Vectorized contains()."""
        xs = np.asarray(xs)
        ys = np.asarray(ys)
        return (
            (xs >= self.origin_x)
            & (xs < self.origin_x + self.width_m)
            & (ys >= self.origin_y)
            & (ys < self.origin_y + self.height_m)
        )


@dataclass
class CropImage:
    """Polar crop of the semantic map rendered from a pose, one label per fan cell."""

    cells: np.ndarray
    footprint: SonarFootprint
    pose: Pose2D

    def __post_init__(self):
        if self.cells.shape != self.footprint.shape:
            raise ValueError(
                f"crop shape {self.cells.shape} does not match footprint {self.footprint.shape}"
            )


def crop_classes_batch(world_map: SemanticMap, poses: np.ndarray, fp: SonarFootprint) -> np.ndarray:
    """Render polar crops for a batch of poses.

    poses is (K, 3) rows of [x, y, theta]; returns (K, range_bins, bearing_bins)
    uint8 labels. Off-map samples are Unknown.
    """
    poses = np.asarray(poses, dtype=np.float64).reshape(-1, 3)
    off_x, off_y = sensor_offsets(fp)
    c = np.cos(poses[:, 2])[:, None]
    s = np.sin(poses[:, 2])[:, None]
    wx = poses[:, 0][:, None] + c * off_x - s * off_y
    wy = poses[:, 1][:, None] + s * off_x + c * off_y
    labels = world_map.classes_at(wx, wy)
    return labels.reshape(len(poses), fp.range_bins, fp.bearing_bins)


def crop_from_pose(world_map: SemanticMap, pose: Pose2D, fp: SonarFootprint) -> CropImage:
    """Render the map crop seen by a sonar at `pose`.

    Cell (r, b) holds the map class at
    pose + range(r) * direction(pose.theta + bearing(b)), with
    range(r) = (r + 0.5) / range_bins * max_range and bearing(b) the center of
    column b. Samples outside the map are Unknown.
    """
    cells = crop_classes_batch(world_map, pose.as_array()[None, :], fp)[0]
    return CropImage(cells=cells, footprint=fp, pose=pose)


@dataclass(frozen=True)
class PoseValidity:
    """Outcome of the three bad-particle tests."""

    on_structure: bool
    out_of_map: bool
    open_water: bool

    @property
    def ok(self) -> bool:
        return not (self.on_structure or self.out_of_map or self.open_water)


def pose_validity(world_map: SemanticMap, pose: Pose2D, crop: CropImage) -> PoseValidity:
    """Evaluate the bad-particle tests for a pose and its crop.

    on_structure: the pose sits on a Structure pixel. out_of_map: the pose is
    outside the map rectangle. open_water: the crop contains no Structure cell
    (Movable cells do not count; they are not matchable).
    """
    out = not world_map.contains(pose.x, pose.y)
    on_structure = world_map.class_at(pose.x, pose.y) == STRUCTURE
    open_water = not bool((crop.cells == STRUCTURE).any())
    return PoseValidity(on_structure=on_structure, out_of_map=out, open_water=open_water)


# On-disk format: 8-bit single-channel PGM or PNG holding the class labels,
# plus a JSON sidecar with georeferencing.

_SIDECAR_KEYS = ("resolution_m_per_px", "origin_x_m", "origin_y_m")


def save_semantic_map(world_map: SemanticMap, out_dir: str | Path, stem: str = "map",
                      fmt: str = "pgm") -> Path:
    """Write map.<fmt> and map.json into out_dir; returns the image path."""
    if fmt not in ("pgm", "png"):
        raise ValueError(f"fmt must be 'pgm' or 'png', got {fmt!r}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    img_path = out_dir / f"{stem}.{fmt}"
    Image.fromarray(world_map.cells, mode="L").save(img_path)
    sidecar = {
        "resolution_m_per_px": world_map.resolution,
        "origin_x_m": world_map.origin_x,
        "origin_y_m": world_map.origin_y,
    }
    (out_dir / f"{stem}.json").write_text(json.dumps(sidecar, indent=2) + "\n")
    return img_path


def load_semantic_map(path: str | Path) -> SemanticMap:
    """Load a semantic map from an image file or a directory containing one.

    Accepts a .pgm/.png path with a sibling .json sidecar, or a directory
    holding exactly one such pair (stem 'map' preferred).
    """
    path = Path(path)
    if path.is_dir():
        candidates = [path / "map.pgm", path / "map.png"]
        candidates += sorted(p for p in path.iterdir() if p.suffix in (".pgm", ".png"))
        for cand in candidates:
            if cand.is_file():
                path = cand
                break
        else:
            raise FileNotFoundError(f"no .pgm or .png map image in {path}")
    if not path.is_file():
        raise FileNotFoundError(f"map image not found: {path}")
    sidecar_path = path.with_suffix(".json")
    if not sidecar_path.is_file():
        raise FileNotFoundError(f"map sidecar not found: {sidecar_path}")
    try:
        sidecar = json.loads(sidecar_path.read_text())
    except json.JSONDecodeError as e:
        raise MapFormatError(f"map sidecar is not valid JSON: {e}") from e
    missing = [k for k in _SIDECAR_KEYS if k not in sidecar]
    if missing:
        raise MapFormatError(f"map sidecar missing keys: {missing}")
    with Image.open(path) as im:
        if im.mode != "L":
            raise MapFormatError(f"map image must be 8-bit single-channel, got mode {im.mode!r}")
        cells = np.asarray(im, dtype=np.uint8)
    return SemanticMap(
        cells=cells,
        resolution=float(sidecar["resolution_m_per_px"]),
        origin_x=float(sidecar["origin_x_m"]),
        origin_y=float(sidecar["origin_y_m"]),
    )
