"""
Image grid and fan-beam acquisition geometry.

Conventions: view angles are measured counterclockwise from the +x axis, the
source sits at source_to_isocenter * (cos b, sin b) for view angle b, and images
are stored row-major with row 0 at +y. The detector is an equiangular arc centred
on the source; bin k sits at fan angle (k - center_bin) * detector_arc, positive
angles rotating the central ray counterclockwise.
"""
import math
from dataclasses import dataclass, asdict
from typing import Any, Dict, Tuple

import numpy as np

from app import constants as C
from app.errors import GeometryError


@dataclass(frozen=True)
class ImageGrid:
    height: int
    width: int
    pixel_size: float
    center: Tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.height < 8 or self.width < 8:
            raise GeometryError(f"Image grid must be at least 8x8, got {self.height}x{self.width}")
        if not self.pixel_size > 0:
            raise GeometryError(f"pixel_size must be positive, got {self.pixel_size}")

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.height, self.width)

    @property
    def diagonal(self) -> float:
        """Physical diagonal of the field of view in mm."""
        return math.hypot(self.height, self.width) * self.pixel_size

    def pixel_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Physical (x, y) coordinates of every pixel center, each shaped (height, width).
        """
        cols = (np.arange(self.width) - (self.width - 1) / 2.0) * self.pixel_size + self.center[0]
        rows = ((self.height - 1) / 2.0 - np.arange(self.height)) * self.pixel_size + self.center[1]
        x, y = np.meshgrid(cols, rows)
        return x, y

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["center"] = list(self.center)
        return d

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "ImageGrid":
        return cls(int(d["height"]), int(d["width"]), float(d["pixel_size"]),
                   tuple(float(c) for c in d.get("center", (0.0, 0.0))))


@dataclass(frozen=True)
class FanBeamGeometry:
    grid: ImageGrid
    num_views: int
    num_bins: int
    angular_range: float
    source_to_isocenter: float
    source_to_detector: float
    detector_arc: float

    def __post_init__(self):
        if self.num_views < 4:
            raise GeometryError(f"num_views must be >= 4, got {self.num_views}")
        if self.num_bins < 3 or self.num_bins % 2 == 0:
            raise GeometryError(f"num_bins must be odd and >= 3, got {self.num_bins}")
        if not self.source_to_detector > self.source_to_isocenter > 0:
            raise GeometryError("Require source_to_detector > source_to_isocenter > 0")
        if not 0 < self.angular_range <= 2 * math.pi + 1e-12:
            raise GeometryError(f"angular_range must lie in (0, 2pi], got {self.angular_range}")
        if not self.detector_arc > 0:
            raise GeometryError("detector_arc must be positive")
        radius = self.grid.diagonal / 2.0
        if radius >= self.source_to_isocenter:
            raise GeometryError("Field of view reaches the source")
        half_fan = self.center_bin * self.detector_arc
        if math.asin(radius / self.source_to_isocenter) >= half_fan:
            raise GeometryError("Detector arc does not cover the field of view")

    @property
    def center_bin(self) -> int:
        return (self.num_bins - 1) // 2

    @property
    def shape(self) -> Tuple[int, int]:
        """Sinogram shape, views-major."""
        return (self.num_views, self.num_bins)

    @property
    def angle_step(self) -> float:
        return self.angular_range / self.num_views

    @property
    def view_angles(self) -> np.ndarray:
        return np.arange(self.num_views) * self.angle_step

    def fan_angles(self, offset: float = 0.0) -> np.ndarray:
        """
        Fan angle of every bin; `offset` shifts all rays by a fraction of the bin pitch.
        """
        return (np.arange(self.num_bins) - self.center_bin + offset) * self.detector_arc

    def source_position(self, view: int) -> np.ndarray:
        beta = view * self.angle_step
        return self.source_to_isocenter * np.array([math.cos(beta), math.sin(beta)])

    def ray_directions(self, view: int, offset: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        """
        Source position (2,) and unit ray directions (num_bins, 2) for one view.
        """
        beta = view * self.angle_step
        src = self.source_position(view)
        cx, cy = -math.cos(beta), -math.sin(beta)
        gamma = self.fan_angles(offset)
        cg, sg = np.cos(gamma), np.sin(gamma)
        dirs = np.stack([cx * cg - cy * sg, cx * sg + cy * cg], axis=1)
        return src, dirs

    def to_dict(self) -> Dict[str, Any]:
        return {
            "num_views": self.num_views,
            "num_bins": self.num_bins,
            "angular_range": self.angular_range,
            "source_to_isocenter": self.source_to_isocenter,
            "source_to_detector": self.source_to_detector,
            "detector_arc": self.detector_arc,
            "view_angles": self.view_angles.tolist(),
            "grid": self.grid.to_dict(),
            "storage_order": "views-major",
        }

    @classmethod
    def from_dict(cls, d: Dict[str, Any]) -> "FanBeamGeometry":
        return cls(
            grid=ImageGrid.from_dict(d["grid"]),
            num_views=int(d["num_views"]),
            num_bins=int(d["num_bins"]),
            angular_range=float(d["angular_range"]),
            source_to_isocenter=float(d["source_to_isocenter"]),
            source_to_detector=float(d["source_to_detector"]),
            detector_arc=float(d["detector_arc"]),
        )


def fan_geometry(grid: ImageGrid, num_views: int, num_bins: int,
                 angular_range: float = 2 * math.pi) -> FanBeamGeometry:
    '''
    Build a fan-beam geometry around `grid` using the fixed distance rules:
    source at 2.5 FOV diagonals, detector at twice that, and an equiangular
    detector whose outer bins cover the FOV with a 2% margin.

    Args:
        grid (ImageGrid): Reconstruction grid.
        num_views (int): Number of projection views.
        num_bins (int): Number of detector bins (odd).
        angular_range (float): Scan range in radians.
    Returns:
        FanBeamGeometry: The validated geometry.
    '''
    if num_bins < 3 or num_bins % 2 == 0:
        raise GeometryError(f"num_bins must be odd and >= 3, got {num_bins}")
    sid = C.SOURCE_DISTANCE_FACTOR * grid.diagonal
    sdd = C.DETECTOR_DISTANCE_FACTOR * sid
    half_fan = math.asin(C.FAN_MARGIN * grid.diagonal / 2.0 / sid)
    arc = 2.0 * half_fan / (num_bins - 1)
    return FanBeamGeometry(grid, num_views, num_bins, angular_range, sid, sdd, arc)


def toy_geometry(n: int) -> Tuple[ImageGrid, FanBeamGeometry]:
    '''
    Desk-scale geometry: n x n grid over a 416 mm field of view, with
    views and bins scaled from 640 x 641.

    Args:
        n (int): Image side in pixels (>= 8).
    Returns:
        Tuple[ImageGrid, FanBeamGeometry]
    '''
    if n < 8:
        raise GeometryError(f"Image size must be >= 8, got {n}")
    grid = ImageGrid(n, n, C.FIELD_OF_VIEW_MM / n)
    views = -(-C.FULL_NUM_VIEWS * n // C.FULL_IMAGE_SIZE)
    if views % 2:
        views += 1
    bins = views + 1
    return grid, fan_geometry(grid, views, bins)


def full_scale_geometry() -> Tuple[ImageGrid, FanBeamGeometry]:
    """416 x 416 images, 640 views, 641 bins, full scan."""
    return toy_geometry(C.FULL_IMAGE_SIZE)


def ray_endpoints(geom: FanBeamGeometry, view: int, bin: int) -> Tuple[np.ndarray, np.ndarray]:
    '''
    Source position and detector-element position (mm) of one ray.

    Args:
        geom (FanBeamGeometry): Acquisition geometry.
        view (int): View index.
        bin (int): Detector bin index.
    Returns:
        Tuple[np.ndarray, np.ndarray]: (source, detector) points, each shaped (2,).
    '''
    if not 0 <= view < geom.num_views:
        raise GeometryError(f"view {view} out of range [0, {geom.num_views})")
    if not 0 <= bin < geom.num_bins:
        raise GeometryError(f"bin {bin} out of range [0, {geom.num_bins})")
    src, dirs = geom.ray_directions(view)
    return src, src + geom.source_to_detector * dirs[bin]
