"""
Procedural phantoms and metal masks standing in for clinical images and the
hand-segmented implant collection.

Ellipse parameters are in normalized coordinates: the field of view spans
[-1, 1] on both axes, y pointing up.
"""
from typing import Iterable, List, Literal, Sequence, Tuple

import numpy as np
from scipy import ndimage
from skimage.draw import polygon as draw_polygon

from app.physics.materials import MetalMask
from app.tomo.geometry import ImageGrid
from app.tomo.images import Image

PhantomFamily = Literal["body", "head"]

# (x0, y0, a, b, theta in degrees, HU added inside)
SHEPP_LOGAN_HU = [
    (0.0, 0.0, 0.69, 0.92, 0.0, 1000.0),
    (0.0, -0.0184, 0.6624, 0.874, 0.0, -200.0),
    (0.22, 0.0, 0.11, 0.31, -18.0, -80.0),
    (-0.22, 0.0, 0.16, 0.41, 18.0, -80.0),
    (0.0, 0.35, 0.21, 0.25, 0.0, 60.0),
    (0.0, 0.1, 0.046, 0.046, 0.0, 40.0),
    (0.0, -0.1, 0.046, 0.046, 0.0, 40.0),
    (-0.08, -0.605, 0.046, 0.023, 0.0, 40.0),
    (0.0, -0.605, 0.023, 0.023, 0.0, 40.0),
    (0.06, -0.605, 0.023, 0.046, 0.0, 40.0),
]

METAL_SHAPES = ("disk", "polygon", "rod")
NUM_MASK_FAMILIES = 18


def _normalized_coords(grid: ImageGrid) -> Tuple[np.ndarray, np.ndarray]:
    x, y = grid.pixel_centers()
    half_w = grid.width * grid.pixel_size / 2.0
    half_h = grid.height * grid.pixel_size / 2.0
    return (x - grid.center[0]) / half_w, (y - grid.center[1]) / half_h


def _ellipse(u: np.ndarray, v: np.ndarray, x0, y0, a, b, theta_deg) -> np.ndarray:
    t = np.radians(theta_deg)
    du, dv = u - x0, v - y0
    r1 = (du * np.cos(t) + dv * np.sin(t)) / a
    r2 = (-du * np.sin(t) + dv * np.cos(t)) / b
    return r1 * r1 + r2 * r2 <= 1.0


def draw_ellipses(grid: ImageGrid, ellipses: Iterable[Sequence[float]], background: float = -1000.0) -> np.ndarray:
    u, v = _normalized_coords(grid)
    out = np.full(grid.shape, background, dtype=np.float64)
    for x0, y0, a, b, theta, value in ellipses:
        out[_ellipse(u, v, x0, y0, a, b, theta)] += value
    return out


def ellipse_phantom(grid: ImageGrid, smooth: float = 0.0) -> Image:
    '''
    Shepp-Logan-like phantom in HU (air background, water-like body).

    Args:
        grid (ImageGrid): Target grid.
        smooth (float): Gaussian blur sigma in pixels; 0 keeps sharp edges.
    Returns:
        Image: HU image.
    '''
    values = draw_ellipses(grid, SHEPP_LOGAN_HU)
    if smooth > 0:
        values = ndimage.gaussian_filter(values, smooth, mode="nearest")
    return Image(values, grid, "HU")


def _body_ellipses(rng: np.random.Generator) -> List[Tuple[float, ...]]:
    a = rng.uniform(0.62, 0.82)
    b = rng.uniform(0.48, 0.68)
    ellipses = [
        (0.0, 0.0, a, b, rng.uniform(-10, 10), 1000.0 + rng.uniform(-100.0, -60.0)),
        # soft tissue core over the fat layer
        (0.0, 0.0, 0.85 * a, 0.85 * b, 0.0, rng.uniform(90.0, 130.0)),
    ]
    for _ in range(rng.integers(2, 5)):
        ellipses.append((rng.uniform(-0.4, 0.4) * a, rng.uniform(-0.4, 0.4) * b,
                         rng.uniform(0.06, 0.2), rng.uniform(0.06, 0.2), rng.uniform(0, 180),
                         rng.uniform(-60.0, 60.0)))
    # spine and ribs
    ellipses.append((0.0, -0.6 * b, rng.uniform(0.07, 0.1), rng.uniform(0.07, 0.1), 0.0, rng.uniform(500.0, 900.0)))
    for side in (-1.0, 1.0):
        ellipses.append((side * 0.7 * a, rng.uniform(-0.3, 0.3) * b, 0.035, rng.uniform(0.05, 0.09),
                         rng.uniform(-30, 30), rng.uniform(400.0, 800.0)))
    return ellipses


def _head_ellipses(rng: np.random.Generator) -> List[Tuple[float, ...]]:
    a = rng.uniform(0.55, 0.7)
    b = rng.uniform(0.65, 0.8)
    thickness = rng.uniform(0.05, 0.08)
    skull = rng.uniform(1100.0, 1400.0)
    brain = rng.uniform(25.0, 45.0)
    ellipses = [
        (0.0, 0.0, a, b, 0.0, 1000.0 + skull),
        (0.0, 0.0, a - thickness, b - thickness, 0.0, brain - skull),
    ]
    for _ in range(rng.integers(1, 4)):
        ellipses.append((rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(0.04, 0.12),
                         rng.uniform(0.04, 0.12), rng.uniform(0, 180), rng.uniform(-20.0, 30.0)))
    return ellipses


def random_phantom(grid: ImageGrid, rng: np.random.Generator, family: PhantomFamily = "body") -> Image:
    '''
    Random metal-free phantom in HU.

    Args:
        grid (ImageGrid): Target grid.
        rng (np.random.Generator): Random stream owned by the caller.
        family (PhantomFamily): "body" (abdomen/thorax-like) or "head".
    Returns:
        Image: HU image with values in [-1000, 1500].
    '''
    if family == "body":
        ellipses = _body_ellipses(rng)
    elif family == "head":
        ellipses = _head_ellipses(rng)
    else:
        raise ValueError(f"Unknown phantom family {family!r}")
    values = draw_ellipses(grid, ellipses)
    values = ndimage.gaussian_filter(values, 0.5, mode="nearest")
    return Image(np.clip(values, -1000.0, 1500.0), grid, "HU")


def mask_family(family_id: int) -> dict:
    '''
    Shape parameters shared by all masks of a family.

    Args:
        family_id (int): Family index in [0, NUM_MASK_FAMILIES).
    Returns:
        dict: shape, count and radius range (fraction of the grid side).
    '''
    if not 0 <= family_id < NUM_MASK_FAMILIES:
        raise ValueError(f"Mask family {family_id} out of range")
    size = "small" if family_id < 9 else "large"
    return {
        "family": family_id,
        "shape": METAL_SHAPES[family_id % 3],
        "count": 1 + (family_id // 3) % 3,
        "radius": (0.016, 0.03) if size == "small" else (0.03, 0.05),
    }


def default_family_split() -> Tuple[List[int], List[int]]:
    """Training and held-out mask families (disjoint)."""
    test = [f for f in range(NUM_MASK_FAMILIES) if f % 5 == 4]
    train = [f for f in range(NUM_MASK_FAMILIES) if f not in test]
    return train, test


def _shape_mask(grid: ImageGrid, shape: str, cx: float, cy: float, radius: float,
                rng: np.random.Generator) -> np.ndarray:
    """cx, cy, radius in pixel units (column, row)."""
    rows, cols = np.mgrid[:grid.height, :grid.width]
    if shape == "disk":
        return (cols - cx) ** 2 + (rows - cy) ** 2 <= radius ** 2
    if shape == "polygon":
        k = int(rng.integers(4, 8))
        angles = np.sort(rng.uniform(0, 2 * np.pi, k))
        radii = radius * rng.uniform(0.7, 1.3, k)
        pr = cy + radii * np.sin(angles)
        pc = cx + radii * np.cos(angles)
    else:
        theta = rng.uniform(0, np.pi)
        half_len, half_wid = 2.5 * radius, 0.6 * radius
        dx, dy = np.cos(theta), np.sin(theta)
        corners = [(s * half_len * dx - t * half_wid * dy, s * half_len * dy + t * half_wid * dx)
                   for s, t in ((-1, -1), (1, -1), (1, 1), (-1, 1))]
        pc = np.array([cx + c[0] for c in corners])
        pr = np.array([cy + c[1] for c in corners])
    out = np.zeros(grid.shape, dtype=bool)
    rr, cc = draw_polygon(pr, pc, shape=grid.shape)
    out[rr, cc] = True
    return out


def random_metal_mask(grid: ImageGrid, rng: np.random.Generator, family_id: int) -> Tuple[MetalMask, dict]:
    '''
    Draw a metal mask from a family. Implants are placed inside the central
    half of the field of view so they always sit within the body.

    Args:
        grid (ImageGrid): Target grid.
        rng (np.random.Generator): Random stream owned by the caller.
        family_id (int): Mask family.
    Returns:
        Tuple[MetalMask, dict]: The mask and its parameters (for the case manifest).
    '''
    params = mask_family(family_id)
    n = min(grid.height, grid.width)
    mask = np.zeros(grid.shape, dtype=bool)
    implants = []
    for _ in range(params["count"]):
        radius = max(1.0, rng.uniform(*params["radius"]) * n)
        ang = rng.uniform(0, 2 * np.pi)
        dist = rng.uniform(0.0, 0.22) * n
        cx = (grid.width - 1) / 2.0 + dist * np.cos(ang)
        cy = (grid.height - 1) / 2.0 + dist * np.sin(ang)
        mask |= _shape_mask(grid, params["shape"], cx, cy, radius, rng)
        implants.append({"center": [float(cx), float(cy)], "radius": float(radius)})
    if not mask.any():
        c = implants[0]["center"]
        mask[int(round(c[1])), int(round(c[0]))] = True
    return MetalMask(mask), {**params, "radius": list(params["radius"]), "implants": implants}
