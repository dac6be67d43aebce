"""
Fan-beam projection operators.

Forward projection is ray driven: every ray is sampled at a fixed step of half a
pixel and the image is bilinearly interpolated at each sample. The per-view sample
weights are assembled into sparse matrices, so backprojection is the exact
transpose of forward projection. Filtered backprojection is the equiangular
fan-beam algorithm (cosine pre-weight, Hann-apodized Ram-Lak filter, 1/L^2
pixel-driven backprojection), also stored as a sparse linear map so its adjoint
is available for gradients.
"""
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse

from app import constants as C
from app.config import settings
from app.errors import ShapeError, UnitError, GeometryError
from app.tomo.geometry import FanBeamGeometry
from app.tomo.images import Image, Sinogram

logger = logging.getLogger(__name__)


def equiangular_ramp_kernel(num_lags: int, arc: float) -> np.ndarray:
    '''
    Discrete equiangular Ram-Lak kernel g(n * arc) for n = 0..num_lags-1.

    g(0) = 1 / (8 arc^2), g(odd n) = -1 / (2 pi^2 sin^2(n arc)), g(even n) = 0.

    Args:
        num_lags (int): Number of non-negative lags.
        arc (float): Angular bin pitch in radians.
    Returns:
        np.ndarray: Kernel values at non-negative lags.
    '''
    n = np.arange(num_lags)
    g = np.zeros(num_lags)
    g[0] = 1.0 / (8.0 * arc ** 2)
    odd = n % 2 == 1
    g[odd] = -1.0 / (2.0 * math.pi ** 2 * np.sin(n[odd] * arc) ** 2)
    return g


class FanBeamProjector:
    '''
    Linear operators for one FanBeamGeometry. Instances are shared through
    `get_projector`; system matrices are cached when they fit `cache_nnz`.
    '''

    def __init__(self, geom: FanBeamGeometry, workers: int = 1,
                 cache_nnz: Optional[int] = None, window: Optional[str] = "hann",
                 padding: bool = True):
        self.geom = geom
        self.grid = geom.grid
        self.workers = max(1, int(workers))
        self.cache_nnz = settings.matrix_cache_nnz if cache_nnz is None else cache_nnz
        self.window = window
        self.padding = padding
        self._cache: Dict[Tuple[str, float], sparse.csr_matrix] = {}
        self._lock = threading.Lock()
        self.step = C.RAY_STEP_FRACTION * self.grid.pixel_size
        radius = C.FAN_MARGIN * self.grid.diagonal / 2.0 + self.grid.pixel_size
        self._t0 = geom.source_to_isocenter - radius
        self._num_samples = int(math.ceil(2.0 * radius / self.step))
        self._response = self._filter_response()
        self._preweight = geom.source_to_isocenter * np.cos(geom.fan_angles())

    # ------------------------------------------------------------------
    # system matrix blocks
    # ------------------------------------------------------------------
    def _map(self, fn: Callable[[int], object], items) -> List[object]:
        if self.workers == 1:
            return [fn(i) for i in items]
        with ThreadPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(fn, items))

    def _projection_block(self, view: int, offset: float = 0.0) -> sparse.csr_matrix:
        """Rows = bins of `view`, columns = flattened pixels."""
        g, grid = self.geom, self.grid
        H, W, ps = grid.height, grid.width, grid.pixel_size
        src, dirs = g.ray_directions(view, offset)
        t = self._t0 + (np.arange(self._num_samples) + 0.5) * self.step
        px = src[0] + dirs[:, 0, None] * t[None, :] - grid.center[0]
        py = src[1] + dirs[:, 1, None] * t[None, :] - grid.center[1]
        col = px / ps + (W - 1) / 2.0
        row = (H - 1) / 2.0 - py / ps
        c0 = np.floor(col)
        r0 = np.floor(row)
        fc = col - c0
        fr = row - r0
        c0 = c0.astype(np.int64)
        r0 = r0.astype(np.int64)
        ray = np.broadcast_to(np.arange(g.num_bins)[:, None], col.shape)

        rows, cols, data = [], [], []
        for dr, dc, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                          (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
            rr = r0 + dr
            cc = c0 + dc
            ok = (rr >= 0) & (rr < H) & (cc >= 0) & (cc < W) & (w > 0)
            rows.append(ray[ok])
            cols.append(rr[ok] * W + cc[ok])
            data.append(w[ok] * self.step)
        block = sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(g.num_bins, H * W),
        )
        return block.tocsr()

    def _backprojection_block(self, view: int) -> sparse.csr_matrix:
        """Transposed FBP backprojection for one view: rows = bins, columns = pixels."""
        g = self.geom
        x, y = self.grid.pixel_centers()
        beta = view * g.angle_step
        sx, sy = g.source_position(view)
        vx, vy = x.ravel() - sx, y.ravel() - sy
        cx, cy = -math.cos(beta), -math.sin(beta)
        gamma = np.arctan2(cx * vy - cy * vx, cx * vx + cy * vy)
        dist2 = vx * vx + vy * vy
        pos = gamma / g.detector_arc + g.center_bin
        b0 = np.floor(pos).astype(np.int64)
        f = pos - b0
        weight = g.angle_step / dist2
        pix = np.arange(pos.size)

        rows, cols, data = [], [], []
        for db, w in ((0, 1 - f), (1, f)):
            bb = b0 + db
            ok = (bb >= 0) & (bb < g.num_bins) & (w > 0)
            rows.append(bb[ok])
            cols.append(pix[ok])
            data.append(w[ok] * weight[ok])
        block = sparse.coo_matrix(
            (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
            shape=(g.num_bins, pos.size),
        )
        return block.tocsr()

    def _block_builder(self, kind: str, offset: float) -> Callable[[int], sparse.csr_matrix]:
        if kind == "fp":
            return lambda v: self._projection_block(v, offset)
        return self._backprojection_block

    def _estimated_nnz(self, kind: str) -> int:
        g = self.geom
        if kind == "fp":
            # bilinear footprint of a ray crossing the grid diagonally
            per_ray = 4 * int(math.ceil(self.grid.diagonal / self.step))
            return g.num_views * g.num_bins * per_ray
        return 2 * g.num_views * self.grid.height * self.grid.width

    def system_matrix(self, kind: str, offset: float = 0.0) -> Optional[sparse.csr_matrix]:
        '''
        Stacked (views*bins x pixels) matrix for "fp" or "bp", or None when it
        exceeds the cache budget and must be applied view by view.
        '''
        key = (kind, float(offset))
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached
        if self._estimated_nnz(kind) > self.cache_nnz:
            return None
        blocks = self._map(self._block_builder(kind, offset), range(self.geom.num_views))
        matrix = sparse.vstack(blocks, format="csr")
        with self._lock:
            self._cache[key] = matrix
        logger.debug("Cached %s matrix for offset %.3f with %d nonzeros", kind, offset, matrix.nnz)
        return matrix

    def _apply(self, kind: str, values: np.ndarray, offset: float = 0.0) -> np.ndarray:
        """matrix @ image -> sinogram."""
        matrix = self.system_matrix(kind, offset)
        flat = values.ravel()
        if matrix is not None:
            return (matrix @ flat).reshape(self.geom.shape)
        build = self._block_builder(kind, offset)
        rows = self._map(lambda v: build(v) @ flat, range(self.geom.num_views))
        return np.stack(rows)

    def _apply_transpose(self, kind: str, values: np.ndarray, offset: float = 0.0) -> np.ndarray:
        """matrix.T @ sinogram -> image."""
        matrix = self.system_matrix(kind, offset)
        if matrix is not None:
            return (matrix.T @ values.ravel()).reshape(self.grid.shape)
        build = self._block_builder(kind, offset)
        parts = self._map(lambda v: build(v).T @ values[v], range(self.geom.num_views))
        out = np.zeros(self.grid.height * self.grid.width)
        for part in parts:
            out += part
        return out.reshape(self.grid.shape)

    # ------------------------------------------------------------------
    # array-level operators
    # ------------------------------------------------------------------
    def project(self, mu: np.ndarray, offset: float = 0.0) -> np.ndarray:
        self._check_image(mu)
        return self._apply("fp", np.asarray(mu, dtype=np.float64), offset)

    def backproject(self, sino: np.ndarray, offset: float = 0.0) -> np.ndarray:
        self._check_sinogram(sino)
        return self._apply_transpose("fp", np.asarray(sino, dtype=np.float64), offset)

    def _filter_response(self) -> np.ndarray:
        nb = self.geom.num_bins
        if self.padding:
            size = 1 << int(math.ceil(math.log2(2 * nb)))
        else:
            size = nb
        half = size // 2
        g = equiangular_ramp_kernel(half + 1, self.geom.detector_arc)
        kernel = np.zeros(size)
        kernel[:half + 1] = g
        # negative lags wrap to the end of the buffer
        last = size - half - 1
        kernel[half + 1:] = g[1:last + 1][::-1]
        response = np.fft.rfft(kernel).real
        if self.window == "hann":
            k = np.arange(response.size)
            response *= 0.5 * (1.0 + np.cos(2.0 * math.pi * k / size))
        elif self.window is not None:
            raise GeometryError(f"Unknown filter window {self.window!r}")
        response[0] = 0.0
        return response

    @property
    def filter_size(self) -> int:
        return 2 * (self._response.size - 1) if self.padding else self.geom.num_bins

    def filter(self, sino: np.ndarray) -> np.ndarray:
        '''
        Per-view convolution with the apodized equiangular ramp, including the
        detector_arc quadrature factor. The operator is symmetric.
        '''
        sino = np.asarray(sino, dtype=np.float64)
        nb = self.geom.num_bins
        size = self.filter_size
        spectrum = np.fft.rfft(sino, n=size, axis=-1) * self._response
        return np.fft.irfft(spectrum, n=size, axis=-1)[..., :nb] * self.geom.detector_arc

    def fbp(self, sino: np.ndarray) -> np.ndarray:
        self._check_sinogram(sino)
        filtered = self.filter(np.asarray(sino, dtype=np.float64) * self._preweight)
        return self._apply_transpose("bp", filtered)

    def fbp_adjoint(self, image: np.ndarray) -> np.ndarray:
        self._check_image(image)
        smeared = self._apply("bp", np.asarray(image, dtype=np.float64))
        return self.filter(smeared) * self._preweight

    def _check_image(self, values: np.ndarray) -> None:
        if np.shape(values) != self.grid.shape:
            raise ShapeError(f"Image shape {np.shape(values)} does not match grid {self.grid.shape}")

    def _check_sinogram(self, values: np.ndarray) -> None:
        if np.shape(values) != self.geom.shape:
            raise ShapeError(f"Sinogram shape {np.shape(values)} does not match geometry {self.geom.shape}")


@lru_cache(maxsize=8)
def get_projector(geom: FanBeamGeometry) -> FanBeamProjector:
    """Shared projector (and matrix cache) for a geometry."""
    return FanBeamProjector(geom, workers=settings.workers)


def _require_grid(grid, geom: FanBeamGeometry) -> None:
    if grid != geom.grid:
        raise GeometryError("Image grid does not match the geometry's grid")


def forward_project(x: Image, geom: FanBeamGeometry) -> Sinogram:
    '''
    Line integrals of a mu image along every (view, bin) ray.

    Args:
        x (Image): Attenuation image in mm^-1.
        geom (FanBeamGeometry): Acquisition geometry paired with x.grid.
    Returns:
        Sinogram: Views-major line integrals.
    '''
    if x.unit != "mu":
        raise UnitError("forward_project expects a mu image")
    _require_grid(x.grid, geom)
    return Sinogram(get_projector(geom).project(x.values), geom)


def back_project(s: Sinogram, geom: FanBeamGeometry) -> Image:
    """Exact adjoint of forward_project."""
    if s.geom != geom:
        raise ShapeError("Sinogram geometry does not match")
    return Image(get_projector(geom).backproject(s.values), geom.grid, "mu")


@lru_cache(maxsize=8)
def _circular_projector(geom: FanBeamGeometry) -> FanBeamProjector:
    return FanBeamProjector(geom, padding=False)


def ramp_filter(s: Sinogram, padding: bool = True) -> Sinogram:
    '''
    Apodized equiangular ramp filter of every view.

    Args:
        s (Sinogram): Sinogram to filter.
        padding (bool): Zero-pad rows to a power of two >= 2 * num_bins (linear
            convolution, as used by fbp). Without padding the convolution is
            circular and a constant row is mapped to zero.
    Returns:
        Sinogram
    '''
    proj = get_projector(s.geom) if padding else _circular_projector(s.geom)
    return Sinogram(proj.filter(s.values), s.geom)


def fbp(s: Sinogram, geom: FanBeamGeometry) -> Image:
    '''
    Equiangular fan-beam filtered backprojection.

    Args:
        s (Sinogram): Post-log sinogram.
        geom (FanBeamGeometry): Acquisition geometry.
    Returns:
        Image: Reconstruction in mm^-1.
    '''
    if s.geom != geom:
        raise ShapeError("Sinogram geometry does not match")
    return Image(get_projector(geom).fbp(s.values), geom.grid, "mu")


def vjp_forward_project(grad_out: Sinogram) -> Image:
    return back_project(grad_out, grad_out.geom)


def vjp_fbp(grad_out: Image, geom: FanBeamGeometry) -> Sinogram:
    '''
    Vector-Jacobian product of fbp: the adjoint of backprojection, filtering and
    pre-weighting applied in reverse order.
    '''
    _require_grid(grad_out.grid, geom)
    return Sinogram(get_projector(geom).fbp_adjoint(grad_out.values), geom)
