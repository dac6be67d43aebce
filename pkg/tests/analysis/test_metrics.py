import math

import numpy as np
import pytest

from app.analysis.metrics import rmse_hu, roi_box, roi_metrics, ssim, ssim_window
from app.errors import ShapeError


def test_rmse_known_value():
    x = np.zeros((4, 4))
    ref = np.full((4, 4), 10.0)
    assert rmse_hu(x, ref) == pytest.approx(10.0)


def test_rmse_excludes_metal():
    x = np.zeros((4, 4))
    x[0, 0] = 1e6
    metal = np.zeros((4, 4), bool)
    metal[0, 0] = True
    assert rmse_hu(x, np.zeros((4, 4)), metal) == 0.0
    with pytest.raises(ShapeError):
        rmse_hu(x, x, np.ones((4, 4), bool))
    with pytest.raises(ShapeError):
        rmse_hu(x, np.zeros((3, 4)))


def test_ssim_identity_and_degradation(rng):
    ref = rng.uniform(-1000, 1000, (32, 32))
    assert ssim(ref, ref) == pytest.approx(1.0)
    noisy = ref + rng.normal(0, 300, ref.shape)
    assert ssim(noisy, ref) < 1.0


def test_ssim_ignores_metal_pixels(rng):
    ref = rng.uniform(-100, 100, (24, 24))
    x = ref.copy()
    metal = np.zeros(ref.shape, bool)
    metal[10:13, 10:13] = True
    x[metal] = 8000.0
    assert ssim(x, ref, metal) == pytest.approx(1.0)
    assert ssim(x, ref) < 1.0


def test_roi_box_is_clamped_to_image():
    metal = np.zeros((64, 64), bool)
    metal[1, 62] = True
    rows, cols = roi_box(metal)
    assert rows.stop - rows.start == 16 and cols.stop - cols.start == 16
    assert rows.start == 0 and cols.stop == 64
    small = np.zeros((16, 16), bool)
    small[8, 8] = True
    rows, _ = roi_box(small)
    assert rows.stop - rows.start == 11


def test_roi_metrics_all_metal_is_nan():
    metal = np.ones((16, 16), bool)
    r, s = roi_metrics(np.zeros((16, 16)), np.zeros((16, 16)), metal)
    assert math.isnan(r) and math.isnan(s)


def test_ssim_window_fits_small_images():
    assert ssim_window((64, 64)) == 11
    assert ssim_window((11, 11)) == 11
    assert ssim_window((10, 10)) == 9
    assert ssim_window((8, 9)) == 7
    with pytest.raises(ShapeError):
        ssim_window((2, 8))


@pytest.mark.parametrize("n", [8, 9, 10])
def test_ssim_and_roi_on_small_images(rng, n):
    ref = rng.uniform(-1000, 1000, (n, n))
    noisy = ref + rng.normal(0, 200, (n, n))
    assert ssim(ref, ref) == pytest.approx(1.0)
    assert ssim(noisy, ref) < 1.0
    metal = np.zeros((n, n), bool)
    metal[n // 2, n // 2] = True
    roi_rmse, roi_ssim = roi_metrics(noisy, ref, metal)
    assert roi_rmse > 0 and roi_ssim < 1.0
