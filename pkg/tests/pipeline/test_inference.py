import numpy as np
import pytest

from app.errors import DataError
from app.physics.materials import MetalMask
from app.pipeline.framework import MARModel
from app.pipeline.inference import infer_image, infer_sinogram, li_image, outside_trace_unchanged
from app.tomo.geometry import toy_geometry
from app.tomo.images import Image, Sinogram
from app.tomo.projector import fbp

from conftest import disk_mask


@pytest.fixture
def model16(geom16, tiny_network, metal_case16):
    return MARModel(geom16[1], tiny_network, "full", sino_scale=float(metal_case16.s_gt.values.max()))


def test_untrained_model_output_is_li_image(model16, metal_case16):
    case = metal_case16
    result = infer_sinogram(model16, case.s_ma, mask=case.mask, x_ma=case.x_ma)
    assert result.corrected
    assert np.array_equal(result.x_out.values, li_image(case.s_ma, case.trace).values)
    assert np.array_equal(result.s_corr.values, result.s_li.values)
    assert result.x_prior is not None and result.s_prior is not None


def test_changes_stay_inside_the_trace(model16, metal_case16):
    head = {p.name: p for p in model16.parameters()}["sino.head.bias"]
    head.values = np.array([0.05])
    try:
        result = infer_sinogram(model16, metal_case16.s_ma, mask=metal_case16.mask)
    finally:
        head.values = np.zeros(1)
    assert outside_trace_unchanged(result)
    inside = result.trace.mask
    assert not np.array_equal(result.s_corr.values[inside], result.s_li.values[inside])


def test_metal_free_input_is_passed_through(model16, metal_case16, caplog):
    s_clean = metal_case16.s_gt
    with caplog.at_level("INFO", logger="app.pipeline.inference"):
        result = infer_sinogram(model16, s_clean)
    assert not result.corrected
    assert result.trace.empty
    assert np.array_equal(result.x_out.values, fbp(s_clean, s_clean.geom).to_hu().values)
    assert "No metal found" in caplog.text


def test_explicit_empty_mask(model16, metal_case16):
    grid = model16.geom.grid
    result = infer_sinogram(model16, metal_case16.s_ma, mask=MetalMask(np.zeros(grid.shape)))
    assert not result.corrected


def test_image_input_is_projected_and_segmented(model16, geom16):
    grid, _ = geom16
    values = np.zeros(grid.shape)
    metal = disk_mask(grid, 8, 7, 1.0)
    values[metal.mask] = 6000.0
    result = infer_image(model16, Image(values, grid, "HU"))
    assert result.corrected
    np.testing.assert_array_equal(result.mask.mask, metal.mask)


def test_geometry_mismatch(model16):
    grid, geom = toy_geometry(32)
    with pytest.raises(DataError):
        infer_image(model16, Image(np.zeros(grid.shape), grid, "HU"))
    with pytest.raises(DataError):
        infer_sinogram(model16, Sinogram(np.zeros(geom.shape), geom))
