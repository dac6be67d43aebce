import numpy as np
import pytest
from scipy import ndimage

from app.constants import MU_WATER
from app.errors import ShapeError, UnitError
from app.physics.phantoms import ellipse_phantom
from app.tomo.geometry import toy_geometry
from app.tomo.images import Image, Sinogram
from app.tomo.projector import (
    FanBeamProjector,
    back_project,
    equiangular_ramp_kernel,
    fbp,
    forward_project,
    get_projector,
    ramp_filter,
    vjp_fbp,
)


def test_adjoint_identity_random_pairs(rng):
    _, geom = toy_geometry(64)
    proj = get_projector(geom)
    for _ in range(100):
        x = rng.normal(size=geom.grid.shape)
        s = rng.normal(size=geom.shape)
        lhs = np.vdot(proj.project(x), s)
        rhs = np.vdot(x, proj.backproject(s))
        assert abs(lhs - rhs) <= 1e-5 * max(abs(lhs), abs(rhs))


def test_fbp_adjoint_identity(geom32, rng):
    _, geom = geom32
    proj = get_projector(geom)
    for _ in range(10):
        x = rng.normal(size=geom.grid.shape)
        s = rng.normal(size=geom.shape)
        lhs = np.vdot(proj.fbp(s), x)
        rhs = np.vdot(s, proj.fbp_adjoint(x))
        assert abs(lhs - rhs) <= 1e-8 * max(abs(lhs), abs(rhs))


def test_disk_chord_length():
    grid, geom = toy_geometry(64)
    rows, cols = np.mgrid[:64, :64]
    radius = 20
    disk = ((cols - 31.5) ** 2 + (rows - 31.5) ** 2 <= radius ** 2).astype(float) * MU_WATER
    s = forward_project(Image(disk, grid, "mu"), geom)
    expected = 2 * radius * grid.pixel_size * MU_WATER
    assert s.values[0, geom.center_bin] == pytest.approx(expected, rel=0.02)


def test_zero_image_projects_to_zero(geom16):
    grid, geom = geom16
    s = forward_project(Image(np.zeros(grid.shape), grid, "mu"), geom)
    assert np.all(s.values == 0)


def test_forward_project_requires_mu(geom16):
    grid, geom = geom16
    with pytest.raises(UnitError):
        forward_project(Image(np.zeros(grid.shape), grid, "HU"), geom)


def test_shape_mismatch(geom16, geom32):
    _, geom = geom16
    with pytest.raises(ShapeError):
        get_projector(geom).project(np.zeros((8, 8)))
    with pytest.raises(ShapeError):
        get_projector(geom).fbp(np.zeros(geom32[1].shape))


def test_fbp_round_trip_smooth_phantom():
    grid, geom = toy_geometry(128)
    x = ellipse_phantom(grid).to_mu().values
    x = ndimage.gaussian_filter(x, 2.0)
    recon = fbp(forward_project(Image(x, grid, "mu"), geom), geom).values
    rel = np.linalg.norm(recon - x) / np.linalg.norm(x)
    assert rel <= 0.02


def test_back_project_is_transpose(geom16, rng):
    grid, geom = geom16
    s = Sinogram(rng.normal(size=geom.shape), geom)
    bp = back_project(s, geom).values
    assert bp.shape == grid.shape
    np.testing.assert_allclose(bp, get_projector(geom).backproject(s.values))


def test_vjp_fbp_matches_adjoint(geom16, rng):
    grid, geom = geom16
    g = rng.normal(size=grid.shape)
    out = vjp_fbp(Image(g, grid, "mu"), geom)
    np.testing.assert_allclose(out.values, get_projector(geom).fbp_adjoint(g))


def test_ramp_kernel_values():
    arc = 0.01
    g = equiangular_ramp_kernel(6, arc)
    assert g[0] == pytest.approx(1 / (8 * arc ** 2))
    assert g[2] == 0 and g[4] == 0
    assert g[1] == pytest.approx(-1 / (2 * np.pi ** 2 * np.sin(arc) ** 2))
    assert np.all(g[1::2] < 0)


def test_ramp_filter_removes_constant_rows_in_circular_mode(geom16):
    _, geom = geom16
    proj = FanBeamProjector(geom, padding=False)
    filtered = proj.filter(np.ones(geom.shape))
    assert np.max(np.abs(filtered)) <= 1e-9


def test_ramp_filter_padded_dc_is_small_against_impulse(geom32):
    _, geom = geom32
    proj = FanBeamProjector(geom)
    impulse = np.zeros(geom.shape)
    impulse[:, geom.center_bin] = 1.0
    peak = np.max(np.abs(proj.filter(impulse)))
    constant = proj.filter(np.ones(geom.shape))[:, geom.center_bin]
    assert np.max(np.abs(constant)) <= 0.01 * peak


def test_unwindowed_impulse_response_matches_kernel(geom32):
    _, geom = geom32
    proj = FanBeamProjector(geom, window=None)
    impulse = np.zeros(geom.shape)
    c = geom.center_bin
    impulse[:, c] = 1.0
    response = proj.filter(impulse)[0]
    g = equiangular_ramp_kernel(4, geom.detector_arc) * geom.detector_arc
    peak = abs(g[0])
    for lag in range(4):
        assert response[c + lag] == pytest.approx(g[lag], abs=1e-2 * peak)
        assert response[c - lag] == pytest.approx(g[lag], abs=1e-2 * peak)


def test_public_ramp_filter_circular_mode_kills_constant_rows(geom32):
    _, geom = geom32
    s = Sinogram(np.full(geom.shape, 2.5), geom)
    filtered = ramp_filter(s, padding=False).values
    assert np.max(np.abs(filtered)) <= 1e-3 * 2.5


def test_public_ramp_filter_is_linear(geom16, rng):
    _, geom = geom16
    s = rng.normal(size=geom.shape)
    for padding in (True, False):
        once = ramp_filter(Sinogram(2.0 * s, geom), padding=padding).values
        twice = 2.0 * ramp_filter(Sinogram(s, geom), padding=padding).values
        np.testing.assert_array_equal(once, twice)


def test_padded_ramp_filter_is_what_fbp_uses(geom16, rng):
    _, geom = geom16
    s = rng.normal(size=geom.shape)
    np.testing.assert_array_equal(ramp_filter(Sinogram(s, geom)).values, get_projector(geom).filter(s))


def test_fbp_is_shift_equivariant():
    grid, geom = toy_geometry(64)
    rows, cols = np.mgrid[:64, :64]
    disk = ((cols - 28.5) ** 2 + (rows - 30.5) ** 2 <= 8 ** 2).astype(float) * MU_WATER
    disk = ndimage.gaussian_filter(disk, 2.0)
    shifted = np.roll(disk, (3, 4), axis=(0, 1))

    def recon(x):
        return fbp(forward_project(Image(x, grid, "mu"), geom), geom).values

    expected = np.roll(recon(disk), (3, 4), axis=(0, 1))
    got = recon(shifted)
    assert np.linalg.norm(got - expected) <= 0.01 * np.linalg.norm(expected)
