import numpy as np
import pytest

from app.errors import DataError
from app.services.storage import (
    CASE_ARRAYS,
    load_array,
    load_case,
    load_image,
    load_sinogram,
    read_json,
    save_array,
    save_case,
    save_image,
    save_sinogram,
)
from app.tomo.images import Image, Sinogram


def test_raw_file_is_little_endian_float32(tmp_path, rng):
    values = rng.normal(size=(3, 5))
    raw = save_array(tmp_path, "A", values, "image", "HU")
    assert raw.stat().st_size == 4 * values.size
    np.testing.assert_array_equal(np.fromfile(raw, dtype="<f4").reshape(3, 5), values.astype(np.float32))
    meta = read_json(tmp_path / "A.json")
    assert meta["shape"] == [3, 5] and meta["dtype"] == "float32-le" and meta["unit"] == "HU"


def test_image_and_sinogram_keep_metadata(tmp_path, geom16, rng):
    grid, geom = geom16
    save_image(tmp_path, "X", Image(rng.normal(size=grid.shape), grid, "HU"))
    save_sinogram(tmp_path, "S", Sinogram(rng.normal(size=geom.shape), geom))
    x = load_image(tmp_path, "X")
    s = load_sinogram(tmp_path, "S")
    assert x.grid == grid and x.unit == "HU"
    assert s.geom == geom
    with pytest.raises(DataError):
        load_sinogram(tmp_path, "X")


def test_size_mismatch_and_missing_files(tmp_path, rng):
    save_array(tmp_path, "A", rng.normal(size=(4, 4)), "image", "HU")
    (tmp_path / "A.raw").write_bytes(b"\0" * 12)
    with pytest.raises(DataError):
        load_array(tmp_path, "A")
    with pytest.raises(DataError):
        load_array(tmp_path, "missing")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(DataError):
        read_json(tmp_path / "bad.json")


def test_case_round_trip(tmp_path, metal_case16):
    save_case(tmp_path / "c", metal_case16, {"seed": 5, "case_id": "c"})
    for name in CASE_ARRAYS:
        assert (tmp_path / "c" / f"{name}.raw").exists()
        assert (tmp_path / "c" / f"{name}.json").exists()
    loaded = load_case(tmp_path / "c")
    np.testing.assert_array_equal(loaded.mask.mask, metal_case16.mask.mask)
    np.testing.assert_array_equal(loaded.trace.mask, metal_case16.trace.mask)
    np.testing.assert_allclose(loaded.s_ma.values, metal_case16.s_ma.values, rtol=1e-6)
    assert loaded.seed == 5 and loaded.meta["case_id"] == "c"
