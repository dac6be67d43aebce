import numpy as np
import pytest

from app.errors import DataError
from app.nn.checkpoint import MAGIC, load_checkpoint, save_checkpoint


@pytest.fixture
def params(rng):
    return {
        "a.weight": rng.normal(size=(2, 3, 3, 3)),
        "a.bias": rng.normal(size=2),
        "scale": np.array(1.5),
    }


def test_save_and_load(tmp_path, params):
    path = save_checkpoint(tmp_path / "sub" / "model.ckpt", {"variant": "full", "step": 7}, params)
    header, loaded = load_checkpoint(path)
    assert header["variant"] == "full" and header["step"] == 7
    assert list(loaded) == list(params)
    for name, values in params.items():
        np.testing.assert_array_equal(loaded[name], values.astype(np.float32).astype(np.float64))
    assert not path.with_suffix(".ckpt.tmp").exists()


def test_file_starts_with_magic(tmp_path, params):
    path = save_checkpoint(tmp_path / "m.ckpt", {}, params)
    assert path.read_bytes()[:8] == MAGIC


def test_rejects_damaged_files(tmp_path, params):
    with pytest.raises(DataError):
        load_checkpoint(tmp_path / "missing.ckpt")
    path = save_checkpoint(tmp_path / "m.ckpt", {}, params)
    data = path.read_bytes()
    (tmp_path / "bad.ckpt").write_bytes(b"NOTACKPT" + data[8:])
    (tmp_path / "short.ckpt").write_bytes(data[:-4])
    (tmp_path / "long.ckpt").write_bytes(data + b"\0\0\0\0")
    (tmp_path / "stub.ckpt").write_bytes(MAGIC + b"\1")
    for name in ("bad", "short", "long", "stub"):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / f"{name}.ckpt")
