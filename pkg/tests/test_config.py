import json

import pytest

from app import constants as C
from app.config import RunConfig, Settings, TrainConfig, load_run_config
from app.errors import ConfigError


def test_defaults_are_consistent():
    config = load_run_config()
    assert config.geometry.n == config.train.image_size
    assert config.simulation.density == C.METAL_DENSITIES["titanium"]
    assert config.train.variant == "full"


def test_full_scale_training_defaults():
    tc = TrainConfig.full_scale(epochs=5)
    assert tc.image_size == C.FULL_IMAGE_SIZE
    assert tc.epochs == 5
    assert tc.lr == pytest.approx(1e-4)


def test_seed_override(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"geometry": {"n": 16}, "train": {"image_size": 16, "seed": 1}}))
    config = load_run_config(path, seed=9)
    assert config.train.seed == 9
    assert config.geometry.n == 16


def test_explicit_density_wins():
    config = RunConfig.model_validate({"simulation": {"metal_material": "gold", "metal_density": 2.0}})
    assert config.simulation.density == 2.0


@pytest.mark.parametrize("payload", [
    {"geometry": {"n": 16}},
    {"mar": {"nmar_air_threshold_hu": 500, "nmar_bone_threshold_hu": 100}},
    {"network": {"channels": [2, 0, 2, 2]}},
    {"simulation": {"metal_material": "lead"}},
])
def test_invalid_configs(tmp_path, payload):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ConfigError):
        load_run_config(path)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "nope.json")


def test_settings_from_env(monkeypatch):
    monkeypatch.setenv("MAR_WORKERS", "3")
    monkeypatch.setenv("MAR_OUT_DIR", "elsewhere")
    settings = Settings.from_env()
    assert settings.workers == 3
    assert str(settings.out_dir) == "elsewhere"
    monkeypatch.setenv("MAR_WORKERS", "many")
    with pytest.raises(ConfigError):
        Settings.from_env()
