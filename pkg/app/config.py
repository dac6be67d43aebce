import os
import json
import logging
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from app import constants as C
from app.errors import ConfigError

load_dotenv()


class Settings(BaseModel):
    '''
    Process-level settings read from the environment (and a `.env` file if present).
    '''
    out_dir: Path = Path("runs")
    database_url: str = "sqlite:///mar_results.db"
    workers: int = Field(default=1, ge=1)
    log_level: str = "INFO"
    matrix_cache_nnz: int = Field(default=30_000_000, ge=0)

    @classmethod
    def from_env(cls) -> "Settings":
        try:
            return cls(
                out_dir=Path(os.getenv("MAR_OUT_DIR", "runs")),
                database_url=os.getenv("MAR_DATABASE_URL", "sqlite:///mar_results.db"),
                workers=int(os.getenv("MAR_WORKERS", "1")),
                log_level=os.getenv("MAR_LOG_LEVEL", "INFO"),
                matrix_cache_nnz=int(os.getenv("MAR_MATRIX_CACHE_NNZ", "30000000")),
            )
        except (ValueError, ValidationError) as e:
            raise ConfigError(f"Invalid environment settings: {e}") from e


settings = Settings.from_env()


def configure_logging(level: Optional[str] = None) -> None:
    '''
    Install a single stream handler on the root logger.

    Args:
        level (Optional[str]): Log level name; defaults to MAR_LOG_LEVEL.
    '''
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


class GeometryConfig(BaseModel):
    n: int = Field(default=64, ge=8)


class SimulationConfig(BaseModel):
    total_photons: float = Field(default=C.AIR_SCAN_PHOTONS, gt=0)
    subrays: int = Field(default=C.PARTIAL_VOLUME_SUBRAYS, ge=1)
    metal_material: Literal["titanium", "iron", "gold"] = "titanium"
    metal_density: Optional[float] = Field(default=None, gt=0)
    water_correction: bool = True

    @property
    def density(self) -> float:
        if self.metal_density is not None:
            return self.metal_density
        return C.METAL_DENSITIES[self.metal_material]


class MARConfig(BaseModel):
    metal_threshold_hu: float = C.METAL_THRESHOLD_HU
    nmar_air_threshold_hu: float = C.NMAR_AIR_THRESHOLD_HU
    nmar_bone_threshold_hu: float = C.NMAR_BONE_THRESHOLD_HU
    epsilon: float = Field(default=C.NMAR_EPSILON, gt=0)

    @model_validator(mode="after")
    def _ordered_thresholds(self):
        if self.nmar_air_threshold_hu >= self.nmar_bone_threshold_hu:
            raise ValueError("nmar_air_threshold_hu must be below nmar_bone_threshold_hu")
        return self


class NetworkConfig(BaseModel):
    channels: Tuple[int, int, int, int] = (32, 64, 128, 256)
    negative_slope: float = Field(default=0.2, ge=0, lt=1)
    init_seed: int = 0

    @field_validator("channels")
    @classmethod
    def _positive(cls, v):
        if any(c <= 0 for c in v):
            raise ValueError("channel widths must be positive")
        return v


Variant = Literal["full", "no_prior", "no_residual", "metal_only"]


class TrainConfig(BaseModel):
    '''
    Joint training configuration. Defaults are the desk-scale ones; see `full_scale`.
    '''
    epochs: int = Field(default=60, ge=1)
    batch_size: int = Field(default=8, ge=1)
    lr: float = Field(default=C.ADAM_LR, gt=0)
    beta1: float = Field(default=C.ADAM_BETAS[0], ge=0, lt=1)
    beta2: float = Field(default=C.ADAM_BETAS[1], ge=0, lt=1)
    beta: float = Field(default=C.SINO_BETA, ge=0)
    alpha1: float = Field(default=C.ALPHA_SINO, ge=0)
    alpha2: float = Field(default=C.ALPHA_FBP, ge=0)
    seed: int = 0
    image_size: int = Field(default=64, ge=8)
    n_train: int = Field(default=200, ge=1)
    n_test: int = Field(default=40, ge=1)
    validation_cases: int = Field(default=8, ge=0)
    checkpoint_every: int = Field(default=10, ge=1)
    variant: Variant = "full"

    @classmethod
    def full_scale(cls, **overrides) -> "TrainConfig":
        values = dict(epochs=400, batch_size=8, lr=1e-4, image_size=C.FULL_IMAGE_SIZE,
                      n_train=1000, n_test=200)
        values.update(overrides)
        return cls(**values)


class RunConfig(BaseModel):
    geometry: GeometryConfig = GeometryConfig()
    simulation: SimulationConfig = SimulationConfig()
    mar: MARConfig = MARConfig()
    network: NetworkConfig = NetworkConfig()
    train: TrainConfig = TrainConfig()
    sweep_radii: List[int] = [-2, -1, 0, 1, 2]

    @model_validator(mode="after")
    def _consistent_size(self):
        if self.geometry.n != self.train.image_size:
            raise ValueError("geometry.n and train.image_size must agree")
        return self


def load_run_config(path: Optional[Path] = None, seed: Optional[int] = None) -> RunConfig:
    '''
    Parse a JSON run configuration, applying CLI overrides.

    Args:
        path (Optional[Path]): JSON document mirroring RunConfig; defaults apply when None.
        seed (Optional[int]): Overrides train.seed when given.
    Returns:
        RunConfig: The validated configuration.
    '''
    try:
        if path is None:
            config = RunConfig()
        else:
            config = RunConfig.model_validate_json(Path(path).read_text())
        if seed is not None:
            data = json.loads(config.model_dump_json())
            data["train"]["seed"] = seed
            config = RunConfig.model_validate(data)
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e
    except ValidationError as e:
        raise ConfigError(f"Invalid config: {e}") from e
    return config
