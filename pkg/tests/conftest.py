import os
import tempfile

# Keep registry writes and outputs out of the working tree
_TMP = tempfile.mkdtemp(prefix="mar-tests-")
os.environ.setdefault("MAR_DATABASE_URL", f"sqlite:///{_TMP}/registry.db")
os.environ.setdefault("MAR_OUT_DIR", _TMP)

import numpy as np
import pytest

from app.config import GeometryConfig, NetworkConfig, RunConfig, SimulationConfig, TrainConfig
from app.physics.materials import MetalMask
from app.physics.phantoms import random_phantom
from app.physics.simulator import case_rng, simulate_case
from app.tomo.geometry import toy_geometry


def disk_mask(grid, cx, cy, radius):
    '''Boolean disk in pixel coordinates (column, row).'''
    rows, cols = np.mgrid[:grid.height, :grid.width]
    return MetalMask((cols - cx) ** 2 + (rows - cy) ** 2 <= radius ** 2)


@pytest.fixture(scope="session")
def geom16():
    return toy_geometry(16)


@pytest.fixture(scope="session")
def geom32():
    return toy_geometry(32)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_network():
    return NetworkConfig(channels=(2, 3, 3, 4), init_seed=7)


@pytest.fixture(scope="session")
def tiny_run_config(tiny_network):
    return RunConfig(
        geometry=GeometryConfig(n=16),
        simulation=SimulationConfig(total_photons=1e6),
        network=tiny_network,
        train=TrainConfig(image_size=16, epochs=2, batch_size=2, n_train=3, n_test=2,
                          validation_cases=1, checkpoint_every=1),
    )


@pytest.fixture(scope="session")
def metal_case32(geom32):
    '''Body phantom with a titanium disk right of centre, 32 x 32.'''
    grid, geom = geom32
    phantom = random_phantom(grid, case_rng(3, 0), "body")
    mask = disk_mask(grid, 19.0, 15.5, 1.6)
    return simulate_case(phantom, mask, geom, seed=3, config=SimulationConfig(), index=0)


@pytest.fixture(scope="session")
def metal_case16(geom16):
    grid, geom = geom16
    phantom = random_phantom(grid, case_rng(5, 0), "body")
    mask = disk_mask(grid, 9.0, 7.5, 1.0)
    return simulate_case(phantom, mask, geom, seed=5, config=SimulationConfig(), index=0)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory, tiny_run_config):
    '''Three training and two test cases at 16 x 16.'''
    from app.services.dataset import generate_dataset

    root = tmp_path_factory.mktemp("dataset")
    tc = tiny_run_config.train
    return generate_dataset(root, tc.n_train, tc.n_test, seed=21, config=tiny_run_config, workers=1)


@pytest.fixture(scope="session")
def prepared16(metal_case16):
    from app.pipeline.framework import prepare_case

    c = metal_case16
    return prepare_case("case16", c.s_ma, c.trace, c.mask, c.s_gt, c.x_gt.values, c.x_ma.values)
