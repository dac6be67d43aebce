# Trained-pipeline orderings at desk scale; every test here needs full training runs.
import pytest

from app.config import GeometryConfig, NetworkConfig, RunConfig, TrainConfig
from app.pipeline.evaluation import ablate, evaluate_dataset, robustness_sweep
from app.pipeline.framework import MARModel
from app.pipeline.training import load_prepared, train
from app.services.dataset import generate_dataset

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def desk_config():
    return RunConfig(
        geometry=GeometryConfig(n=32),
        network=NetworkConfig(channels=(8, 16, 32, 64), init_seed=0),
        train=TrainConfig(image_size=32, epochs=60, batch_size=8, lr=1e-3, n_train=120, n_test=40,
                          validation_cases=0, checkpoint_every=60),
    )


@pytest.fixture(scope="module")
def desk_dataset(tmp_path_factory, desk_config):
    tc = desk_config.train
    return generate_dataset(tmp_path_factory.mktemp("desk-data"), tc.n_train, tc.n_test, seed=2024,
                            config=desk_config)


@pytest.fixture(scope="module")
def full_checkpoint(tmp_path_factory, desk_config, desk_dataset):
    return train(desk_config, desk_dataset, tmp_path_factory.mktemp("desk-full")).checkpoint


def test_learned_method_beats_classical_baselines(tmp_path, desk_config, desk_dataset, full_checkpoint):
    model = MARModel.load(full_checkpoint, desk_dataset.geometry)
    out = evaluate_dataset(model, desk_dataset, tmp_path, desk_config, panels=0, record=False)
    summary = out.report.summary
    assert summary["ours"].n >= 40
    ours, nmar, li = (summary[m].rmse_mean for m in ("ours", "NMAR", "LI"))
    assert ours < nmar <= li
    assert ours <= 0.8 * li


def test_ablation_ordering(tmp_path, desk_config, desk_dataset, full_checkpoint):
    out = ablate(desk_config, desk_dataset, tmp_path, checkpoints={"full": full_checkpoint})
    rmse = {method: s.rmse_mean for method, s in out.report.summary.items()}
    assert rmse["full"] <= rmse["no_residual"] <= rmse["no_prior"]
    assert rmse["no_prior"] == max(rmse[v] for v in ("full", "no_residual", "no_prior"))


def test_trained_model_sweep(tmp_path, desk_dataset, full_checkpoint):
    model = MARModel.load(full_checkpoint, desk_dataset.geometry)
    case = load_prepared(desk_dataset, desk_dataset.test_ids[:1])[0]
    out = robustness_sweep(model, case, [-1, 0, 1, 2], tmp_path, record=False)
    rmse = {r.method: r.rmse_hu for r in out.report.rows}
    base = rmse["radius=+0"]
    for radius in ("radius=+1", "radius=+2"):
        if radius in rmse:
            assert rmse[radius] <= 2.0 * base
    if "radius=-1" in rmse:
        assert rmse["radius=-1"] > base
