import json

import numpy as np
import pytest

from app.config import GeometryConfig, RunConfig
from app.errors import DataError
from app.pipeline.evaluation import evaluate_dataset
from app.pipeline.framework import MARModel
from app.pipeline.training import evaluate_losses, load_prepared, sinogram_scale, train


@pytest.fixture(scope="module")
def trained(tmp_path_factory, tiny_run_config, tiny_dataset):
    out = tmp_path_factory.mktemp("train")
    return out, train(tiny_run_config, tiny_dataset, out)


def test_training_writes_checkpoints_and_log(trained, tiny_run_config):
    out, result = trained
    epochs = tiny_run_config.train.epochs
    assert result.checkpoint == out / "model.ckpt"
    assert result.checkpoint.exists()
    for epoch in range(1, epochs + 1):
        assert (out / f"model_epoch{epoch:04d}.ckpt").exists()
    log = json.loads((out / "train_log.json").read_text())
    assert [h["epoch"] for h in log["history"]] == list(range(epochs + 1))
    assert log["config"]["train"]["epochs"] == epochs
    for record in result.history:
        assert np.isfinite(record["total"])
        assert {"prior", "sino", "fbp"} <= set(record)


def test_reloaded_checkpoint_reproduces_validation_loss(trained, tiny_run_config, tiny_dataset):
    _, result = trained
    model = MARModel.load(result.checkpoint, tiny_dataset.geometry)
    val_ids = tiny_dataset.train_ids[-tiny_run_config.train.validation_cases:]
    val = evaluate_losses(model, load_prepared(tiny_dataset, val_ids), tiny_run_config)
    assert val["total"] == pytest.approx(result.history[-1]["val_total"], rel=1e-12)
    assert model.checkpoint_header["epoch"] == tiny_run_config.train.epochs


def test_training_is_reproducible(tmp_path, trained, tiny_run_config, tiny_dataset):
    _, first = trained
    second = train(tiny_run_config, tiny_dataset, tmp_path)
    assert second.history == first.history
    assert second.checkpoint.read_bytes() == first.checkpoint.read_bytes()


def test_same_checkpoint_gives_identical_reports(tmp_path, trained, tiny_run_config, tiny_dataset):
    _, result = trained
    reports = []
    for run in ("a", "b"):
        model = MARModel.load(result.checkpoint, tiny_dataset.geometry)
        out = evaluate_dataset(model, tiny_dataset, tmp_path / run, tiny_run_config, panels=0, record=False)
        reports.append(out.report)
    first, second = ([r.model_dump() for r in report.rows] for report in reports)
    assert [(r["case_id"], r["method"]) for r in first] == [(r["case_id"], r["method"]) for r in second]
    for key in ("rmse_hu", "ssim", "roi_rmse_hu", "roi_ssim"):
        np.testing.assert_array_equal([r[key] for r in first], [r[key] for r in second])
    assert (tmp_path / "a" / "metrics.csv").read_bytes() == (tmp_path / "b" / "metrics.csv").read_bytes()


def test_baseline_equals_li_losses(trained, tiny_run_config, tiny_dataset):
    _, result = trained
    cases = load_prepared(tiny_dataset, tiny_dataset.train_ids[:-1])
    model = MARModel(tiny_dataset.geometry, tiny_run_config.network, "full", sinogram_scale(cases))
    baseline = evaluate_losses(model, cases, tiny_run_config)
    assert baseline["total"] == pytest.approx(result.history[0]["total"])


@pytest.mark.parametrize("variant", ["no_prior", "no_residual", "metal_only"])
def test_other_variants_train(tmp_path, tiny_run_config, tiny_dataset, variant):
    config = tiny_run_config.model_copy(update={
        "train": tiny_run_config.train.model_copy(update={"variant": variant, "epochs": 1})})
    result = train(config, tiny_dataset, tmp_path)
    assert MARModel.load(result.checkpoint).variant == variant
    assert len(result.history) == 2


def test_resolution_mismatch(tmp_path, tiny_run_config, tiny_dataset):
    config = tiny_run_config.model_copy(update={
        "geometry": GeometryConfig(n=24),
        "train": tiny_run_config.train.model_copy(update={"image_size": 24})})
    with pytest.raises(DataError):
        train(config, tiny_dataset, tmp_path)


def test_sinogram_scale(tiny_dataset):
    cases = load_prepared(tiny_dataset, tiny_dataset.train_ids)
    assert sinogram_scale(cases) == pytest.approx(max(c.s_gt.max() for c in cases))
    with pytest.raises(DataError):
        sinogram_scale([])


@pytest.mark.slow
def test_training_lowers_the_loss(tmp_path, tiny_run_config, tiny_dataset):
    config = RunConfig.model_validate({
        **tiny_run_config.model_dump(),
        "train": {**tiny_run_config.train.model_dump(), "epochs": 40, "lr": 1e-3, "validation_cases": 0},
    })
    result = train(config, tiny_dataset, tmp_path)
    assert result.history[-1]["total"] < result.history[0]["total"]
