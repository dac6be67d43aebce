"""
Joint end-to-end training of PriorNet and SinoNet.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from app.config import RunConfig
from app.errors import DataError, DivergenceError
from app.nn.optim import Adam
from app.nn.tensor import no_grad
from app.physics.simulator import case_rng
from app.pipeline.framework import Batch, MARModel, PreparedCase, prepare_case
from app.services.dataset import DatasetIndex
from app.services.storage import write_json

logger = logging.getLogger(__name__)

SHUFFLE_STREAM = 2


@dataclass
class TrainResult:
    checkpoint: Path
    history: List[Dict[str, float]] = field(default_factory=list)


def load_prepared(index: DatasetIndex, ids: Sequence[str]) -> List[PreparedCase]:
    cases = []
    for cid in ids:
        pair = index.load(cid)
        cases.append(prepare_case(cid, pair.s_ma, pair.trace, pair.mask, pair.s_gt,
                                  pair.x_gt.values, pair.x_ma.values))
    return cases


def sinogram_scale(cases: Sequence[PreparedCase]) -> float:
    '''Largest clean line integral of the training set.'''
    if not cases:
        raise DataError("No training cases")
    scale = max(float(np.max(c.s_gt)) for c in cases)
    return scale if scale > 0 else 1.0


def batches(cases: Sequence[PreparedCase], batch_size: int, order: Optional[np.ndarray] = None):
    order = np.arange(len(cases)) if order is None else order
    for start in range(0, len(order), batch_size):
        yield Batch.from_cases([cases[i] for i in order[start:start + batch_size]])


def evaluate_losses(model: MARModel, cases: Sequence[PreparedCase], config: RunConfig) -> Dict[str, float]:
    '''
    Case-weighted mean of every loss component without recording gradients.
    '''
    sums: Dict[str, float] = {}
    with no_grad():
        for batch in batches(cases, config.train.batch_size):
            parts = model.losses(model.forward(batch), batch, config.train)
            for key, value in parts.items():
                sums[key] = sums.get(key, 0.0) + value.item() * len(batch.case_ids)
    return {key: value / len(cases) for key, value in sums.items()}


def _format(losses: Dict[str, float]) -> str:
    order = ("total", "prior", "sino", "fbp")
    return " ".join(f"L_{k}={losses[k]:.6f}" for k in order if k in losses)


def train(config: RunConfig, index: DatasetIndex, out_dir: Path) -> TrainResult:
    '''
    Train both networks jointly with one Adam optimizer.

    Args:
        config (RunConfig): Run configuration (train.variant selects the ablation).
        index (DatasetIndex): Dataset with training cases.
        out_dir (Path): Receives checkpoints and train_log.json.
    Returns:
        TrainResult: Final checkpoint path and per-epoch loss history.
    Raises:
        DivergenceError: A loss or gradient became non-finite.
    '''
    tc = config.train
    out_dir = Path(out_dir)
    if index.geometry.grid.height != config.geometry.n:
        raise DataError(f"Dataset resolution {index.geometry.grid.height} differs from config n={config.geometry.n}")
    all_cases = load_prepared(index, index.train_ids)
    n_val = min(tc.validation_cases, max(len(all_cases) - 1, 0))
    train_cases = all_cases[:len(all_cases) - n_val]
    val_cases = all_cases[len(all_cases) - n_val:]
    scale = sinogram_scale(train_cases)

    model = MARModel(index.geometry, config.network, tc.variant, scale)
    optimizer = Adam(model.parameters(), tc.lr, (tc.beta1, tc.beta2))
    rng = case_rng(tc.seed, 0, SHUFFLE_STREAM)
    logger.info("Training variant=%s on %d cases (%d validation), sino_scale=%.4f",
                tc.variant, len(train_cases), len(val_cases), scale)

    history: List[Dict[str, float]] = []
    baseline = evaluate_losses(model, train_cases, config)
    logger.info("epoch=0 (LI baseline) %s", _format(baseline))
    history.append({"epoch": 0, **baseline})

    checkpoint = out_dir / "model.ckpt"
    for epoch in range(1, tc.epochs + 1):
        sums: Dict[str, float] = {}
        seen = 0
        for batch in batches(train_cases, tc.batch_size, rng.permutation(len(train_cases))):
            parts = model.losses(model.forward(batch), batch, tc)
            total = parts["total"]
            if not np.isfinite(total.item()):
                raise DivergenceError(f"Non-finite loss at epoch {epoch}")
            optimizer.zero_grad()
            total.backward()
            optimizer.step()
            n = len(batch.case_ids)
            seen += n
            for key, value in parts.items():
                sums[key] = sums.get(key, 0.0) + value.item() * n
        record = {"epoch": epoch, **{k: v / seen for k, v in sums.items()}}
        logger.info("epoch=%d %s", epoch, _format(record))

        if epoch % tc.checkpoint_every == 0 or epoch == tc.epochs:
            model.quantize()
            if val_cases:
                val = evaluate_losses(model, val_cases, config)
                record["val_total"] = val["total"]
                logger.info("epoch=%d validation L_total=%.6f", epoch, val["total"])
            model.save(out_dir / f"model_epoch{epoch:04d}.ckpt", epoch=epoch, seed=tc.seed,
                       step=optimizer.state.step, validation=record.get("val_total"))
            model.save(checkpoint, epoch=epoch, seed=tc.seed, step=optimizer.state.step,
                       validation=record.get("val_total"))
        history.append(record)

    write_json(out_dir / "train_log.json", {"config": config.model_dump(mode="json"), "history": history})
    return TrainResult(checkpoint, history)
