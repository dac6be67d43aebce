"""
Evaluation of MAR methods on simulated cases: per-case RMSE/SSIM, aggregate
tables, CSV, PNG panels, result registry rows, ablations, the mask-error sweep
and the cross-anatomy generalization check.
"""
import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from tqdm import tqdm

from app.analysis.aggregation import CaseMetricRow, EvalReport, build_report, format_summary
from app.analysis.metrics import rmse_hu, roi_metrics, ssim
from app.config import MARConfig, RunConfig, Variant
from app.database import record_report
from app.errors import DataError, EmptyMaskError
from app.mar.completion import nmar_complete, tissue_prior
from app.mar.segmentation import MetalTrace, adjust_mask, metal_trace
from app.physics.materials import MetalMask
from app.physics.phantoms import default_family_split
from app.pipeline.framework import MARModel, PreparedCase, prepare_case
from app.pipeline.inference import infer_sinogram
from app.pipeline.training import load_prepared, train
from app.services.dataset import DatasetIndex, make_case
from app.services.panels import comparison_panel
from app.services.storage import write_json
from app.tomo.images import Image, Sinogram, hu_to_mu
from app.tomo.projector import fbp, get_projector

logger = logging.getLogger(__name__)

CSV_FIELDS = ("case_id", "method", "rmse_hu", "ssim", "roi_rmse_hu", "roi_ssim")

# HU image for one case
Method = Callable[[PreparedCase], np.ndarray]


def _inputs(case: PreparedCase, model: MARModel):
    geom = model.geom
    return (Sinogram(case.s_ma, geom), MetalMask(case.mask), Image(case.x_ma, geom.grid, "HU"))


def uncorrected_method(case: PreparedCase) -> np.ndarray:
    return case.x_ma


def li_method(case: PreparedCase) -> np.ndarray:
    return case.x_li


def nmar_method(geom, config: Optional[MARConfig] = None) -> Method:
    def run(case: PreparedCase) -> np.ndarray:
        s = nmar_complete(Sinogram(case.s_ma, geom), MetalTrace(case.trace), Image(case.x_ma, geom.grid, "HU"),
                          geom, config, MetalMask(case.mask))
        return fbp(s, geom).to_hu().values
    return run


def model_method(model: MARModel) -> Method:
    def run(case: PreparedCase) -> np.ndarray:
        s_ma, mask, x_ma = _inputs(case, model)
        return infer_sinogram(model, s_ma, mask=mask, x_ma=x_ma).x_out.values
    return run


def tissue_processing_method(model: MARModel, config: Optional[MARConfig] = None) -> Method:
    '''
    Classify the prior image into tissue classes, forward project the result
    and use it inside the metal trace of S_LI.
    '''
    def run(case: PreparedCase) -> np.ndarray:
        s_ma, mask, x_ma = _inputs(case, model)
        result = infer_sinogram(model, s_ma, mask=mask, x_ma=x_ma)
        if result.x_prior is None:
            return result.x_out.values
        prior = tissue_prior(result.x_prior, config, mask)
        projected = get_projector(model.geom).project(hu_to_mu(prior.values))
        filled = np.where(result.trace.mask, projected, result.s_li.values)
        return fbp(result.s_li.with_values(filled), model.geom).to_hu().values
    return run


def default_methods(model: Optional[MARModel], geom, config: Optional[MARConfig] = None) -> Dict[str, Method]:
    methods: Dict[str, Method] = {
        "uncorrected": uncorrected_method,
        "LI": li_method,
        "NMAR": nmar_method(geom, config),
    }
    if model is not None:
        methods["ours"] = model_method(model)
    return methods


def score(case: PreparedCase, method: str, image: np.ndarray) -> CaseMetricRow:
    if case.x_gt is None:
        raise DataError(f"Case {case.case_id} has no ground truth")
    roi_rmse, roi_ssim = roi_metrics(image, case.x_gt, case.mask)
    return CaseMetricRow(
        case_id=case.case_id,
        method=method,
        rmse_hu=rmse_hu(image, case.x_gt, case.mask),
        ssim=ssim(image, case.x_gt, case.mask),
        roi_rmse_hu=roi_rmse,
        roi_ssim=roi_ssim,
    )


def write_csv(report: EvalReport, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in report.rows:
            writer.writerow(row.model_dump())
    return path


@dataclass
class EvaluationOutput:
    report: EvalReport
    out_dir: Path
    panels: List[Path]
    run_id: Optional[int] = None


def evaluate(methods: Dict[str, Method], cases: Sequence[PreparedCase], name: str, out_dir: Path,
             panels: int = 4, kind: str = "eval", config: Optional[dict] = None,
             record: bool = True) -> EvaluationOutput:
    '''
    Run every method on every case and score it against ground truth.

    Args:
        methods (Dict[str, Method]): Method name -> HU image producer.
        cases (Sequence[PreparedCase]): Cases with ground truth.
        name (str): Run name.
        out_dir (Path): Receives metrics.csv, summary.json and panels/.
        panels (int): Number of cases rendered as PNG panels.
        kind (str): Registry kind (eval, ablate, sweep, generalize).
        config (Optional[dict]): Configuration stored with the run.
        record (bool): Store the run in the results database.
    Returns:
        EvaluationOutput
    '''
    if not cases:
        raise DataError("No cases to evaluate")
    out_dir = Path(out_dir)
    rows: List[CaseMetricRow] = []
    panel_paths: List[Path] = []
    for i, case in enumerate(tqdm(cases, desc=name)):
        images = {method: fn(case) for method, fn in methods.items()}
        rows.extend(score(case, method, image) for method, image in images.items())
        if i < panels:
            panel_paths.append(comparison_panel(case.x_gt, images, out_dir / "panels" / f"{case.case_id}.png"))
    report = build_report(name, rows)
    write_csv(report, out_dir / "metrics.csv")
    write_json(out_dir / "summary.json", report.model_dump(mode="json"))
    logger.info("%s\n%s", name, format_summary(report))
    run_id = None
    if record:
        run_id = record_report(report, kind, config or {}, out_dir)
    return EvaluationOutput(report, out_dir, panel_paths, run_id)


def evaluate_dataset(model: Optional[MARModel], index: DatasetIndex, out_dir: Path,
                     config: Optional[RunConfig] = None, extra: Optional[Dict[str, Method]] = None,
                     **kwargs) -> EvaluationOutput:
    """Classical baselines, the model and any extra methods on the test split."""
    config = config or RunConfig()
    methods = default_methods(model, index.geometry, config.mar)
    methods.update(extra or {})
    cases = load_prepared(index, index.test_ids)
    return evaluate(methods, cases, "eval", out_dir, config={"run": config.model_dump(mode="json"),
                                                            "dataset_seed": index.doc.get("seed")}, **kwargs)


ABLATION_VARIANTS: Sequence[Variant] = ("full", "no_residual", "no_prior", "metal_only")


def ablate(config: RunConfig, index: DatasetIndex, out_dir: Path,
           checkpoints: Optional[Dict[str, Path]] = None) -> EvaluationOutput:
    '''
    Train (or load) each variant and evaluate them side by side, together with
    the inference-only tissue-processing variant of the full model.

    Args:
        config (RunConfig): Base configuration; train.variant is overridden.
        index (DatasetIndex): Dataset.
        out_dir (Path): Per-variant training directories and the evaluation output.
        checkpoints (Optional[Dict[str, Path]]): Existing checkpoints by variant.
    Returns:
        EvaluationOutput
    '''
    out_dir = Path(out_dir)
    checkpoints = dict(checkpoints or {})
    methods: Dict[str, Method] = {}
    for variant in ABLATION_VARIANTS:
        if variant not in checkpoints:
            variant_config = config.model_copy(update={"train": config.train.model_copy(update={"variant": variant})})
            checkpoints[variant] = train(variant_config, index, out_dir / "train" / variant).checkpoint
        model = MARModel.load(checkpoints[variant], index.geometry)
        methods[variant] = model_method(model)
        if variant == "full":
            methods["full+tissue"] = tissue_processing_method(model, config.mar)
    cases = load_prepared(index, index.test_ids)
    return evaluate(methods, cases, "ablate", out_dir / "eval", kind="ablate",
                    config={"run": config.model_dump(mode="json"),
                            "checkpoints": {k: str(v) for k, v in checkpoints.items()}})


def robustness_sweep(model: MARModel, case: PreparedCase, radii: Sequence[int], out_dir: Path,
                     record: bool = True) -> EvaluationOutput:
    '''
    Re-run inference with the ground-truth metal mask dilated (positive radius)
    or eroded (negative radius). Radii whose erosion empties the mask are skipped.
    '''
    geom = model.geom
    s_ma = Sinogram(case.s_ma, geom)
    x_ma = Image(case.x_ma, geom.grid, "HU")
    base = MetalMask(case.mask)
    methods: Dict[str, Method] = {}
    for radius in radii:
        adjusted = adjust_mask(base, radius)
        if adjusted.empty:
            logger.warning("Erosion by %d empties the metal mask of %s; skipped", -radius, case.case_id)
            continue
        if metal_trace(adjusted, geom).mask[:, [0, -1]].any():
            logger.warning("Dilation by %d reaches the detector edge for %s; skipped", radius, case.case_id)
            continue

        def run(_case, mask=adjusted):
            return infer_sinogram(model, s_ma, mask=mask, x_ma=x_ma).x_out.values

        methods[f"radius={radius:+d}"] = run
    if not methods:
        raise EmptyMaskError("Every radius of the sweep was skipped")
    return evaluate(methods, [case], f"sweep-{case.case_id}", out_dir, panels=1, kind="sweep",
                    config={"radii": list(radii), "case_id": case.case_id}, record=record)


def generalize(model: MARModel, config: RunConfig, n_cases: int, seed: int, out_dir: Path,
               record: bool = True) -> EvaluationOutput:
    '''
    Evaluate on freshly simulated cases from the held-out head anatomy family.
    '''
    _, test_families = default_family_split()
    cases = []
    for i in range(n_cases):
        pair, _ = make_case(i, seed, test_families[i % len(test_families)], model.geom, config, "head")
        cases.append(prepare_case(f"head_{i:04d}", pair.s_ma, pair.trace, pair.mask, pair.s_gt,
                                  pair.x_gt.values, pair.x_ma.values))
    methods = default_methods(model, model.geom, config.mar)
    return evaluate(methods, cases, "generalize", out_dir, kind="generalize",
                    config={"seed": seed, "n_cases": n_cases}, record=record)
