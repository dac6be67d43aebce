from typing import Dict, List, Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator


class CaseMetricRow(BaseModel):
    case_id: str
    method: str
    rmse_hu: float = Field(ge=0)
    ssim: float
    roi_rmse_hu: float
    roi_ssim: float

    @field_validator("ssim")
    @classmethod
    def _ssim_range(cls, v):
        if not -1.0 <= v <= 1.0 + 1e-12:
            raise ValueError("SSIM outside [-1, 1]")
        return v


class MethodSummary(BaseModel):
    method: str
    n: int
    rmse_mean: float
    rmse_std: float
    ssim_mean: float
    ssim_std: float
    roi_rmse_mean: float
    roi_ssim_mean: float


class EvalReport(BaseModel):
    '''
    Per-case metrics plus mean and standard deviation per method.
    '''
    name: str
    rows: List[CaseMetricRow] = []
    summary: Dict[str, MethodSummary] = {}

    def methods(self) -> List[str]:
        return list(dict.fromkeys(r.method for r in self.rows))


def summarize(rows: Sequence[CaseMetricRow]) -> Dict[str, MethodSummary]:
    '''
    Aggregate rows per method in first-seen order.

    Args:
        rows (Sequence[CaseMetricRow]): Per-case metrics.
    Returns:
        Dict[str, MethodSummary]: Population std (ddof=0); ROI means skip NaN.
    '''
    out: Dict[str, MethodSummary] = {}
    for method in dict.fromkeys(r.method for r in rows):
        sel = [r for r in rows if r.method == method]
        rmse = np.array([r.rmse_hu for r in sel])
        s = np.array([r.ssim for r in sel])
        roi_rmse = np.array([r.roi_rmse_hu for r in sel])
        roi_ssim = np.array([r.roi_ssim for r in sel])
        out[method] = MethodSummary(
            method=method,
            n=len(sel),
            rmse_mean=float(rmse.mean()),
            rmse_std=float(rmse.std()),
            ssim_mean=float(s.mean()),
            ssim_std=float(s.std()),
            roi_rmse_mean=float(np.nanmean(roi_rmse)) if np.isfinite(roi_rmse).any() else float("nan"),
            roi_ssim_mean=float(np.nanmean(roi_ssim)) if np.isfinite(roi_ssim).any() else float("nan"),
        )
    return out


def build_report(name: str, rows: Sequence[CaseMetricRow]) -> EvalReport:
    return EvalReport(name=name, rows=list(rows), summary=summarize(rows))


def format_summary(report: EvalReport) -> str:
    """Plain-text table: method, mean +/- std RMSE (HU), mean +/- std SSIM."""
    lines = [f"{'method':<24}{'RMSE (HU)':>22}{'SSIM':>20}"]
    for s in report.summary.values():
        lines.append(f"{s.method:<24}{s.rmse_mean:>12.2f} +/- {s.rmse_std:<6.2f}"
                     f"{s.ssim_mean:>10.4f} +/- {s.ssim_std:.4f}")
    return "\n".join(lines)
