import math

import pytest
from pydantic import ValidationError

from app.analysis.aggregation import CaseMetricRow, build_report, format_summary, summarize


def row(case, method, rmse, s, roi_rmse=1.0, roi_ssim=0.5):
    return CaseMetricRow(case_id=case, method=method, rmse_hu=rmse, ssim=s, roi_rmse_hu=roi_rmse, roi_ssim=roi_ssim)


def test_summary_mean_and_population_std():
    rows = [row("a", "LI", 10.0, 0.8), row("b", "LI", 20.0, 0.9), row("a", "ours", 5.0, 0.95)]
    summary = summarize(rows)
    assert list(summary) == ["LI", "ours"]
    li = summary["LI"]
    assert li.n == 2
    assert li.rmse_mean == pytest.approx(15.0)
    assert li.rmse_std == pytest.approx(5.0)
    assert li.ssim_std == pytest.approx(0.05)
    assert summary["ours"].rmse_std == 0.0


def test_roi_means_skip_nan():
    rows = [row("a", "LI", 1.0, 0.9, roi_rmse=float("nan")), row("b", "LI", 1.0, 0.9, roi_rmse=4.0)]
    assert summarize(rows)["LI"].roi_rmse_mean == pytest.approx(4.0)
    only_nan = [row("a", "LI", 1.0, 0.9, roi_rmse=float("nan"))]
    assert math.isnan(summarize(only_nan)["LI"].roi_rmse_mean)


def test_row_validation():
    with pytest.raises(ValidationError):
        row("a", "LI", -1.0, 0.5)
    with pytest.raises(ValidationError):
        row("a", "LI", 1.0, 1.5)


def test_report_and_table():
    report = build_report("eval", [row("a", "LI", 12.5, 0.8), row("a", "NMAR", 9.5, 0.85)])
    assert report.methods() == ["LI", "NMAR"]
    text = format_summary(report)
    assert text.splitlines()[0].startswith("method")
    assert "12.50" in text and "NMAR" in text
