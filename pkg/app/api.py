"""
Read-only results service over the evaluation registry.
"""
import math
from typing import Any, Dict, List

from fastapi import Depends, FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from sqlmodel import Session, select

from app.analysis.aggregation import CaseMetricRow, summarize
from app.config import settings
from app.database import create_db_and_tables, engine
from app.models import CaseMetric, EvaluationRun

app = FastAPI(title="MAR results")

app.mount("/panels", StaticFiles(directory=str(settings.out_dir), check_dir=False), name="panels")


@app.on_event("startup")
def on_startup():
    create_db_and_tables()


def get_session():
    with Session(engine) as session:
        yield session


def _finite_or_none(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def _get_run(run_id: int, session: Session) -> EvaluationRun:
    run = session.get(EvaluationRun, run_id)
    if not run:
        raise HTTPException(status_code=404, detail="Run not found")
    return run


@app.get("/runs", response_model=List[EvaluationRun])
def list_runs(session: Session = Depends(get_session)):
    return session.exec(select(EvaluationRun).order_by(EvaluationRun.id.desc())).all()


@app.get("/runs/{run_id}", response_model=EvaluationRun)
def read_run(run_id: int, session: Session = Depends(get_session)):
    return _get_run(run_id, session)


@app.get("/runs/{run_id}/metrics", response_model=List[CaseMetric])
def read_metrics(run_id: int, session: Session = Depends(get_session)):
    _get_run(run_id, session)
    statement = select(CaseMetric).where(CaseMetric.run_id == run_id).order_by(CaseMetric.rmse_hu)
    return session.exec(statement).all()


@app.get("/runs/{run_id}/summary")
def read_summary(run_id: int, session: Session = Depends(get_session)) -> Dict[str, Any]:
    '''
    Mean and standard deviation per method for one run.
    '''
    _get_run(run_id, session)
    metrics = session.exec(select(CaseMetric).where(CaseMetric.run_id == run_id)).all()
    if not metrics:
        raise HTTPException(status_code=400, detail="Run has no metrics")
    rows = [CaseMetricRow(case_id=m.case_id, method=m.method, rmse_hu=m.rmse_hu, ssim=m.ssim,
                          roi_rmse_hu=m.roi_rmse_hu if m.roi_rmse_hu is not None else float("nan"),
                          roi_ssim=m.roi_ssim if m.roi_ssim is not None else float("nan"))
            for m in metrics]
    return {method: {k: _finite_or_none(v) for k, v in s.model_dump().items()}
            for method, s in summarize(rows).items()}
