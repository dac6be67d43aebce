import logging
import math
from pathlib import Path
from typing import Any, Dict, Optional

from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine

from app.analysis.aggregation import EvalReport
from app.config import settings
from app.models import CaseMetric, EvaluationRun

logger = logging.getLogger(__name__)

engine = create_engine(settings.database_url, echo=False)


def create_db_and_tables(bind: Optional[Engine] = None):
    SQLModel.metadata.create_all(bind or engine)


def _finite(value: float) -> Optional[float]:
    return value if math.isfinite(value) else None


def record_report(report: EvalReport, kind: str, config: Dict[str, Any], out_dir: Path,
                  bind: Optional[Engine] = None) -> int:
    '''
    Store an evaluation report and its per-case rows.

    Args:
        report (EvalReport): Report to store.
        kind (str): eval, ablate, sweep or generalize.
        config (Dict[str, Any]): JSON-serializable run configuration.
        out_dir (Path): Directory holding the CSV and panels.
        bind (Optional[Engine]): Engine override (tests).
    Returns:
        int: The new run id.
    '''
    bind = bind or engine
    create_db_and_tables(bind)
    with Session(bind) as session:
        run = EvaluationRun(name=report.name, kind=kind, config=config, out_dir=str(out_dir))
        session.add(run)
        session.commit()
        session.refresh(run)
        for row in report.rows:
            session.add(CaseMetric(run_id=run.id, case_id=row.case_id, method=row.method,
                                   rmse_hu=row.rmse_hu, ssim=row.ssim,
                                   roi_rmse_hu=_finite(row.roi_rmse_hu), roi_ssim=_finite(row.roi_ssim)))
        session.commit()
        logger.info("Recorded %s run %d (%d rows)", kind, run.id, len(report.rows))
        return run.id
