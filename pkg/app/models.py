from datetime import datetime
from typing import Any, Dict, Optional

from sqlalchemy import JSON, Column
from sqlmodel import Field, Relationship, SQLModel


class EvaluationRun(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    name: str = Field(index=True)
    kind: str = Field(default="eval", index=True)  # eval, ablate, sweep, generalize
    created_at: datetime = Field(default_factory=datetime.utcnow)
    out_dir: str = ""

    # Full RunConfig and dataset seed, so a run can be reproduced
    config: Dict[str, Any] = Field(default={}, sa_column=Column(JSON))

    metrics: list["CaseMetric"] = Relationship(back_populates="run")


class CaseMetric(SQLModel, table=True):
    id: Optional[int] = Field(default=None, primary_key=True)
    case_id: str = Field(index=True)
    method: str = Field(index=True)
    rmse_hu: float
    ssim: float
    roi_rmse_hu: Optional[float] = None
    roi_ssim: Optional[float] = None

    run_id: int = Field(foreign_key="evaluationrun.id")
    run: EvaluationRun = Relationship(back_populates="metrics")
