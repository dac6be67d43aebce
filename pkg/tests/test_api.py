import pytest
from fastapi.testclient import TestClient
from sqlmodel import Session, create_engine
from sqlmodel.pool import StaticPool

from app.analysis.aggregation import CaseMetricRow, build_report
from app.api import app, get_session
from app.database import create_db_and_tables, record_report


@pytest.fixture
def engine():
    engine = create_engine("sqlite://", connect_args={"check_same_thread": False}, poolclass=StaticPool)
    create_db_and_tables(engine)
    return engine


@pytest.fixture
def client(engine):
    def override():
        with Session(engine) as session:
            yield session

    app.dependency_overrides[get_session] = override
    yield TestClient(app)
    app.dependency_overrides.clear()


@pytest.fixture
def run_id(engine, tmp_path):
    rows = [
        CaseMetricRow(case_id="a", method="LI", rmse_hu=30.0, ssim=0.8, roi_rmse_hu=50.0, roi_ssim=0.6),
        CaseMetricRow(case_id="b", method="LI", rmse_hu=10.0, ssim=0.9, roi_rmse_hu=float("nan"),
                      roi_ssim=float("nan")),
        CaseMetricRow(case_id="a", method="ours", rmse_hu=20.0, ssim=0.85, roi_rmse_hu=40.0, roi_ssim=0.7),
    ]
    return record_report(build_report("eval", rows), "eval", {"seed": 1}, tmp_path, bind=engine)


def test_list_and_read_runs(client, run_id):
    runs = client.get("/runs").json()
    assert [r["id"] for r in runs] == [run_id]
    run = client.get(f"/runs/{run_id}").json()
    assert run["name"] == "eval" and run["kind"] == "eval"
    assert run["config"] == {"seed": 1}


def test_metrics_sorted_by_rmse(client, run_id):
    metrics = client.get(f"/runs/{run_id}/metrics").json()
    assert [m["rmse_hu"] for m in metrics] == [10.0, 20.0, 30.0]
    assert metrics[0]["roi_rmse_hu"] is None


def test_summary_per_method(client, run_id):
    summary = client.get(f"/runs/{run_id}/summary").json()
    assert set(summary) == {"LI", "ours"}
    assert summary["LI"]["rmse_mean"] == pytest.approx(20.0)
    assert summary["LI"]["roi_rmse_mean"] == pytest.approx(50.0)
    assert summary["ours"]["n"] == 1


def test_missing_run(client):
    assert client.get("/runs/999").status_code == 404
    assert client.get("/runs/999/summary").status_code == 404


def test_run_without_metrics(client, engine, tmp_path):
    empty = record_report(build_report("empty", []), "eval", {}, tmp_path, bind=engine)
    assert client.get(f"/runs/{empty}/summary").status_code == 400
