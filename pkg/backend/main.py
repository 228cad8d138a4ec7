#backend/main.py
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
import uvicorn
from src.simulation import SCHEMA_VERSION, Simulation
from src.selftest import run_selftest
from src.custom_exception import CustomException, InvalidInputError
from src.logger import get_logger
from models.models import RunConfig, ProfileRequest, SweepRequest, ReportResponse, SelftestResponse

logger = get_logger("backend")

app = FastAPI(title="Xcel-RAM Simulation API", version="1.0.0")

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


def _http_error(e: CustomException, what: str):
    status = 400 if isinstance(e, InvalidInputError) else 500
    return HTTPException(status_code=status, detail=f"{what} failed: {str(e)}")


@app.get("/")
async def root():
    return {"message": "Xcel-RAM simulation API is running"}

@app.get("/health")
async def health_check():
    return {"status": "healthy"}

@app.post("/run", response_model=ReportResponse)
def run_simulation(config: RunConfig):
    """
    Evaluate a dataset under the requested engine

    Args:
        config: RunConfig with network, weights and data paths

    Returns:
        ReportResponse: schema-1 report
    """
    try:
        report = Simulation(config).run()
        return ReportResponse(status="success", report=report)
    except CustomException as e:
        raise _http_error(e, "Run")
    except Exception as e:
        logger.exception("unexpected error in run route")
        raise HTTPException(status_code=500, detail=f"Unexpected error: {str(e)}")

@app.post("/profile", response_model=ReportResponse)
def profile_network(request: ProfileRequest):
    """
    Analytic per-layer costs of one inference
    """
    try:
        config = RunConfig(engine=request.engine, geometry=request.geometry, costs=request.costs,
                           network=request.network, baseline=request.baseline)
    except ValueError as e:
        raise HTTPException(status_code=400, detail=f"Invalid profile request: {str(e)}")
    try:
        report = Simulation(config).profile()
        return ReportResponse(status="success", report=report)
    except CustomException as e:
        raise _http_error(e, "Profile")

@app.post("/sweep", response_model=ReportResponse)
def sweep(request: SweepRequest):
    """
    Re-run the evaluation once per value of sigma or sections

    Args:
        request: SweepRequest with the base RunConfig, parameter and values

    Returns:
        ReportResponse: {"schema", "mode": "sweep", "rows"}
    """
    try:
        rows = Simulation(request.config).sweep(request.parameter, request.values)
        return ReportResponse(status="success", report={"schema": SCHEMA_VERSION, "mode": "sweep", "rows": rows})
    except CustomException as e:
        raise _http_error(e, "Sweep")

@app.post("/selftest", response_model=SelftestResponse)
def selftest(pairs: int = 500, seed: int = 0):
    """Run the embedded oracle-equivalence and ADC round-trip suites"""
    result = run_selftest(pairs, seed)
    return SelftestResponse(passed=result.passed, checks=result.checks, failures=result.failures)

if __name__ == "__main__":
    uvicorn.run(app, host="0.0.0.0", port=8000)
