import logging

from fastapi import APIRouter, HTTPException, status
from fastapi.responses import Response
from starlette.concurrency import run_in_threadpool
from starlette.requests import Request

from app.core.exceptions import SimulationError
from app.core.rate_limit import get_rate_limit_config, limiter
from app.harness.config import PRESETS, load_config
from app.harness.schemas import SimulationRequest
from app.harness.service import simulate

logger = logging.getLogger(__name__)

router = APIRouter()
rate_limit_config = get_rate_limit_config()


@router.get("/presets")
async def list_presets() -> dict[str, dict]:
    """
    List the named presets.

    Returns:
        Preset contents by name
    """
    return PRESETS


@router.post("/", status_code=status.HTTP_200_OK)
@limiter.limit(rate_limit_config["simulations"])
async def run_simulation(request: Request, body: SimulationRequest) -> Response:
    """
    Run every requested method on one trial.

    Args:
        body: Preset, seed, SNR, methods and section overrides

    Returns:
        Simulation report (scene summary, detections, metrics, diagnostics)

    Raises:
        HTTPException: 400 if the configuration is invalid or the trial cannot be run
    """
    methods = [method.value for method in body.methods] if body.methods else None
    try:
        config = load_config(
            preset=body.preset, overrides=body.overrides, seed=body.seed, methods=methods
        )
        report = await run_in_threadpool(simulate, config, body.snr_db, 0, body.preset)
    except (SimulationError, ValueError) as e:
        logger.info(f"Rejected simulation request: {e}")
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(e)) from e

    # Undefined metrics serialize as null
    return Response(content=report.model_dump_json(), media_type="application/json")
