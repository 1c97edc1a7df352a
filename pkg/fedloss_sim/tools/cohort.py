import logging
from typing import Annotated, Any, Dict, Optional

from pydantic import Field

from fedloss_sim.server import mcp
from fedloss_sim.simulation import (
    CohortConfig,
    SimulationError,
    cohort_statistics,
    generate_cohort,
    parse_config,
)

logger = logging.getLogger(__name__)


@mcp.tool(
    description="""
Generate a synthetic cohort and report its class balance, sample-count skew and monthly arrivals.
"""
)
async def get_cohort_statistics(
    config_path: Annotated[
        Optional[str],
        Field(description="Experiment config whose cohort section to use; defaults are used when omitted."),
    ] = None,
    seed: Annotated[int, Field(description="Cohort seed.", ge=0)] = 0,
) -> Dict[str, Any]:
    """Summarise a generated cohort.

    Args:
        config_path (str, optional): Experiment config path. Defaults to None.
        seed (int, optional): Cohort seed. Defaults to 0.

    Returns:
        Dict[str, Any]: Client and sample counts per class, single-sample fraction and
        clients per month, or an error response.
    """
    try:
        cohort_cfg = parse_config(config_path).cohort if config_path else CohortConfig()
        cohort_cfg = cohort_cfg.model_copy(update={"seed": seed})
        cohort = generate_cohort(cohort_cfg)
        return cohort_statistics(cohort, cohort_cfg.n_months)
    except SimulationError as e:
        logger.error(f"Cohort statistics failed: {str(e)}")
        return {"error": type(e).__name__, "details": str(e)}
