import logging
from typing import Annotated, Any, Dict, List

from pydantic import Field

from fedloss_sim.server import mcp
from fedloss_sim.simulation import ScoredSample, SimulationError, evaluate_scored

logger = logging.getLogger(__name__)


@mcp.tool(
    description="""
Compute AUC, sensitivity, specificity and sensitivity at a target specificity for binary scores, with bootstrap CIs.
"""
)
async def evaluate_scores(
    p_pos: Annotated[List[float], Field(description="Positive-class probability per sample.")],
    labels: Annotated[List[int], Field(description="Binary label per sample (1 = positive).")],
    tau: Annotated[float, Field(description="Margin for the rule p_pos > p_neg + tau.")] = 0.0,
    target_sp: Annotated[
        float, Field(description="Specificity the threshold search must reach.", gt=0.0, lt=1.0)
    ] = 0.8,
    n_resamples: Annotated[
        int, Field(description="Bootstrap resamples (0 disables CIs).", ge=0, le=10000)
    ] = 1000,
    seed: Annotated[int, Field(description="Bootstrap seed.")] = 0,
) -> Dict[str, Any]:
    """Evaluate binary diagnostic scores.

    Args:
        p_pos (List[float]): Positive-class probabilities; p_neg is taken as 1 - p_pos.
        labels (List[int]): Binary labels.
        tau (float, optional): Decision margin. Defaults to 0.0.
        target_sp (float, optional): Target specificity. Defaults to 0.8.
        n_resamples (int, optional): Bootstrap resamples. Defaults to 1000.
        seed (int, optional): Bootstrap seed. Defaults to 0.

    Returns:
        Dict[str, Any]: The metrics report, or an error response.
    """
    if len(p_pos) != len(labels):
        logger.error("p_pos and labels must have the same length")
        return {
            "error": "Invalid parameters",
            "details": "p_pos and labels must have the same length",
        }

    try:
        scored = [ScoredSample(p_pos=p, p_neg=1.0 - p, label=y) for p, y in zip(p_pos, labels)]
        report = evaluate_scored(
            scored, tau=tau, target_sp=target_sp, n_resamples=n_resamples, seed=seed
        )
    except (SimulationError, ValueError) as e:
        logger.error(f"Evaluate scores failed: {str(e)}")
        return {"error": type(e).__name__, "details": str(e)}
    return report.to_dict()
