import asyncio
import logging
from pathlib import Path
from typing import Annotated, Any, Dict, List, Optional

from pydantic import Field

from fedloss_sim.server import FEDLOSS_OUTPUT_DIR, mcp
from fedloss_sim.simulation import (
    SimulationError,
    apply_overrides,
    experiment,
    parse_config,
    rounds_to_target,
)

logger = logging.getLogger(__name__)


@mcp.tool(
    description="""
Run a federated strategy comparison from a TOML or JSON config file and write traces, reports and a summary.
"""
)
async def run_experiment(
    config_path: Annotated[str, Field(description="Path to the experiment config (.toml or .json).")],
    output_dir: Annotated[
        Optional[str], Field(description="Output directory; overrides the config and FEDLOSS_OUTPUT_DIR.")
    ] = None,
    seeds: Annotated[
        Optional[List[int]], Field(description="Seeds to run instead of the configured ones.")
    ] = None,
    strategy: Annotated[
        Optional[str], Field(description="Restrict to one strategy: fedavg, fedprox or fedloss.")
    ] = None,
) -> Dict[str, Any]:
    """Run an experiment in a worker thread.

    Args:
        config_path (str): Path to the experiment config.
        output_dir (str, optional): Output directory override. Defaults to None.
        seeds (List[int], optional): Seed override. Defaults to None.
        strategy (str, optional): Strategy filter. Defaults to None.

    Returns:
        Dict[str, Any]: Exit status, output directory and the summary text, or an error response.
    """
    try:
        cfg = parse_config(config_path)
        cfg = apply_overrides(
            cfg, output_dir=output_dir or FEDLOSS_OUTPUT_DIR, seeds=seeds, strategy=strategy
        )
        status = await asyncio.to_thread(experiment.run_experiment, cfg)
    except SimulationError as e:
        logger.error(f"Run experiment failed: {str(e)}")
        return {"error": type(e).__name__, "details": str(e)}

    out = Path(cfg.output_dir)
    summary_path = out / "summary.txt"
    return {
        "status": status,
        "output_dir": str(out),
        "summary": summary_path.read_text(encoding="utf-8") if summary_path.exists() else "",
        "traces": sorted(str(p) for p in (out / "traces").glob("*.csv")),
    }


@mcp.tool(
    description="""
Find the first evaluated round at which a trace CSV reaches a metric target.
"""
)
async def get_rounds_to_target(
    trace_path: Annotated[str, Field(description="Trace CSV written by run_experiment.")],
    metric: Annotated[
        str, Field(description="Metric column: auc, se, sp or se_at_80sp.")
    ] = "auc",
    target: Annotated[float, Field(description="Target value.", ge=0.0, le=1.0)] = 0.8,
) -> Dict[str, Any]:
    """Look up the convergence round of one trace.

    Returns:
        Dict[str, Any]: The round index (None when never reached), or an error response.
    """
    try:
        found = rounds_to_target(trace_path, metric, target)
    except SimulationError as e:
        logger.error(f"Rounds to target failed: {str(e)}")
        return {"error": type(e).__name__, "details": str(e)}
    except OSError as e:
        logger.error(f"Cannot read trace {trace_path}: {str(e)}")
        return {"error": "OSError", "details": str(e)}
    return {"trace": trace_path, "metric": metric, "target": target, "round": found}
