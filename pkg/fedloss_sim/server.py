import os
import logging
from mcp.server.fastmcp import FastMCP


def resolve_log_level(value: str | None) -> str:
    """Level name from FEDLOSS_LOG_LEVEL; unknown names fall back to INFO."""
    level = (value or "INFO").upper()
    if level not in logging.getLevelNamesMapping():
        logging.getLogger(__name__).warning(
            f"Ignoring FEDLOSS_LOG_LEVEL={value!r}: not a logging level, using INFO"
        )
        return "INFO"
    return level


# Configure logging
logging.basicConfig(
    level=resolve_log_level(os.environ.get("FEDLOSS_LOG_LEVEL")),
    format="%(asctime)s - %(levelname)s - %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)

# Reduce mcp logging verbosity
logging.getLogger("mcp").setLevel(logging.WARNING)

mcp = FastMCP(name="FedLoss Simulator MCP Server", host="0.0.0.0")

FEDLOSS_OUTPUT_DIR = os.environ.get("FEDLOSS_OUTPUT_DIR", None)
FEDLOSS_WORKERS = os.environ.get("FEDLOSS_WORKERS", None)


def default_workers() -> int | None:
    """Client-execution threads from FEDLOSS_WORKERS, or None when unset."""
    if not FEDLOSS_WORKERS:
        return None
    try:
        return max(1, int(FEDLOSS_WORKERS))
    except ValueError:
        logging.getLogger(__name__).warning(
            f"Ignoring FEDLOSS_WORKERS={FEDLOSS_WORKERS!r}: not an integer"
        )
        return None
