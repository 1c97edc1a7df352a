import csv
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from .federation import RoundLog
from .metrics import REPORT_COLUMNS, MetricsReport, format_report

logger = logging.getLogger(__name__)

TRACE_COLUMNS = (
    "round",
    "strategy",
    "auc",
    "se",
    "sp",
    "se_at_80sp",
    "mean_weight_pos",
    "mean_weight_neg",
    "mean_preloss_pos",
    "mean_preloss_neg",
)

WEIGHT_COLUMNS = ("round", "month", "mean_weight_pos", "mean_weight_neg", "weight_ratio")


def _cell(value: Optional[float]) -> str:
    if value is None:
        return ""
    if isinstance(value, int):
        return str(value)
    return f"{value:.10g}"


def trace_rows(history: Sequence[RoundLog]) -> List[Dict[str, str]]:
    """One row per evaluation snapshot; ``round`` counts completed rounds."""
    rows = []
    for log in history:
        if log.metrics is None:
            continue
        rows.append(
            {
                "round": str(log.round_index + 1),
                "strategy": log.strategy,
                "auc": _cell(log.metrics.auc),
                "se": _cell(log.metrics.se),
                "sp": _cell(log.metrics.sp),
                "se_at_80sp": _cell(log.metrics.se_at_80sp),
                "mean_weight_pos": _cell(log.mean_weight_pos),
                "mean_weight_neg": _cell(log.mean_weight_neg),
                "mean_preloss_pos": _cell(log.mean_preloss_pos),
                "mean_preloss_neg": _cell(log.mean_preloss_neg),
            }
        )
    return rows


def weight_rows(history: Sequence[RoundLog]) -> List[Dict[str, str]]:
    rows = []
    for log in history:
        pos, neg = log.mean_weight_pos, log.mean_weight_neg
        ratio = pos / neg if pos is not None and neg else None
        rows.append(
            {
                "round": str(log.round_index + 1),
                "month": "" if log.month is None else str(log.month),
                "mean_weight_pos": _cell(pos),
                "mean_weight_neg": _cell(neg),
                "weight_ratio": _cell(ratio),
            }
        )
    return rows


def _write_csv(path: Path, columns: Sequence[str], rows: List[Dict[str, str]]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=list(columns), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def write_trace_csv(path: Path, history: Sequence[RoundLog]) -> Path:
    return _write_csv(path, TRACE_COLUMNS, trace_rows(history))


def write_weights_csv(path: Path, history: Sequence[RoundLog]) -> Path:
    return _write_csv(path, WEIGHT_COLUMNS, weight_rows(history))


def write_report(path: Path, report: MetricsReport, title: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_report(report, title), encoding="utf-8")
    return path


def format_summary(
    rows: Sequence[Tuple[str, int, Dict[str, float], Dict[str, Tuple[float, float]]]],
    title: str,
    ci_label: str,
    notes: Sequence[str] = (),
) -> str:
    """Per-strategy mean across seeds, with the CI row beneath, one block per strategy."""
    width = 17
    lines = [title, ""]
    header = "strategy".ljust(12) + "".ljust(10) + "".join(label.ljust(width) for _, label in REPORT_COLUMNS)
    lines.append(header)
    for label, n_seeds, means, intervals in rows:
        lines.append(
            label.ljust(12)
            + "mean".ljust(10)
            + "".join(f"{means[name]:.3f}".ljust(width) for name, _ in REPORT_COLUMNS)
        )
        lines.append(
            f"(n={n_seeds})".ljust(12)
            + ci_label.ljust(10)
            + "".join(
                f"({intervals[name][0]:.3f}-{intervals[name][1]:.3f})".ljust(width)
                for name, _ in REPORT_COLUMNS
            )
        )
    if notes:
        lines.append("")
        lines.extend(notes)
    return "\n".join(line.rstrip() for line in lines) + "\n"
