import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateDataError, UndefinedMetricError

logger = logging.getLogger(__name__)

DEFAULT_TARGET_SP = 0.8
MAX_RESAMPLE_RETRIES = 100


@dataclass(frozen=True)
class ScoredSample:
    p_pos: float
    p_neg: float
    label: int

    def __post_init__(self):
        if not (0.0 <= self.p_pos <= 1.0 and 0.0 <= self.p_neg <= 1.0):
            raise ValueError(f"Probabilities must lie in [0, 1], got p_pos={self.p_pos}, p_neg={self.p_neg}")
        if abs(self.p_pos + self.p_neg - 1.0) > 1e-9:
            raise ValueError(f"p_pos + p_neg must equal 1, got {self.p_pos + self.p_neg}")
        if self.label not in (0, 1):
            raise ValueError(f"Label must be 0 or 1, got {self.label}")

    @property
    def margin(self) -> float:
        return self.p_pos - self.p_neg


@dataclass(frozen=True)
class MetricsReport:
    auc: float
    se: float
    sp: float
    se_at_80sp: float
    tau: float
    target_sp: float = DEFAULT_TARGET_SP
    ci_level: float = 0.95
    ci: Dict[str, Tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("auc", "se", "sp", "se_at_80sp"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        for name, (low, high) in self.ci.items():
            if low > high:
                raise ValueError(f"CI for {name} has low {low} > high {high}")

    def to_dict(self) -> Dict[str, object]:
        return {
            "auc": self.auc,
            "se": self.se,
            "sp": self.sp,
            "se_at_80sp": self.se_at_80sp,
            "tau": self.tau,
            "target_sp": self.target_sp,
            "ci_level": self.ci_level,
            "ci": {name: list(bounds) for name, bounds in self.ci.items()},
        }


def scores_from_probs(probs: np.ndarray, labels: Sequence[int]) -> List[ScoredSample]:
    """Wrap (p_neg, p_pos) rows from the model into scored samples."""
    return [
        ScoredSample(p_pos=float(row[1]), p_neg=float(row[0]), label=int(label))
        for row, label in zip(probs, labels)
    ]


def _arrays(scored: Sequence[ScoredSample]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    p_pos = np.fromiter((s.p_pos for s in scored), dtype=np.float64, count=len(scored))
    p_neg = np.fromiter((s.p_neg for s in scored), dtype=np.float64, count=len(scored))
    labels = np.fromiter((s.label for s in scored), dtype=np.int64, count=len(scored))
    return p_pos, p_neg, labels


def _require_both_classes(labels: np.ndarray, metric: str):
    n_pos = int(np.count_nonzero(labels == 1))
    if n_pos == 0 or n_pos == labels.shape[0]:
        raise UndefinedMetricError(f"{metric} needs both positive and negative samples")


def _auc(p_pos: np.ndarray, p_neg: np.ndarray, labels: np.ndarray) -> float:
    _require_both_classes(labels, "AUC")
    positive = labels == 1
    n_pos = int(np.count_nonzero(positive))
    n_neg = labels.shape[0] - n_pos
    ranks = rankdata(p_pos, method="average")
    wins = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(wins / (n_pos * n_neg))


def _se_sp(
    p_pos: np.ndarray, p_neg: np.ndarray, labels: np.ndarray, tau: float
) -> Tuple[float, float]:
    _require_both_classes(labels, "SE/SP")
    predicted = (p_pos - p_neg) > tau
    positive = labels == 1
    se = np.count_nonzero(predicted & positive) / np.count_nonzero(positive)
    sp = np.count_nonzero(~predicted & ~positive) / np.count_nonzero(~positive)
    return float(se), float(sp)


def _se_at_sp(
    p_pos: np.ndarray, p_neg: np.ndarray, labels: np.ndarray, target_sp: float
) -> Tuple[float, float]:
    if not 0.0 < target_sp < 1.0:
        raise ValueError(f"target_sp must lie in (0, 1), got {target_sp}")
    _require_both_classes(labels, "SE at target SP")
    margins = p_pos - p_neg
    negatives = np.sort(margins[labels == 0])
    positives = np.sort(margins[labels == 1])

    # sp only changes at achievable margins; -1 and 1 bound every margin.
    candidates = np.unique(np.concatenate([[-1.0], margins, [1.0]]))
    sp = np.searchsorted(negatives, candidates, side="right") / negatives.shape[0]
    tau = float(candidates[int(np.argmax(sp >= target_sp))])
    se = (positives.shape[0] - np.searchsorted(positives, tau, side="right")) / positives.shape[0]
    return float(se), tau


ArrayMetric = Callable[[np.ndarray, np.ndarray, np.ndarray], float]

METRICS: Dict[str, ArrayMetric] = {
    "auc": _auc,
    "se": lambda p_pos, p_neg, labels: _se_sp(p_pos, p_neg, labels, 0.0)[0],
    "sp": lambda p_pos, p_neg, labels: _se_sp(p_pos, p_neg, labels, 0.0)[1],
    "se_at_80sp": lambda p_pos, p_neg, labels: _se_at_sp(
        p_pos, p_neg, labels, DEFAULT_TARGET_SP
    )[0],
}


def get_metric(name: str) -> ArrayMetric:
    try:
        return METRICS[name]
    except KeyError:
        raise UndefinedMetricError(
            f"Unknown metric '{name}'; expected one of {', '.join(METRICS)}"
        ) from None


def auc_roc(scored: Sequence[ScoredSample]) -> float:
    """Probability that a random positive outscores a random negative; ties count 1/2."""
    return _auc(*_arrays(scored))


def se_sp_at_tau(scored: Sequence[ScoredSample], tau: float) -> Tuple[float, float]:
    """Sensitivity and specificity under the rule p_pos > p_neg + tau."""
    return _se_sp(*_arrays(scored), tau)


def se_at_target_sp(
    scored: Sequence[ScoredSample], target_sp: float = DEFAULT_TARGET_SP
) -> Tuple[float, float]:
    """Sensitivity at the smallest achievable margin tau whose specificity reaches ``target_sp``.

    Returns:
        Tuple[float, float]: (se, tau).
    """
    return _se_at_sp(*_arrays(scored), target_sp)


def _percentile_interval(values: Sequence[float], level: float) -> Tuple[float, float]:
    alpha = (1.0 - level) / 2.0
    low, high = np.percentile(np.asarray(values, dtype=np.float64), [100 * alpha, 100 * (1 - alpha)])
    return float(low), float(high)


def bootstrap_ci(
    scored: Sequence[ScoredSample],
    metric: Union[str, Callable[[Sequence[ScoredSample]], float]],
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
    groups: Optional[Sequence[int]] = None,
) -> Tuple[float, float]:
    """Percentile bootstrap interval for a metric.

    Resample ``i`` draws from its own generator seeded with (seed, i), so the interval
    does not depend on the order in which resamples are evaluated.

    Args:
        scored (Sequence[ScoredSample]): Scored evaluation samples.
        metric (str | Callable): A name from ``METRICS`` or a function of scored samples.
        n_resamples (int, optional): Number of resamples. Defaults to 1000.
        level (float, optional): Confidence level in (0, 1). Defaults to 0.95.
        seed (int, optional): Base seed. Defaults to 0.
        groups (Sequence[int], optional): Resampling unit per sample (e.g. client id).
            None resamples individual samples. Defaults to None.

    Returns:
        Tuple[float, float]: (low, high).

    Raises:
        DegenerateDataError: A resample stayed single-class after 100 redraws.
    """
    if n_resamples < 1:
        raise ValueError("n_resamples must be positive")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")

    p_pos, p_neg, labels = _arrays(scored)
    if isinstance(metric, str):
        metric_fn = get_metric(metric)

        def evaluate(indices: np.ndarray) -> float:
            return metric_fn(p_pos[indices], p_neg[indices], labels[indices])

    else:

        def evaluate(indices: np.ndarray) -> float:
            return float(metric([scored[i] for i in indices]))

    values = [evaluate(indices) for indices in _resample_indices(labels, n_resamples, seed, groups)]
    return _percentile_interval(values, level)


def _resample_indices(
    labels: np.ndarray, n_resamples: int, seed: int, groups: Optional[Sequence[int]]
) -> List[np.ndarray]:
    if groups is None:
        units = [np.array([i]) for i in range(labels.shape[0])]
    else:
        group_ids = np.asarray(groups)
        units = [np.flatnonzero(group_ids == g) for g in np.unique(group_ids)]

    resamples = []
    redraws = 0
    for index in range(n_resamples):
        rng = np.random.default_rng([seed, index])
        for _ in range(MAX_RESAMPLE_RETRIES + 1):
            picks = rng.integers(0, len(units), size=len(units))
            indices = np.concatenate([units[p] for p in picks])
            n_pos = int(np.count_nonzero(labels[indices] == 1))
            if 0 < n_pos < indices.shape[0]:
                break
            redraws += 1
        else:
            logger.error(f"Bootstrap resample {index} stayed single-class after retries")
            raise DegenerateDataError(
                f"Resample {index} stayed single-class after {MAX_RESAMPLE_RETRIES} retries"
            )
        resamples.append(indices)

    if redraws:
        logger.warning(f"Bootstrap redrew {redraws} single-class resamples")
    return resamples


def bootstrap_values_ci(
    values: Sequence[float],
    n_resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> Tuple[float, float]:
    """Percentile bootstrap interval for the mean of ``values`` (e.g. one value per seed)."""
    data = np.asarray(values, dtype=np.float64)
    if data.shape[0] == 0:
        raise ValueError("Cannot bootstrap an empty list")
    means = [
        float(data[np.random.default_rng([seed, index]).integers(0, data.shape[0], data.shape[0])].mean())
        for index in range(n_resamples)
    ]
    return _percentile_interval(means, level)


def evaluate_scored(
    scored: Sequence[ScoredSample],
    tau: float = 0.0,
    target_sp: float = DEFAULT_TARGET_SP,
    n_resamples: int = 0,
    level: float = 0.95,
    seed: int = 0,
    groups: Optional[Sequence[int]] = None,
) -> MetricsReport:
    """All diagnostic metrics for one set of scores, with bootstrap CIs when ``n_resamples`` > 0."""
    p_pos, p_neg, labels = _arrays(scored)
    se, sp = _se_sp(p_pos, p_neg, labels, tau)
    se_target, found_tau = _se_at_sp(p_pos, p_neg, labels, target_sp)

    ci = {}
    if n_resamples > 0:
        metric_fns: Dict[str, ArrayMetric] = {
            "auc": _auc,
            "se": lambda a, b, c: _se_sp(a, b, c, tau)[0],
            "sp": lambda a, b, c: _se_sp(a, b, c, tau)[1],
            "se_at_80sp": lambda a, b, c: _se_at_sp(a, b, c, target_sp)[0],
        }
        resamples = _resample_indices(labels, n_resamples, seed, groups)
        for name, fn in metric_fns.items():
            values = [fn(p_pos[idx], p_neg[idx], labels[idx]) for idx in resamples]
            ci[name] = _percentile_interval(values, level)

    return MetricsReport(
        auc=_auc(p_pos, p_neg, labels),
        se=se,
        sp=sp,
        se_at_80sp=se_target,
        tau=found_tau,
        target_sp=target_sp,
        ci_level=level,
        ci=ci,
    )


REPORT_COLUMNS = (("auc", "AUC"), ("se", "SE"), ("sp", "SP"), ("se_at_80sp", "SE@80%SP"))


def format_report(report: MetricsReport, title: Optional[str] = None) -> str:
    """Render a report as a table: point estimates, with the CI row beneath."""
    width = 17
    lines = []
    if title:
        lines.append(title)
    lines.append("".ljust(10) + "".join(label.ljust(width) for _, label in REPORT_COLUMNS))
    lines.append(
        "estimate".ljust(10)
        + "".join(f"{getattr(report, name):.3f}".ljust(width) for name, _ in REPORT_COLUMNS)
    )
    if report.ci:
        cells = []
        for name, _ in REPORT_COLUMNS:
            bounds = report.ci.get(name)
            cells.append(("" if bounds is None else f"({bounds[0]:.3f}-{bounds[1]:.3f})").ljust(width))
        lines.append(f"{report.ci_level:.0%} CI".ljust(10) + "".join(cells))
    lines.append(f"tau at {report.target_sp:.0%} SP: {report.tau:.6f}")
    return "\n".join(line.rstrip() for line in lines) + "\n"
