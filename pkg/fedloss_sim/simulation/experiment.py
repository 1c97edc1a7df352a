import csv
import json
import logging
import tomllib
from enum import StrEnum
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .cohort import CohortConfig, CohortSplit, generate_cohort, split_clients
from .errors import ConfigurationError, SimulationError, UndefinedMetricError
from .federation import (
    SimulationRun,
    StrategyConfig,
    StrategyKind,
    evaluate_global,
    run_chronological_setting,
    run_random_setting,
)
from .metrics import METRICS, MetricsReport, bootstrap_values_ci
from .numerics import ModelSpec
from .outputs import format_summary, write_report, write_trace_csv, write_weights_csv

logger = logging.getLogger(__name__)

MIN_SEEDS_FOR_BOOTSTRAP = 5


class Setting(StrEnum):
    RANDOMLY = "randomly"
    CHRONOLOGICALLY = "chronologically"


class BootstrapUnit(StrEnum):
    SAMPLE = "sample"
    CLIENT = "client"


class ExperimentConfig(BaseModel):
    """Everything needed to reproduce one strategy comparison.

    ``model`` may be omitted; it then takes the cohort's feature dimensions and the
    default hidden layers. ``T`` is accepted as an alias for ``rounds``.
    """

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    cohort: CohortConfig = CohortConfig()
    model: Optional[ModelSpec] = None
    strategies: Tuple[StrategyConfig, ...] = Field(min_length=1)
    setting: Setting = Setting.RANDOMLY
    rounds: int = Field(default=2000, ge=0, alias="T")
    rounds_per_month: int = Field(default=100, ge=1)
    eval_every: int = Field(default=10, ge=1)
    seeds: Tuple[int, ...] = Field(default=(0,), min_length=1)
    output_dir: Path = Path("results")
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    bootstrap_resamples: int = Field(default=1000, ge=1)
    ci_level: float = Field(default=0.95, gt=0.0, lt=1.0)
    bootstrap_unit: BootstrapUnit = BootstrapUnit.SAMPLE
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _check_consistency(self) -> "ExperimentConfig":
        features = self.cohort.feature_model
        if self.model is not None:
            if self.model.embed_dim != features.embed_dim:
                raise ValueError("model.embed_dim must equal cohort.feature_model.embed_dim")
            if self.model.symptom_dim != features.symptom_dim:
                raise ValueError("model.symptom_dim must equal cohort.feature_model.symptom_dim")
        labels = [s.label for s in self.strategies]
        if len(set(labels)) != len(labels):
            raise ValueError("strategies need distinct names; set 'name' when repeating a kind")
        return self

    def resolved_model(self) -> ModelSpec:
        if self.model is not None:
            return self.model
        features = self.cohort.feature_model
        return ModelSpec(embed_dim=features.embed_dim, symptom_dim=features.symptom_dim)


def _describe_validation_error(error: ValidationError, source: str) -> str:
    problems = []
    for item in error.errors():
        key = ".".join(str(part) for part in item["loc"]) or "<root>"
        problems.append(f"{key}: {item['msg']}")
    return f"Invalid config {source}: " + "; ".join(problems)


def config_from_dict(data: Mapping[str, Any], source: str = "<dict>") -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        message = _describe_validation_error(e, source)
        logger.error(message)
        raise ConfigurationError(message) from e


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """Load and validate a TOML or JSON experiment config.

    Raises:
        ConfigurationError: The file is missing, cannot be parsed, or fails validation.
            The message names the file or the offending key.
    """
    path = Path(path)
    if not path.is_file():
        logger.error(f"Config file not found: {path}")
        raise ConfigurationError(f"Config file not found: {path}")

    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(text)
        else:
            data = tomllib.loads(text)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        logger.error(f"Malformed config {path}: {str(e)}")
        raise ConfigurationError(f"Malformed config {path}: {str(e)}") from e

    if not isinstance(data, dict):
        raise ConfigurationError(f"Malformed config {path}: top level must be a table/object")
    return config_from_dict(data, source=str(path))


def dump_config(cfg: ExperimentConfig, include_output_dir: bool = True) -> str:
    """JSON text that :func:`parse_config` reads back into an equal config."""
    exclude = None if include_output_dir else {"output_dir"}
    return cfg.model_dump_json(by_alias=True, exclude_none=True, exclude=exclude, indent=2) + "\n"


def apply_overrides(
    cfg: ExperimentConfig,
    output_dir: Optional[Union[str, Path]] = None,
    seeds: Optional[Sequence[int]] = None,
    strategy: Optional[str] = None,
    setting: Optional[str] = None,
    workers: Optional[int] = None,
) -> ExperimentConfig:
    """Command-line overrides. ``strategy`` keeps only configured strategies of that kind,
    or adds a default one when none matches."""
    data = cfg.model_dump(mode="json", by_alias=True, exclude_none=True)
    if output_dir is not None:
        data["output_dir"] = str(output_dir)
    if seeds is not None:
        data["seeds"] = list(seeds)
    if setting is not None:
        data["setting"] = setting
    if workers is not None:
        data["workers"] = workers
    if strategy is not None:
        try:
            kind = StrategyKind(strategy)
        except ValueError:
            raise ConfigurationError(f"Unknown strategy '{strategy}'") from None
        matching = [s for s in data["strategies"] if s.get("kind") == kind.value]
        data["strategies"] = matching or [{"kind": kind.value}]
    return config_from_dict(data, source="<overrides>")


def run_setting(
    cfg: ExperimentConfig, split: CohortSplit, strategy: StrategyConfig, seed: int
) -> SimulationRun:
    if cfg.setting == Setting.CHRONOLOGICALLY:
        return run_chronological_setting(
            split,
            strategy,
            rounds_per_month=cfg.rounds_per_month,
            seed=seed,
            n_months=cfg.cohort.n_months,
            model=cfg.resolved_model(),
            workers=cfg.workers,
        )
    return run_random_setting(
        split,
        strategy,
        rounds=cfg.rounds,
        eval_every=cfg.eval_every,
        seed=seed,
        model=cfg.resolved_model(),
        workers=cfg.workers,
    )


def build_split(cfg: ExperimentConfig, seed: int) -> CohortSplit:
    """Cohort and client split for one seed, shared by every strategy."""
    cohort = generate_cohort(cfg.cohort.model_copy(update={"seed": cfg.cohort.seed + seed}))
    return split_clients(cohort, cfg.test_fraction, seed)


def summarize(
    finals: Mapping[str, Sequence[MetricsReport]], cfg: ExperimentConfig
) -> Tuple[List[Tuple[str, int, Dict[str, float], Dict[str, Tuple[float, float]]]], List[str]]:
    """Mean and interval of each metric across seeds, per strategy.

    Seeds are bootstrapped when there are at least five; otherwise the interval is the
    min/max range.
    """
    rows = []
    notes = []
    for label, reports in finals.items():
        if not reports:
            continue
        means, intervals = {}, {}
        for name in METRICS:
            values = [getattr(r, name) for r in reports]
            means[name] = float(np.mean(values))
            if len(values) >= MIN_SEEDS_FOR_BOOTSTRAP:
                intervals[name] = bootstrap_values_ci(
                    values, cfg.bootstrap_resamples, cfg.ci_level, seed=0
                )
            else:
                intervals[name] = (float(min(values)), float(max(values)))
        if len(reports) < MIN_SEEDS_FOR_BOOTSTRAP:
            note = (
                f"{label}: only {len(reports)} seed(s); interval is the min-max range, "
                f"not a bootstrap CI"
            )
            logger.warning(note)
            notes.append(note)
        rows.append((label, len(reports), means, intervals))
    return rows, notes


def run_experiment(cfg: ExperimentConfig) -> int:
    """Run every (strategy, seed) pair and write traces, reports and the summary.

    Returns:
        int: 0 when every run succeeded, 1 otherwise. Failed runs are listed in a
        ``FAILED`` file next to the partial outputs.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(dump_config(cfg, include_output_dir=False), encoding="utf-8")
    stale = out / "FAILED"
    if stale.exists():
        stale.unlink()

    logger.info(
        f"Experiment: {len(cfg.strategies)} strategies x {len(cfg.seeds)} seeds, "
        f"setting {cfg.setting}, output {out}"
    )
    finals: Dict[str, List[MetricsReport]] = {s.label: [] for s in cfg.strategies}
    failures = []

    for seed in cfg.seeds:
        try:
            split = build_split(cfg, seed)
        except SimulationError as e:
            logger.error(f"Cohort for seed {seed} failed: {str(e)}")
            failures.extend(f"{s.label} seed {seed}: {str(e)}" for s in cfg.strategies)
            continue

        for strategy in cfg.strategies:
            tag = f"{strategy.label}_seed{seed}"
            try:
                run = run_setting(cfg, split, strategy, seed)
                report = evaluate_global(
                    run.final_params,
                    split.test_clients,
                    n_resamples=cfg.bootstrap_resamples,
                    level=cfg.ci_level,
                    seed=seed,
                    by_client=cfg.bootstrap_unit == BootstrapUnit.CLIENT,
                )
            except SimulationError as e:
                logger.error(f"Run {tag} failed: {str(e)}")
                failures.append(f"{strategy.label} seed {seed}: {str(e)}")
                continue

            write_trace_csv(out / "traces" / f"trace_{tag}.csv", run.history)
            write_weights_csv(out / "weights" / f"weights_{tag}.csv", run.history)
            write_report(
                out / "reports" / f"report_{tag}.txt",
                report,
                title=f"{strategy.label}, seed {seed}, {cfg.setting} setting",
            )
            finals[strategy.label].append(report)

    rows, notes = summarize(finals, cfg)
    summary = format_summary(
        rows,
        title=f"Strategy comparison, {cfg.setting} setting",
        ci_label=f"{cfg.ci_level:.0%} CI",
        notes=notes,
    )
    (out / "summary.txt").write_text(summary, encoding="utf-8")

    if failures:
        (out / "FAILED").write_text("\n".join(failures) + "\n", encoding="utf-8")
        logger.error(f"{len(failures)} run(s) failed; outputs in {out} are partial")
        return 1
    logger.info(f"Experiment finished; outputs in {out}")
    return 0


def rounds_to_target(trace_path: Union[str, Path], metric: str, target: float) -> Optional[int]:
    """First evaluated round at which ``metric`` reaches ``target``; None if never.

    Raises:
        UndefinedMetricError: The trace has no column named ``metric``.
    """
    with Path(trace_path).open("r", newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if metric not in (reader.fieldnames or []) or metric in ("round", "strategy"):
            raise UndefinedMetricError(f"Trace {trace_path} has no metric column '{metric}'")
        for row in reader:
            value = row[metric]
            if value and float(value) >= target:
                return int(row["round"])
    return None
