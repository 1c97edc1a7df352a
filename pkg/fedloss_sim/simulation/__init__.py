from .cohort import (
    ClientDataset,
    CohortConfig,
    CohortSplit,
    FeatureModel,
    SampleCountDistribution,
    cohort_statistics,
    generate_cohort,
    load_cohort,
    monthly_pools,
    save_cohort,
    split_clients,
)
from .errors import (
    AggregationError,
    CohortFormatError,
    ConfigurationError,
    DegenerateDataError,
    ShapeError,
    SimulationError,
    TrainingDivergenceError,
    UndefinedMetricError,
)
from .experiment import (
    BootstrapUnit,
    ExperimentConfig,
    Setting,
    apply_overrides,
    dump_config,
    parse_config,
    rounds_to_target,
    run_experiment,
)
from .federation import (
    ClientUpdate,
    Federation,
    LossMode,
    RoundLog,
    SimulationRun,
    StrategyConfig,
    StrategyKind,
    apply_update,
    client_execute,
    evaluate_global,
    run_chronological_setting,
    run_random_setting,
    run_round,
    select_clients,
    weights_fedavg,
    weights_fedloss,
)
from .metrics import (
    MetricsReport,
    ScoredSample,
    auc_roc,
    bootstrap_ci,
    bootstrap_values_ci,
    evaluate_scored,
    format_report,
    se_at_target_sp,
    se_sp_at_tau,
)
from .numerics import (
    ModelSpec,
    ParamVector,
    Sample,
    fit_centralized,
    forward,
    gradient,
    init_params,
    loss_and_gradient,
    predict_proba,
    sgd_epochs,
    total_loss,
)

__all__ = [
    "AggregationError",
    "apply_overrides",
    "apply_update",
    "auc_roc",
    "BootstrapUnit",
    "bootstrap_ci",
    "bootstrap_values_ci",
    "ClientDataset",
    "ClientUpdate",
    "client_execute",
    "CohortConfig",
    "CohortFormatError",
    "CohortSplit",
    "cohort_statistics",
    "ConfigurationError",
    "DegenerateDataError",
    "dump_config",
    "evaluate_global",
    "evaluate_scored",
    "ExperimentConfig",
    "FeatureModel",
    "Federation",
    "fit_centralized",
    "format_report",
    "forward",
    "generate_cohort",
    "gradient",
    "init_params",
    "load_cohort",
    "LossMode",
    "loss_and_gradient",
    "MetricsReport",
    "ModelSpec",
    "monthly_pools",
    "ParamVector",
    "parse_config",
    "predict_proba",
    "RoundLog",
    "rounds_to_target",
    "run_chronological_setting",
    "run_experiment",
    "run_random_setting",
    "run_round",
    "Sample",
    "SampleCountDistribution",
    "save_cohort",
    "ScoredSample",
    "select_clients",
    "Setting",
    "se_at_target_sp",
    "se_sp_at_tau",
    "sgd_epochs",
    "ShapeError",
    "SimulationError",
    "SimulationRun",
    "split_clients",
    "StrategyConfig",
    "StrategyKind",
    "total_loss",
    "TrainingDivergenceError",
    "UndefinedMetricError",
    "weights_fedavg",
    "weights_fedloss",
]
