import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .cohort import ClientDataset, CohortSplit, monthly_pools
from .errors import AggregationError, ConfigurationError, ShapeError
from .metrics import MetricsReport, evaluate_scored, scores_from_probs
from .numerics import ModelSpec, ParamVector, init_params, predict_proba, sgd_epochs, total_loss

logger = logging.getLogger(__name__)

DEFAULT_PROX_MU = 0.01


class StrategyKind(StrEnum):
    FEDAVG = "fedavg"
    FEDPROX = "fedprox"
    FEDLOSS = "fedloss"


class LossMode(StrEnum):
    SUM = "sum"
    MEAN = "mean"


class StrategyConfig(BaseModel):
    """Aggregation strategy plus the shared round hyperparameters.

    Config files may use the update-rule symbols as keys: ``M``, ``E``, ``eta``,
    ``lambda`` and ``mu``.
    """

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    kind: StrategyKind = StrategyKind.FEDLOSS
    name: Optional[str] = None
    mu: Optional[float] = Field(default=None, ge=0.0)
    global_lr: float = Field(default=1.0, gt=0.0, alias="eta")
    local_lr: float = Field(default=0.015, ge=0.0, alias="lambda")
    local_epochs: int = Field(default=1, ge=1, alias="E")
    clients_per_round: int = Field(default=30, ge=1, alias="M")
    loss_mode: LossMode = LossMode.SUM
    batch_size: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _mu_only_for_prox(self) -> "StrategyConfig":
        if self.mu is not None and self.kind != StrategyKind.FEDPROX:
            raise ValueError(f"mu only applies to fedprox, not {self.kind}")
        return self

    @property
    def label(self) -> str:
        return self.name or self.kind.value

    @property
    def proximal_mu(self) -> Optional[float]:
        if self.kind != StrategyKind.FEDPROX:
            return None
        return DEFAULT_PROX_MU if self.mu is None else self.mu


@dataclass(frozen=True, eq=False)
class ClientUpdate:
    """What a client returns: pre-training loss and pseudo-gradient (global - trained)."""

    client_id: int
    label_class: int
    pre_loss: float
    delta: ParamVector
    n_samples: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError(f"Client {self.client_id} has no samples")


@dataclass(frozen=True, eq=False)
class RoundLog:
    round_index: int
    strategy: str
    selected: Tuple[int, ...]
    weights: Tuple[float, ...]
    pre_losses: Tuple[float, ...]
    label_classes: Tuple[int, ...]
    month: Optional[int] = None
    metrics: Optional[MetricsReport] = None

    def __post_init__(self):
        if not (len(self.selected) == len(self.weights) == len(self.pre_losses) == len(self.label_classes)):
            raise ValueError("RoundLog needs one weight, loss and class per selected client")
        if self.weights and abs(sum(self.weights) - 1.0) > 1e-9:
            raise ValueError(f"Round {self.round_index} weights sum to {sum(self.weights)}")

    def _class_mean(self, values: Sequence[float], label: int) -> Optional[float]:
        chosen = [v for v, c in zip(values, self.label_classes) if c == label]
        return float(np.mean(chosen)) if chosen else None

    @property
    def mean_weight_pos(self) -> Optional[float]:
        return self._class_mean(self.weights, 1)

    @property
    def mean_weight_neg(self) -> Optional[float]:
        return self._class_mean(self.weights, 0)

    @property
    def mean_preloss_pos(self) -> Optional[float]:
        return self._class_mean(self.pre_losses, 1)

    @property
    def mean_preloss_neg(self) -> Optional[float]:
        return self._class_mean(self.pre_losses, 0)

    def with_metrics(self, metrics: MetricsReport) -> "RoundLog":
        return RoundLog(
            round_index=self.round_index,
            strategy=self.strategy,
            selected=self.selected,
            weights=self.weights,
            pre_losses=self.pre_losses,
            label_classes=self.label_classes,
            month=self.month,
            metrics=metrics,
        )


@dataclass(eq=False)
class SimulationRun:
    initial_params: ParamVector
    final_params: ParamVector
    history: List[RoundLog] = field(default_factory=list)

    @property
    def snapshots(self) -> List[RoundLog]:
        return [log for log in self.history if log.metrics is not None]


def select_clients(pool: Sequence[int], clients_per_round: int, rng: np.random.Generator) -> List[int]:
    """Draw min(M, |pool|) distinct clients uniformly without replacement."""
    if len(pool) == 0:
        raise ConfigurationError("Cannot select clients from an empty pool")
    size = min(clients_per_round, len(pool))
    picks = rng.choice(len(pool), size=size, replace=False)
    return [int(pool[i]) for i in picks]


def client_execute(global_params: ParamVector, client: ClientDataset, cfg: StrategyConfig) -> ClientUpdate:
    """Report the received model's loss on local data, then train locally.

    The loss is evaluated before any local step. FedProx anchors its proximal term
    at the received model.
    """
    pre_loss = total_loss(global_params, client.samples)
    if cfg.loss_mode == LossMode.MEAN:
        pre_loss /= client.n_samples

    prox = None
    if cfg.proximal_mu is not None:
        prox = (cfg.proximal_mu, global_params)

    rng = None
    if cfg.batch_size is not None:
        rng = np.random.default_rng(client.client_id)

    trained = sgd_epochs(
        global_params,
        client.samples,
        lr=cfg.local_lr,
        epochs=cfg.local_epochs,
        prox=prox,
        batch_size=cfg.batch_size,
        rng=rng,
    )
    return ClientUpdate(
        client_id=client.client_id,
        label_class=client.label_class,
        pre_loss=pre_loss,
        delta=global_params.with_values(global_params.values - trained.values),
        n_samples=client.n_samples,
    )


def weights_fedavg(updates: Sequence[ClientUpdate]) -> np.ndarray:
    """Sample-count weights normalised over the round's participants."""
    if not updates:
        raise AggregationError("No client updates to weight")
    counts = np.array([u.n_samples for u in updates], dtype=np.float64)
    return counts / counts.sum()


def weights_fedloss(updates: Sequence[ClientUpdate]) -> np.ndarray:
    """Softmax over the clients' pre-training losses."""
    if not updates:
        raise AggregationError("No client updates to weight")
    losses = np.array([u.pre_loss for u in updates], dtype=np.float64)
    for update, loss in zip(updates, losses):
        if not np.isfinite(loss):
            raise AggregationError(f"Client {update.client_id} reported a non-finite loss {loss}")
    exps = np.exp(losses - losses.max())
    return exps / exps.sum()


STRATEGY_WEIGHTS: Dict[StrategyKind, Callable[[Sequence[ClientUpdate]], np.ndarray]] = {
    StrategyKind.FEDAVG: weights_fedavg,
    StrategyKind.FEDPROX: weights_fedavg,
    StrategyKind.FEDLOSS: weights_fedloss,
}


def apply_update(
    global_params: ParamVector,
    weights: Sequence[float],
    updates: Sequence[ClientUpdate],
    global_lr: float,
) -> ParamVector:
    """theta - eta * sum_i w_i * delta_i, reduced in ascending client-id order.

    With eta = 1 the result is the weighted average of the clients' trained models.
    """
    if len(weights) != len(updates):
        raise AggregationError(f"Got {len(weights)} weights for {len(updates)} updates")
    if len(updates) and abs(float(np.sum(weights)) - 1.0) > 1e-9:
        raise AggregationError(f"Weights sum to {float(np.sum(weights))}, expected 1")

    step = np.zeros_like(global_params.values)
    for weight, update in sorted(zip(weights, updates), key=lambda pair: pair[1].client_id):
        if update.delta.spec != global_params.spec:
            raise ShapeError(f"Update from client {update.client_id} does not match the global model")
        step += weight * update.delta.values
    return global_params.with_values(global_params.values - global_lr * step)


class Federation:
    """Runs rounds of select -> local execute -> weight -> aggregate over a fixed client set.

    Client executions within a round may run on a thread pool; the aggregation is a
    barrier and reduces in ascending client-id order, so results do not depend on
    ``workers``.
    """

    def __init__(self, clients: Sequence[ClientDataset], cfg: StrategyConfig, workers: int = 1):
        self.clients: Mapping[int, ClientDataset] = {c.client_id: c for c in clients}
        self.cfg = cfg
        self.workers = max(1, workers)
        self._executor: Optional[ThreadPoolExecutor] = None
        if self.workers > 1:
            self._executor = ThreadPoolExecutor(max_workers=self.workers)

    def __enter__(self) -> "Federation":
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def _execute_all(self, global_params: ParamVector, selected: Sequence[int]) -> List[ClientUpdate]:
        try:
            chosen = [self.clients[cid] for cid in selected]
        except KeyError as e:
            raise ConfigurationError(f"Client {e.args[0]} is not part of this federation") from None

        if self._executor is None:
            updates = [client_execute(global_params, c, self.cfg) for c in chosen]
        else:
            updates = list(self._executor.map(lambda c: client_execute(global_params, c, self.cfg), chosen))
        return sorted(updates, key=lambda u: u.client_id)

    def run_round(
        self,
        global_params: ParamVector,
        pool: Sequence[int],
        rng: np.random.Generator,
        round_index: int,
        month: Optional[int] = None,
    ) -> Tuple[ParamVector, RoundLog]:
        selected = select_clients(pool, self.cfg.clients_per_round, rng)
        updates = self._execute_all(global_params, selected)
        weights = STRATEGY_WEIGHTS[self.cfg.kind](updates)
        new_params = apply_update(global_params, weights, updates, self.cfg.global_lr)

        log = RoundLog(
            round_index=round_index,
            strategy=self.cfg.label,
            selected=tuple(u.client_id for u in updates),
            weights=tuple(float(w) for w in weights),
            pre_losses=tuple(u.pre_loss for u in updates),
            label_classes=tuple(u.label_class for u in updates),
            month=month,
        )
        logger.debug(
            f"Round {round_index} ({self.cfg.label}): weight pos={log.mean_weight_pos} "
            f"neg={log.mean_weight_neg}"
        )
        return new_params, log


def run_round(
    global_params: ParamVector,
    train_pool: Sequence[int],
    clients: Sequence[ClientDataset],
    cfg: StrategyConfig,
    rng: np.random.Generator,
    round_index: int,
) -> Tuple[ParamVector, RoundLog]:
    """One round on a throwaway single-threaded :class:`Federation`."""
    with Federation(clients, cfg) as federation:
        return federation.run_round(global_params, train_pool, rng, round_index)


def evaluate_global(
    params: ParamVector,
    test_clients: Sequence[ClientDataset],
    n_resamples: int = 0,
    level: float = 0.95,
    seed: int = 0,
    by_client: bool = False,
    target_sp: float = 0.8,
) -> MetricsReport:
    """Score every held-out sample with the global model.

    Args:
        by_client (bool, optional): Bootstrap over clients instead of samples. Defaults to False.
    """
    samples = [s for c in test_clients for s in c.samples]
    groups = [c.client_id for c in test_clients for _ in c.samples] if by_client else None
    probs = predict_proba(params, samples)
    scored = scores_from_probs(probs, [s.label for s in samples])
    return evaluate_scored(
        scored,
        target_sp=target_sp,
        n_resamples=n_resamples,
        level=level,
        seed=seed,
        groups=groups,
    )


def _initial_params(split: CohortSplit, seed: int, model: Optional[ModelSpec]) -> ParamVector:
    if model is None:
        reference = next(iter(split.train_clients)).samples[0]
        model = ModelSpec(
            embed_dim=reference.embedding.shape[0], symptom_dim=reference.symptoms.shape[0]
        )
    return init_params(model, seed)


def run_random_setting(
    split: CohortSplit,
    cfg: StrategyConfig,
    rounds: int,
    eval_every: int,
    seed: int,
    model: Optional[ModelSpec] = None,
    workers: int = 1,
) -> SimulationRun:
    """Train for ``rounds`` rounds, sampling from the whole training pool every round.

    Held-out clients are evaluated after every ``eval_every``-th round.
    """
    if not split.train_clients:
        raise ConfigurationError("The training pool is empty")
    if eval_every < 1:
        raise ConfigurationError("eval_every must be positive")

    params = _initial_params(split, seed, model)
    run = SimulationRun(initial_params=params, final_params=params)
    rng = np.random.default_rng(seed)
    pool = sorted(c.client_id for c in split.train_clients)

    logger.info(f"Random setting: {cfg.label}, {rounds} rounds, seed {seed}")
    with Federation(split.train_clients, cfg, workers) as federation:
        for t in range(rounds):
            params, log = federation.run_round(params, pool, rng, t)
            if (t + 1) % eval_every == 0 and split.test_clients:
                log = log.with_metrics(evaluate_global(params, split.test_clients))
                logger.info(f"[{cfg.label}] round {t + 1}: AUC {log.metrics.auc:.4f}")
            run.history.append(log)

    run.final_params = params
    return run


def run_chronological_setting(
    split: CohortSplit,
    cfg: StrategyConfig,
    rounds_per_month: int,
    seed: int,
    n_months: Optional[int] = None,
    model: Optional[ModelSpec] = None,
    workers: int = 1,
) -> SimulationRun:
    """Train month by month, each month sampling only clients that joined in it.

    The global model carries over between months. Months with no clients are skipped,
    and the model is evaluated on the held-out clients at the end of every trained month.

    Raises:
        ConfigurationError: Every monthly pool is empty, or rounds_per_month is below 1.
    """
    if rounds_per_month < 1:
        raise ConfigurationError("rounds_per_month must be positive")
    if n_months is None:
        n_months = max((c.join_month for c in split.train_clients), default=-1) + 1
    pools = monthly_pools(split.train_clients, n_months)
    if not any(pools):
        raise ConfigurationError("Every monthly client pool is empty")

    params = _initial_params(split, seed, model)
    run = SimulationRun(initial_params=params, final_params=params)
    rng = np.random.default_rng(seed)

    logger.info(f"Chronological setting: {cfg.label}, {rounds_per_month} rounds/month, seed {seed}")
    round_index = 0
    with Federation(split.train_clients, cfg, workers) as federation:
        for month, pool in enumerate(pools):
            if not pool:
                logger.warning(f"Month {month} has no new clients; skipping")
                continue
            pool = sorted(pool)
            for step in range(rounds_per_month):
                params, log = federation.run_round(params, pool, rng, round_index, month=month)
                if step == rounds_per_month - 1 and split.test_clients:
                    log = log.with_metrics(evaluate_global(params, split.test_clients))
                    logger.info(
                        f"[{cfg.label}] month {month} end: SE@80%SP {log.metrics.se_at_80sp:.4f}"
                    )
                run.history.append(log)
                round_index += 1

    run.final_params = params
    return run
