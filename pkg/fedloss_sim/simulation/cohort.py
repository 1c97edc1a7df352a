import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import CohortFormatError, ConfigurationError
from .numerics import Sample

logger = logging.getLogger(__name__)

# Share of clients joining in each month; mode at index 6, with a slow decline after it
# so the last monthly pools stay large.
DEFAULT_ARRIVAL_WEIGHTS = (0.04, 0.05, 0.06, 0.07, 0.08, 0.10, 0.14, 0.10, 0.09, 0.09, 0.09, 0.09)

DEFAULT_MEAN_GAP = 0.15
DEFAULT_SYMPTOM_PROB_NEGATIVE = 0.25
DEFAULT_SYMPTOM_PROB_POSITIVE = 0.38


class SampleCountDistribution(BaseModel):
    """P(1) = single_prob; otherwise 1 + Geometric(tail_stop_prob), capped at max_samples."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    single_prob: float = Field(default=0.72, ge=0.0, le=1.0)
    tail_stop_prob: float = Field(default=0.5, gt=0.0, le=1.0)
    max_samples: int = Field(default=50, ge=1)

    @property
    def mean(self) -> float:
        """Mean sample count, ignoring the cap."""
        return self.single_prob + (1.0 - self.single_prob) * (1.0 + 1.0 / self.tail_stop_prob)

    def draw(self, rng: np.random.Generator) -> int:
        if rng.random() < self.single_prob:
            return 1
        return int(min(1 + rng.geometric(self.tail_stop_prob), self.max_samples))


class FeatureModel(BaseModel):
    """Class-conditional generator for synthetic samples.

    Embeddings are diagonal Gaussians whose class means sit symmetrically around
    the midpoint of ``mean_negative`` and ``mean_positive``, with the gap scaled by
    ``separability``. Symptoms are independent Bernoullis with overlapping class rates,
    so some positives are asymptomatic and many negatives report symptoms.
    Unset vectors take the documented defaults for the configured dimensions.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    embed_dim: int = Field(default=32, ge=1)
    symptom_dim: int = Field(default=10, ge=1)
    mean_negative: Optional[Tuple[float, ...]] = None
    mean_positive: Optional[Tuple[float, ...]] = None
    embed_std: Optional[Tuple[float, ...]] = None
    symptom_prob_negative: Optional[Tuple[float, ...]] = None
    symptom_prob_positive: Optional[Tuple[float, ...]] = None
    separability: float = Field(default=1.0, ge=0.0)

    @model_validator(mode="after")
    def _check_vectors(self) -> "FeatureModel":
        for name in ("mean_negative", "mean_positive", "embed_std"):
            value = getattr(self, name)
            if value is not None and len(value) != self.embed_dim:
                raise ValueError(f"{name} must have embed_dim={self.embed_dim} entries")
        if self.embed_std is not None and any(std <= 0 for std in self.embed_std):
            raise ValueError("embed_std entries must be positive")
        for name in ("symptom_prob_negative", "symptom_prob_positive"):
            value = getattr(self, name)
            if value is None:
                continue
            if len(value) != self.symptom_dim:
                raise ValueError(f"{name} must have symptom_dim={self.symptom_dim} entries")
            if any(p < 0.0 or p > 1.0 for p in value):
                raise ValueError(f"{name} entries must lie in [0, 1]")
        return self

    def _base_means(self) -> Tuple[np.ndarray, np.ndarray]:
        negative = (
            np.asarray(self.mean_negative, dtype=np.float64)
            if self.mean_negative is not None
            else np.zeros(self.embed_dim)
        )
        if self.mean_positive is not None:
            positive = np.asarray(self.mean_positive, dtype=np.float64)
        else:
            signs = np.where(np.arange(self.embed_dim) % 2 == 0, 1.0, -1.0)
            positive = negative + DEFAULT_MEAN_GAP * signs
        return negative, positive

    def class_mean(self, label: int) -> np.ndarray:
        negative, positive = self._base_means()
        center = 0.5 * (negative + positive)
        half_gap = 0.5 * self.separability * (positive - negative)
        return center + half_gap if label == 1 else center - half_gap

    def std(self) -> np.ndarray:
        if self.embed_std is None:
            return np.ones(self.embed_dim)
        return np.asarray(self.embed_std, dtype=np.float64)

    def symptom_probs(self, label: int) -> np.ndarray:
        if label == 1:
            value, default = self.symptom_prob_positive, DEFAULT_SYMPTOM_PROB_POSITIVE
        else:
            value, default = self.symptom_prob_negative, DEFAULT_SYMPTOM_PROB_NEGATIVE
        if value is None:
            return np.full(self.symptom_dim, default)
        return np.asarray(value, dtype=np.float64)

    def draw_sample(self, rng: np.random.Generator, label: int) -> Sample:
        # Draw order is independent of separability, so cohorts that differ only in
        # separability share every random number.
        noise = rng.standard_normal(self.embed_dim)
        uniforms = rng.random(self.symptom_dim)
        return Sample(
            embedding=self.class_mean(label) + self.std() * noise,
            symptoms=(uniforms < self.symptom_probs(label)).astype(np.float64),
            label=label,
        )


class CohortConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    n_positive_clients: int = Field(default=482, ge=0)
    n_negative_clients: int = Field(default=2478, ge=0)
    samples_per_client: SampleCountDistribution = SampleCountDistribution()
    positive_samples_per_client: Optional[SampleCountDistribution] = None
    n_months: int = Field(default=12, ge=1)
    monthly_arrival_weights: Optional[Tuple[float, ...]] = None
    feature_model: FeatureModel = FeatureModel()
    mixed_class_fraction: float = Field(default=0.0, ge=0.0, le=1.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_arrival(self) -> "CohortConfig":
        weights = self.monthly_arrival_weights
        if weights is None:
            return self
        if len(weights) != self.n_months:
            raise ValueError(f"monthly_arrival_weights must have n_months={self.n_months} entries")
        if any(w < 0 for w in weights):
            raise ValueError("monthly_arrival_weights must be non-negative")
        if abs(sum(weights) - 1.0) > 1e-9:
            raise ValueError("monthly_arrival_weights must sum to 1")
        return self

    def arrival_weights(self) -> np.ndarray:
        if self.monthly_arrival_weights is not None:
            return np.asarray(self.monthly_arrival_weights, dtype=np.float64)
        if self.n_months == len(DEFAULT_ARRIVAL_WEIGHTS):
            return np.asarray(DEFAULT_ARRIVAL_WEIGHTS, dtype=np.float64)
        return np.full(self.n_months, 1.0 / self.n_months)

    def sample_distribution(self, label: int) -> SampleCountDistribution:
        if label == 1 and self.positive_samples_per_client is not None:
            return self.positive_samples_per_client
        return self.samples_per_client


@dataclass(frozen=True, eq=False)
class ClientDataset:
    """One device's private data. All samples share ``label_class`` unless ``mixed``."""

    client_id: int
    label_class: int
    samples: Tuple[Sample, ...]
    join_month: int
    mixed: bool = False

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if not self.samples:
            raise ValueError(f"Client {self.client_id} has no samples")
        if self.label_class not in (0, 1):
            raise ValueError(f"Client {self.client_id} label_class must be 0 or 1")
        if self.join_month < 0:
            raise ValueError(f"Client {self.client_id} join_month must be non-negative")
        if not self.mixed and any(s.label != self.label_class for s in self.samples):
            raise ValueError(f"Client {self.client_id} is single-class but holds another label")

    @property
    def n_samples(self) -> int:
        return len(self.samples)


@dataclass(frozen=True, eq=False)
class CohortSplit:
    train_clients: Tuple[ClientDataset, ...]
    test_clients: Tuple[ClientDataset, ...]


def generate_cohort(config: CohortConfig) -> List[ClientDataset]:
    """Generate the synthetic population from one sequential random stream.

    Class labels are shuffled over client ids; each client then draws its sample
    count, its join month and its samples in that order.
    """
    rng = np.random.default_rng(config.seed)
    n_total = config.n_positive_clients + config.n_negative_clients
    classes = rng.permutation(
        np.array([1] * config.n_positive_clients + [0] * config.n_negative_clients, dtype=np.int64)
    )
    weights = config.arrival_weights()
    feature_model = config.feature_model

    cohort = []
    for client_id in range(n_total):
        label = int(classes[client_id])
        n_samples = config.sample_distribution(label).draw(rng)
        join_month = int(rng.choice(config.n_months, p=weights))

        mixed = False
        if config.mixed_class_fraction > 0 and n_samples >= 2:
            mixed = bool(rng.random() < config.mixed_class_fraction)
        labels = [label] * n_samples
        if mixed:
            labels[-1] = 1 - label

        samples = tuple(feature_model.draw_sample(rng, y) for y in labels)
        cohort.append(
            ClientDataset(
                client_id=client_id,
                label_class=label,
                samples=samples,
                join_month=join_month,
                mixed=mixed,
            )
        )

    logger.info(
        f"Generated cohort: {config.n_positive_clients} positive / "
        f"{config.n_negative_clients} negative clients, "
        f"{sum(c.n_samples for c in cohort)} samples"
    )
    return cohort


def split_clients(cohort: Sequence[ClientDataset], test_fraction: float, seed: int) -> CohortSplit:
    """Hold out round(test_fraction * N) whole clients uniformly at random."""
    if not cohort:
        raise ConfigurationError("Cannot split an empty cohort")
    if not 0.0 <= test_fraction <= 1.0:
        raise ConfigurationError(f"test_fraction must lie in [0, 1], got {test_fraction}")

    n_test = int(np.floor(test_fraction * len(cohort) + 0.5))
    rng = np.random.default_rng(seed)
    held_out = set(rng.permutation(len(cohort))[:n_test].tolist())

    train = tuple(c for i, c in enumerate(cohort) if i not in held_out)
    test = tuple(c for i, c in enumerate(cohort) if i in held_out)
    return CohortSplit(train_clients=train, test_clients=test)


def monthly_pools(train_clients: Sequence[ClientDataset], n_months: int) -> List[List[int]]:
    """Client ids available in each month; a client is selectable only in its join month."""
    pools: List[List[int]] = [[] for _ in range(n_months)]
    for client in train_clients:
        if not 0 <= client.join_month < n_months:
            raise ConfigurationError(
                f"Client {client.client_id} joins in month {client.join_month}, "
                f"outside the {n_months}-month schedule"
            )
        pools[client.join_month].append(client.client_id)
    return pools


def cohort_statistics(cohort: Sequence[ClientDataset], n_months: int) -> Dict[str, Any]:
    """Population summary: class balance, sample-count skew and monthly arrivals."""
    n_clients = len(cohort)
    positives = [c for c in cohort if c.label_class == 1]
    n_samples = sum(c.n_samples for c in cohort)
    n_positive_samples = sum(s.label for c in cohort for s in c.samples)
    counts = np.bincount([c.n_samples for c in cohort], minlength=2) if cohort else np.zeros(2)

    return {
        "n_clients": n_clients,
        "n_positive_clients": len(positives),
        "n_negative_clients": n_clients - len(positives),
        "n_samples": n_samples,
        "n_positive_samples": int(n_positive_samples),
        "n_mixed_clients": sum(1 for c in cohort if c.mixed),
        "positive_client_fraction": len(positives) / n_clients if n_clients else 0.0,
        "positive_sample_fraction": n_positive_samples / n_samples if n_samples else 0.0,
        "single_sample_fraction": float(counts[1]) / n_clients if n_clients else 0.0,
        "mean_samples_per_client": n_samples / n_clients if n_clients else 0.0,
        "clients_per_month": [len(pool) for pool in monthly_pools(cohort, n_months)],
    }


class _ClientRecord(BaseModel):
    model_config = ConfigDict(extra="forbid")

    client_id: int = Field(ge=0)
    label_class: int = Field(ge=0, le=1)
    join_month: int = Field(ge=0)
    mixed: bool = False
    samples: List[Tuple[List[float], List[int], int]] = Field(min_length=1)


def _client_to_record(client: ClientDataset) -> Dict[str, Any]:
    return {
        "client_id": client.client_id,
        "label_class": client.label_class,
        "join_month": client.join_month,
        "mixed": client.mixed,
        "samples": [
            [s.embedding.tolist(), s.symptoms.astype(np.int64).tolist(), s.label]
            for s in client.samples
        ],
    }


def save_cohort(path: Union[str, Path], cohort: Sequence[ClientDataset]) -> Path:
    """Write one JSON object per client per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for client in cohort:
            handle.write(json.dumps(_client_to_record(client)) + "\n")
    logger.info(f"Wrote {len(cohort)} clients to {path}")
    return path


def load_cohort(
    path: Union[str, Path], embed_dim: Optional[int] = None, symptom_dim: Optional[int] = None
) -> List[ClientDataset]:
    """Read a cohort written by :func:`save_cohort`, validating every line.

    Raises:
        CohortFormatError: A line is malformed, breaks a client invariant, repeats a
            client id, or has dimensions that differ from the first line (or from the
            given ``embed_dim`` / ``symptom_dim``).
    """
    path = Path(path)
    cohort = []
    seen = set()
    with path.open("r", encoding="utf-8") as handle:
        for line_number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = _ClientRecord.model_validate_json(line)
                samples = tuple(
                    Sample(embedding=embedding, symptoms=symptoms, label=label)
                    for embedding, symptoms, label in record.samples
                )
                client = ClientDataset(
                    client_id=record.client_id,
                    label_class=record.label_class,
                    samples=samples,
                    join_month=record.join_month,
                    mixed=record.mixed,
                )
            except (ValidationError, ValueError) as e:
                logger.error(f"Invalid cohort line {line_number} in {path}: {str(e)}")
                raise CohortFormatError(f"{path}, line {line_number}: {str(e)}") from e

            if client.client_id in seen:
                raise CohortFormatError(
                    f"{path}, line {line_number}: duplicate client_id {client.client_id}"
                )
            seen.add(client.client_id)

            for sample in client.samples:
                if embed_dim is None:
                    embed_dim = sample.embedding.shape[0]
                if symptom_dim is None:
                    symptom_dim = sample.symptoms.shape[0]
                if sample.embedding.shape[0] != embed_dim or sample.symptoms.shape[0] != symptom_dim:
                    raise CohortFormatError(
                        f"{path}, line {line_number}: sample dimensions "
                        f"({sample.embedding.shape[0]}, {sample.symptoms.shape[0]}) "
                        f"differ from ({embed_dim}, {symptom_dim})"
                    )
            cohort.append(client)
    return cohort
