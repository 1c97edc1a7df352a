import numpy as np
import pytest

from fedloss_sim.simulation import (
    CohortConfig,
    FeatureModel,
    ModelSpec,
    Sample,
    ScoredSample,
    generate_cohort,
    split_clients,
)


def random_sample(rng: np.random.Generator, spec: ModelSpec, label: int) -> Sample:
    return Sample(
        embedding=rng.normal(size=spec.embed_dim),
        symptoms=(rng.random(spec.symptom_dim) < 0.5).astype(float),
        label=label,
    )


def scored_from(p_pos, labels):
    return [ScoredSample(p_pos=float(p), p_neg=1.0 - float(p), label=int(y)) for p, y in zip(p_pos, labels)]


@pytest.fixture
def tiny_spec():
    return ModelSpec(embed_dim=3, symptom_dim=2, hidden_dims=(4,))


@pytest.fixture
def small_cohort_config():
    return CohortConfig(
        n_positive_clients=12,
        n_negative_clients=48,
        feature_model=FeatureModel(embed_dim=4, symptom_dim=3),
        seed=5,
    )


@pytest.fixture
def small_spec():
    return ModelSpec(embed_dim=4, symptom_dim=3, hidden_dims=(5,))


@pytest.fixture
def small_split(small_cohort_config):
    return split_clients(generate_cohort(small_cohort_config), 0.25, seed=5)
