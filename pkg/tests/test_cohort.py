import numpy as np
import pytest

from fedloss_sim.simulation import (
    CohortConfig,
    CohortFormatError,
    ConfigurationError,
    FeatureModel,
    ModelSpec,
    SampleCountDistribution,
    auc_roc,
    cohort_statistics,
    fit_centralized,
    generate_cohort,
    init_params,
    load_cohort,
    monthly_pools,
    predict_proba,
    save_cohort,
    split_clients,
)
from fedloss_sim.simulation.metrics import scores_from_probs


def test_default_cohort_matches_population():
    cohort = generate_cohort(CohortConfig())
    positives = [c for c in cohort if c.label_class == 1]
    assert len(positives) == 482
    assert len(cohort) - len(positives) == 2478
    assert sorted(c.client_id for c in cohort) == list(range(2960))


def test_empty_cohort():
    assert generate_cohort(CohortConfig(n_positive_clients=0, n_negative_clients=0)) == []


def test_default_distribution_mean():
    assert SampleCountDistribution().mean == pytest.approx(1.56)


@pytest.mark.parametrize("seed", range(10))
def test_single_sample_fraction_and_prevalence(seed):
    cohort = generate_cohort(CohortConfig(seed=seed))
    stats = cohort_statistics(cohort, 12)
    assert 0.68 <= stats["single_sample_fraction"] <= 0.76
    assert stats["positive_client_fraction"] == 482 / 2960
    assert abs(stats["positive_sample_fraction"] - 482 / 2960) <= 0.02


def test_clients_are_single_class(small_cohort_config):
    for client in generate_cohort(small_cohort_config):
        assert all(s.label == client.label_class for s in client.samples)
        assert client.n_samples >= 1
        assert not client.mixed


def test_generation_is_deterministic(small_cohort_config):
    first = generate_cohort(small_cohort_config)
    second = generate_cohort(small_cohort_config)
    for a, b in zip(first, second, strict=True):
        assert (a.client_id, a.label_class, a.join_month) == (b.client_id, b.label_class, b.join_month)
        for sa, sb in zip(a.samples, b.samples, strict=True):
            assert np.array_equal(sa.embedding, sb.embedding)
            assert np.array_equal(sa.symptoms, sb.symptoms)
            assert sa.label == sb.label


def test_mixed_class_fraction_relaxes_single_class():
    config = CohortConfig(n_positive_clients=30, n_negative_clients=30, mixed_class_fraction=1.0, seed=1)
    cohort = generate_cohort(config)
    for client in cohort:
        assert client.mixed == (client.n_samples >= 2)
        if client.mixed:
            assert {s.label for s in client.samples} == {0, 1}


def test_positive_sample_count_override():
    config = CohortConfig(
        n_positive_clients=40,
        n_negative_clients=40,
        positive_samples_per_client=SampleCountDistribution(single_prob=1.0),
        seed=2,
    )
    positives = [c for c in generate_cohort(config) if c.label_class == 1]
    assert all(c.n_samples == 1 for c in positives)


def test_arrival_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        CohortConfig(n_months=2, monthly_arrival_weights=(0.5, 0.6))


def test_feature_probabilities_validated():
    with pytest.raises(ValueError):
        FeatureModel(symptom_dim=2, symptom_prob_positive=(0.5, 1.5))


def test_split_holds_out_twenty_percent():
    cohort = generate_cohort(CohortConfig())
    split = split_clients(cohort, 0.2, seed=0)
    assert len(split.test_clients) == 592
    train_ids = {c.client_id for c in split.train_clients}
    test_ids = {c.client_id for c in split.test_clients}
    assert not train_ids & test_ids
    assert len(train_ids) + len(test_ids) == 2960


def test_split_with_zero_fraction(small_cohort_config):
    cohort = generate_cohort(small_cohort_config)
    split = split_clients(cohort, 0.0, seed=1)
    assert split.test_clients == ()
    assert [c.client_id for c in split.train_clients] == [c.client_id for c in cohort]


def test_split_rejects_empty_cohort():
    with pytest.raises(ConfigurationError):
        split_clients([], 0.2, seed=0)


def test_single_month_pools():
    config = CohortConfig(
        n_positive_clients=5, n_negative_clients=15, n_months=3, monthly_arrival_weights=(1.0, 0.0, 0.0)
    )
    cohort = generate_cohort(config)
    pools = monthly_pools(cohort, 3)
    assert sorted(pools[0]) == [c.client_id for c in cohort]
    assert pools[1] == [] and pools[2] == []


def test_pools_partition_train_clients(small_split):
    pools = monthly_pools(small_split.train_clients, 12)
    flattened = sorted(cid for pool in pools for cid in pool)
    assert flattened == sorted(c.client_id for c in small_split.train_clients)


def test_pools_reject_out_of_range_month(small_split):
    with pytest.raises(ConfigurationError):
        monthly_pools(small_split.train_clients, 1)


def test_peak_month_is_largest_pool():
    wins = 0
    for seed in range(10):
        split = split_clients(generate_cohort(CohortConfig(seed=seed)), 0.2, seed)
        sizes = [len(pool) for pool in monthly_pools(split.train_clients, 12)]
        wins += int(np.argmax(sizes) == 6)
    assert wins >= 8


def test_save_and_load_cohort(tmp_path, small_cohort_config):
    cohort = generate_cohort(small_cohort_config)
    path = save_cohort(tmp_path / "cohort.jsonl", cohort)
    loaded = load_cohort(path)
    assert len(loaded) == len(cohort)
    for a, b in zip(cohort, loaded):
        assert (a.client_id, a.label_class, a.join_month) == (b.client_id, b.label_class, b.join_month)
        assert np.array_equal(a.samples[0].embedding, b.samples[0].embedding)


def test_load_cohort_rejects_mislabelled_client(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text(
        '{"client_id": 0, "label_class": 1, "join_month": 0, "samples": [[[0.1, 0.2], [1], 1]]}\n'
        '{"client_id": 1, "label_class": 1, "join_month": 0, "samples": [[[0.1, 0.2], [0], 0]]}\n'
    )
    with pytest.raises(CohortFormatError, match="line 2"):
        load_cohort(path)


def test_load_cohort_rejects_unknown_field(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"client_id": 0, "label_class": 0, "join_month": 0, "extra": 1, "samples": [[[0.1], [0], 0]]}\n')
    with pytest.raises(CohortFormatError, match="line 1"):
        load_cohort(path)


def _centralized_auc(separability: float, seed: int) -> float:
    features = FeatureModel(separability=separability)
    train = generate_cohort(
        CohortConfig(n_positive_clients=80, n_negative_clients=320, feature_model=features, seed=seed)
    )
    test = generate_cohort(
        CohortConfig(n_positive_clients=300, n_negative_clients=300, feature_model=features, seed=seed + 1000)
    )
    spec = ModelSpec(embed_dim=features.embed_dim, symptom_dim=features.symptom_dim, hidden_dims=())
    samples = [s for c in train for s in c.samples]
    fitted = fit_centralized(init_params(spec, seed), samples, lr=0.5, epochs=300)

    test_samples = [s for c in test for s in c.samples]
    probs = predict_proba(fitted, test_samples)
    return auc_roc(scores_from_probs(probs, [s.label for s in test_samples]))


def test_separability_increases_centralized_auc():
    aucs = [
        np.mean([_centralized_auc(separability, seed) for seed in range(5)])
        for separability in (0.0, 0.5, 1.0, 2.0)
    ]
    assert all(later >= earlier for earlier, later in zip(aucs, aucs[1:]))


def test_default_arrivals_keep_late_months_populated():
    stats = cohort_statistics(generate_cohort(CohortConfig()), 12)
    months = stats["clients_per_month"]
    assert int(np.argmax(months)) == 6
    assert min(months[7:]) >= 150
