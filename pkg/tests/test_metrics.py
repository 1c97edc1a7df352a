import numpy as np
import pytest

from conftest import scored_from
from fedloss_sim.simulation import (
    DegenerateDataError,
    ScoredSample,
    UndefinedMetricError,
    auc_roc,
    bootstrap_ci,
    evaluate_scored,
    format_report,
    se_at_target_sp,
    se_sp_at_tau,
)
from fedloss_sim.simulation.metrics import bootstrap_values_ci, get_metric


def brute_force_auc(p_pos, labels):
    positives = [p for p, y in zip(p_pos, labels) if y == 1]
    negatives = [p for p, y in zip(p_pos, labels) if y == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in positives for n in negatives)
    return wins / (len(positives) * len(negatives))


def random_instance(rng, max_size=50):
    size = int(rng.integers(2, max_size + 1))
    labels = rng.integers(0, 2, size=size)
    labels[0], labels[1] = 0, 1
    # coarse scores so ties are common
    p_pos = np.round(rng.random(size), 1)
    return p_pos, labels


def test_auc_perfect_separation():
    scored = scored_from([0.1, 0.2, 0.7, 0.9], [0, 0, 1, 1])
    assert auc_roc(scored) == 1.0


def test_auc_hand_example():
    scored = scored_from([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    assert auc_roc(scored) == 0.75


def test_auc_invariant_to_monotone_transform():
    rng = np.random.default_rng(0)
    p_pos, labels = random_instance(rng)
    transformed = p_pos**3
    assert auc_roc(scored_from(p_pos, labels)) == auc_roc(scored_from(transformed, labels))


def test_auc_needs_both_classes():
    with pytest.raises(UndefinedMetricError):
        auc_roc(scored_from([0.2, 0.9], [1, 1]))


def test_auc_equals_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(200):
        p_pos, labels = random_instance(rng)
        assert auc_roc(scored_from(p_pos, labels)) == brute_force_auc(p_pos, labels)


def test_se_sp_default_rule():
    scored = scored_from([0.9, 0.6, 0.4, 0.3, 0.55, 0.1], [1, 1, 1, 0, 0, 0])
    se, sp = se_sp_at_tau(scored, 0.0)
    assert se == pytest.approx(2 / 3)
    assert sp == pytest.approx(2 / 3)


def test_se_sp_with_large_tau_predicts_nothing_positive():
    scored = scored_from([0.99, 0.6, 0.01], [1, 1, 0])
    assert se_sp_at_tau(scored, 1.0) == (0.0, 1.0)


def test_se_sp_needs_both_classes():
    with pytest.raises(UndefinedMetricError):
        se_sp_at_tau(scored_from([0.2, 0.4], [0, 0]), 0.0)


def test_se_at_target_sp_perfect_separator():
    se, _ = se_at_target_sp(scored_from([0.1, 0.2, 0.3, 0.8, 0.9], [0, 0, 0, 1, 1]), 0.8)
    assert se == 1.0


def test_se_at_target_sp_single_cut():
    scored = scored_from([0.6] * 5 + [0.7] * 3, [0] * 5 + [1] * 3)
    se, tau = se_at_target_sp(scored, 0.8)
    assert tau == pytest.approx(0.2)
    assert se == 1.0


def _candidates(scored):
    return np.unique(np.concatenate([[-1.0], [s.margin for s in scored], [1.0]]))


def test_se_at_target_sp_is_smallest_feasible_tau():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p_pos, labels = random_instance(rng, max_size=30)
        scored = scored_from(p_pos, labels)
        target = float(rng.uniform(0.05, 0.95))
        se, tau = se_at_target_sp(scored, target)

        assert se_sp_at_tau(scored, tau)[1] >= target
        candidates = _candidates(scored)
        smaller = candidates[candidates < tau]
        if smaller.size:
            assert se_sp_at_tau(scored, float(smaller[-1]))[1] < target
        assert se_sp_at_tau(scored, tau)[0] == se


def test_se_at_target_sp_is_maximal():
    rng = np.random.default_rng(3)
    for _ in range(50):
        p_pos, labels = random_instance(rng, max_size=20)
        scored = scored_from(p_pos, labels)
        se, _ = se_at_target_sp(scored, 0.8)
        candidates = _candidates(scored)
        sweep = np.concatenate([candidates, (candidates[:-1] + candidates[1:]) / 2])
        for tau in sweep:
            sweep_se, sweep_sp = se_sp_at_tau(scored, float(tau))
            if sweep_sp >= 0.8:
                assert sweep_se <= se


def test_metrics_are_permutation_invariant():
    rng = np.random.default_rng(4)
    p_pos, labels = random_instance(rng)
    scored = scored_from(p_pos, labels)
    shuffled = [scored[i] for i in rng.permutation(len(scored))]
    assert auc_roc(scored) == auc_roc(shuffled)
    assert se_sp_at_tau(scored, 0.1) == se_sp_at_tau(shuffled, 0.1)
    assert se_at_target_sp(scored, 0.8) == se_at_target_sp(shuffled, 0.8)


def test_scored_sample_must_normalize():
    with pytest.raises(ValueError):
        ScoredSample(p_pos=0.7, p_neg=0.7, label=1)


def test_bootstrap_of_constant_metric():
    scored = scored_from([0.2, 0.8, 0.4, 0.6], [0, 1, 0, 1])
    assert bootstrap_ci(scored, lambda s: 0.5, n_resamples=50, seed=1) == (0.5, 0.5)


def test_bootstrap_with_one_resample():
    scored = scored_from([0.2, 0.8, 0.4, 0.6, 0.3], [0, 1, 0, 1, 1])
    low, high = bootstrap_ci(scored, "auc", n_resamples=1, seed=3)
    assert low == high


def test_bootstrap_is_deterministic():
    rng = np.random.default_rng(5)
    p_pos, labels = random_instance(rng)
    scored = scored_from(p_pos, labels)
    assert bootstrap_ci(scored, "auc", 200, seed=9) == bootstrap_ci(scored, "auc", 200, seed=9)


def test_bootstrap_named_and_callable_metrics_agree():
    rng = np.random.default_rng(6)
    p_pos, labels = random_instance(rng)
    scored = scored_from(p_pos, labels)
    assert bootstrap_ci(scored, "auc", 100, seed=2) == bootstrap_ci(scored, auc_roc, 100, seed=2)


@pytest.mark.parametrize("seed", range(10))
def test_bootstrap_auc_on_separated_scores(seed):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=500)
    logits = rng.normal(loc=np.where(labels == 1, 1.5, -1.5))
    scored = scored_from(1.0 / (1.0 + np.exp(-logits)), labels)
    point = auc_roc(scored)
    low, high = bootstrap_ci(scored, "auc", n_resamples=300, seed=seed)
    assert high - low < 0.15
    assert low <= point <= high


def test_bootstrap_single_class_data_is_degenerate():
    with pytest.raises(DegenerateDataError):
        bootstrap_ci(scored_from([0.2, 0.3, 0.4], [0, 0, 0]), lambda s: 0.0, n_resamples=5)


def test_bootstrap_by_group():
    scored = scored_from([0.1, 0.2, 0.8, 0.9, 0.3, 0.7], [0, 0, 1, 1, 0, 1])
    groups = [0, 0, 1, 1, 2, 2]
    low, high = bootstrap_ci(scored, "auc", n_resamples=100, seed=4, groups=groups)
    assert 0.0 <= low <= high <= 1.0


def test_bootstrap_values_ci_bounds():
    low, high = bootstrap_values_ci([0.6, 0.62, 0.65, 0.7, 0.71], n_resamples=500, seed=0)
    assert 0.6 <= low <= high <= 0.71


def test_evaluate_scored_report():
    rng = np.random.default_rng(7)
    labels = rng.integers(0, 2, size=200)
    scored = scored_from(np.clip(0.5 + 0.3 * (labels - 0.5) + rng.normal(0, 0.2, 200), 0.01, 0.99), labels)
    report = evaluate_scored(scored, n_resamples=100, seed=1)
    assert report.auc == auc_roc(scored)
    assert (report.se, report.sp) == se_sp_at_tau(scored, 0.0)
    assert (report.se_at_80sp, report.tau) == se_at_target_sp(scored, 0.8)
    for name, (low, high) in report.ci.items():
        assert 0.0 <= low <= high <= 1.0, name

    text = format_report(report, "test")
    assert "SE@80%SP" in text
    assert "95% CI" in text


def test_unknown_metric_name():
    with pytest.raises(UndefinedMetricError):
        get_metric("f1")


@pytest.mark.parametrize("p_pos, p_neg", [(1.5, -0.5), (-0.25, 1.25)])
def test_scored_sample_probabilities_in_unit_interval(p_pos, p_neg):
    with pytest.raises(ValueError):
        ScoredSample(p_pos=p_pos, p_neg=p_neg, label=0)


@pytest.mark.parametrize("target", [0.0, 1.0, 1.2, -0.1])
def test_se_at_target_sp_rejects_target_outside_open_interval(target):
    scored = scored_from([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
    with pytest.raises(ValueError):
        se_at_target_sp(scored, target)
