import math

import numpy as np
import pandas as pd
import pytest

from ohsize.simulation.drift import (
    AUDIT_COLUMNS,
    LATENT_COEF,
    TRACE_COLUMNS,
    DriftProcess,
    dominance_delta_bounds,
    holdout_spike_fraction,
    holdout_spikes,
    intervene,
    post_update_means,
    simulate_dominance,
)
from ohsize.types.simulation import DominanceBoundInputs, PopulationConfig


def _small(**overrides):
    settings = dict(
        population_size=500,
        n_visible=3,
        n_latent=1,
        timepoints_per_epoch=3,
        epochs=2,
        holdout_sizes=[100],
        seed=7,
    )
    settings.update(overrides)
    return PopulationConfig(**settings)


def _bounds_by_hand(g1, k1, g2, k2, alpha, alpha2):
    l1 = min(g1 * k1 / (2 * alpha + g1 * alpha2), g2 * k2 / (2 * alpha + g2 * alpha2))

    def l2(gamma, kappa):
        quad = 2 * alpha**2 + alpha2 * gamma**2
        return (math.sqrt(quad**2 + 4 * alpha2 * gamma**2 * kappa) - quad) / (2 * alpha**2)

    return l1, min(l2(g1, k1), l2(g2, k2))


def test_delta_bounds_example():
    inputs = DominanceBoundInputs(gamma1=0.2, kappa1=0.5, gamma2=0.3, kappa2=0.5, alpha_lip=1.0, alpha2=0.1)
    l1, _ = dominance_delta_bounds(inputs)
    assert l1 == pytest.approx(0.1 / 2.02)
    assert l1 == pytest.approx(0.0495, abs=1e-4)


def test_delta_bounds_symmetric_inputs():
    inputs = DominanceBoundInputs(gamma1=0.5, kappa1=0.5, gamma2=0.5, kappa2=0.5, alpha_lip=1.0, alpha2=1.0)
    l1, l2 = dominance_delta_bounds(inputs)
    assert l1 == pytest.approx(0.25 / 2.5)
    assert l2 == pytest.approx((math.sqrt(2.25**2 + 0.5) - 2.25) / 2)


def test_delta_bounds_without_drift_are_infinite():
    inputs = DominanceBoundInputs(gamma1=0.2, kappa1=0.5, gamma2=0.3, kappa2=0.5, alpha_lip=0.0, alpha2=0.0)
    assert dominance_delta_bounds(inputs) == (math.inf, math.inf)


def test_delta_bounds_match_direct_evaluation():
    rng = np.random.default_rng(0)
    for _ in range(100):
        g1, g2 = rng.uniform(0.01, 2.0, 2)
        k1, k2 = rng.uniform(0.01, 1.0, 2)
        alpha, alpha2 = rng.uniform(0.01, 3.0, 2)
        inputs = DominanceBoundInputs(gamma1=g1, kappa1=k1, gamma2=g2, kappa2=k2, alpha_lip=alpha, alpha2=alpha2)
        expected = _bounds_by_hand(g1, k1, g2, k2, alpha, alpha2)
        assert dominance_delta_bounds(inputs) == pytest.approx(expected, rel=1e-12)


def test_drift_paths_are_smooth_and_anchor_latent_coefficient():
    config = _small(timepoints_per_epoch=10, epochs=5, drift_scale=0.5)
    process = DriftProcess.sample(config, np.random.default_rng(1))
    assert process.paths.shape == (50, 4)
    step = 1 / config.timepoints_per_epoch
    assert np.abs(np.diff(process.paths, axis=0)).max() <= 5 * config.drift_scale * step

    still = DriftProcess.sample(_small(drift_scale=0.0), np.random.default_rng(1))
    assert np.all(still.paths[:, 3] == LATENT_COEF)
    assert np.allclose(still.paths, still.paths[0])


def test_coefficients_interpolate_between_timepoints():
    process = DriftProcess(np.array([0.0, 1.0]), np.array([[0.0, 2.0], [1.0, 4.0]]), intercept=0.0)
    assert process.coefficients(0.5).tolist() == [0.5, 3.0]
    assert process.risk(np.zeros((2, 2)), 0.5).tolist() == [0.5, 0.5]


def test_intervene_shrinks_only_risk_increasing_terms_of_treated():
    covariates = np.array([[1.0, -1.0], [1.0, 1.0]])
    coefficients = np.array([2.0, 1.0])
    treated = np.array([True, False])
    shrunk = intervene(covariates, coefficients, treated, effect=0.5)
    assert shrunk.tolist() == [[0.5, -1.0], [1.0, 1.0]]


def test_trace_and_audit_layout():
    config = _small()
    trace, audit = simulate_dominance(config)
    assert list(trace.columns) == TRACE_COLUMNS
    assert list(audit.columns) == AUDIT_COLUMNS
    assert len(trace) == config.timepoints * 3
    assert set(trace["strategy"]) == {"NoUpdate", "NaiveUpdate", "HoldoutUpdate(100)"}


def test_holdout_samples_never_treated():
    config = _small()
    _, audit = simulate_dominance(config)
    assert (audit["holdout_treated"] == 0).all()
    holdout = audit[audit["strategy"] == "HoldoutUpdate(100)"].set_index("t")
    assert holdout.loc[[2, 5], "holdout"].tolist() == [100, 100]
    assert holdout.loc[[2, 5], "treated"].tolist() == [40, 40]
    assert (holdout.drop(index=[2, 5])["holdout"] == 0).all()
    assert (audit[audit["strategy"] != "HoldoutUpdate(100)"]["treated"] == 50).all()


def test_without_intervention_strategies_cost_the_same():
    trace, _ = simulate_dominance(_small(intervention_effect=0.0))
    spread = trace.groupby("t")["cost"].agg(lambda c: c.max() - c.min())
    assert np.allclose(spread, 0.0)


def test_simulation_is_deterministic():
    first, _ = simulate_dominance(_small())
    second, _ = simulate_dominance(_small())
    pd.testing.assert_frame_equal(first, second)


@pytest.mark.parametrize("seed", range(10))
def test_intervention_never_raises_cost(seed):
    treated, _ = simulate_dominance(_small(seed=seed, intervention_effect=0.5))
    untreated, _ = simulate_dominance(_small(seed=seed, intervention_effect=0.0))
    assert np.all(untreated["cost"].to_numpy() >= treated["cost"].to_numpy() - 1e-9)


def test_post_update_means_skip_first_epoch():
    config = _small()
    trace = pd.DataFrame(
        {"t": [0, 3, 4, 0, 3, 4], "strategy": ["A"] * 3 + ["B"] * 3, "cost": [100.0, 2.0, 4.0, 100.0, 6.0, 8.0]}
    )
    means = post_update_means(trace, config)
    assert means.to_dict() == {"A": 3.0, "B": 7.0}


def test_holdout_spike_fraction_counts_epoch_ends():
    config = _small()
    trace = pd.DataFrame({"t": range(6), "strategy": "H", "cost": [1.0, 1.0, 2.0, 1.0, 1.0, 0.5]})
    assert holdout_spike_fraction(trace, "H", config) == pytest.approx(0.5)


def test_holdout_spikes_follow_preceding_trend():
    config = _small()
    rising = pd.DataFrame({"t": range(6), "strategy": "H", "cost": [1.0, 2.0, 3.5, 4.0, 5.0, 5.5]})
    assert holdout_spikes(rising, "H", config) == [True, False]


def test_modifiable_flags_cover_leading_visible_and_latent_columns():
    config = PopulationConfig(n_visible=4, n_latent=1, modifiable_share=0.5)
    assert config.modifiable == [True, True, False, False, True]
    assert PopulationConfig(n_visible=4, n_latent=0, modifiable_share=0.0).modifiable == [False] * 4


def test_intervene_leaves_unmodifiable_columns():
    covariates = np.array([[1.0, 2.0, 3.0]])
    coefficients = np.array([1.0, 1.0, 1.0])
    shrunk = intervene(covariates, coefficients, np.array([True]), 1.0, modifiable=np.array([True, False, True]))
    assert shrunk.tolist() == [[0.0, 2.0, 0.0]]


def test_holdout_update_dominates_across_seeds():
    wins = 0
    spikes = []
    for seed in range(20):
        config = PopulationConfig(seed=seed)
        trace, _ = simulate_dominance(config)
        means = post_update_means(trace, config)
        if means["HoldoutUpdate(2000)"] < min(means["NoUpdate"], means["NaiveUpdate"]):
            wins += 1
        spikes.extend(holdout_spikes(trace, "HoldoutUpdate(2000)", config))
    assert wins >= 18
    assert np.mean(spikes) >= 0.8
