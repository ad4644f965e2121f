"""Empirical k2 and total-cost curves from a simulated logistic population."""
from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple

import joblib
import numpy as np
import pandas as pd
from scipy.special import expit
from sklearn.preprocessing import PolynomialFeatures

from ohsize.config import worker_count
from ohsize.errors import DomainError
from ohsize.simulation.learner import LogisticLearner, expected_sample_cost, per_sample_cost, treat_top
from ohsize.types.observations import ObservationSet
from ohsize.types.simulation import CostStructureConfig
from ohsize.utils.random import SeedLike, spawn_seeds

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ["n", "k2_mean", "k2_sd", "replicates"]
MAIN_EFFECT_SCALE = 0.8
INTERACTION_SCALE = 0.4
MIN_VARIANCE = 1e-12


def _design(covariates: np.ndarray, interactions: bool) -> np.ndarray:
    if not interactions:
        return covariates
    return PolynomialFeatures(degree=2, interaction_only=True, include_bias=False).fit_transform(covariates)


def _ground_truth(config: CostStructureConfig, rng: np.random.Generator) -> np.ndarray:
    n_terms = _design(np.zeros((1, config.n_covariates)), config.interactions).shape[1]
    coef = np.empty(n_terms)
    coef[: config.n_covariates] = rng.normal(0.0, MAIN_EFFECT_SCALE, size=config.n_covariates)
    coef[config.n_covariates :] = rng.normal(0.0, INTERACTION_SCALE, size=n_terms - config.n_covariates)
    return coef


def _replicate(
    config: CostStructureConfig,
    coef: np.ndarray,
    grid: np.ndarray,
    seed: np.random.SeedSequence,
) -> Tuple[float, np.ndarray]:
    rng = np.random.default_rng(seed)
    size = config.population_size
    covariates = rng.standard_normal((size, config.n_covariates))
    risk = expit(config.intercept + _design(covariates, config.interactions) @ coef)
    outcome = rng.random(size) < risk
    # Baseline care treats a random treat_fraction of the population.
    prevalence = float(risk.mean()) if config.expected_cost else float(outcome.mean())
    k1 = config.treat_fraction * 0.5 + (1 - config.treat_fraction) * prevalence
    learner = LogisticLearner(interactions=config.interactions and config.matched_learner)
    k2 = np.empty(grid.size)
    for i, n in enumerate(grid):
        order = rng.permutation(size)
        train, rest = order[:n], order[n:]
        scorer = learner.fit(covariates[train], outcome[train])
        if config.expected_cost:
            # Scores depend on covariates only; training rows keep their expected cost.
            treated = treat_top(scorer.predict_risk(covariates), config.treat_fraction)
            k2[i] = expected_sample_cost(treated, risk).mean()
            continue
        treated = treat_top(scorer.predict_risk(covariates[rest]), config.treat_fraction)
        k2[i] = per_sample_cost(treated, outcome[rest]).mean()
    return k1, k2


def simulate_cost_structure(
    config: CostStructureConfig,
    holdout_grid: Sequence[int],
    replicates: int = 10,
    seed: SeedLike = 0,
    n_jobs: Optional[int] = None,
) -> pd.DataFrame:
    """Mean and spread of k2(n) and l(n) = k1 n + k2(n)(N - n) over replicates.

    Columns: ``n, k2_mean, k2_sd, replicates, cost_mean, cost_sd``. The mean
    baseline cost rate k1 is stored in ``frame.attrs["k1"]``.
    """
    grid = np.asarray(holdout_grid, dtype=int)
    size = config.population_size
    if grid.size == 0 or grid.min() < 1 or grid.max() > size - 1:
        raise DomainError(f"holdout sizes must lie in 1..{size - 1}")
    if replicates < 1:
        raise DomainError("replicates must be at least 1")
    truth_seed, *replicate_seeds = spawn_seeds(seed, replicates + 1)
    coef = _ground_truth(config, np.random.default_rng(truth_seed))
    results = joblib.Parallel(n_jobs=n_jobs or worker_count())(
        joblib.delayed(_replicate)(config, coef, grid, child) for child in replicate_seeds
    )
    k1 = np.array([k1 for k1, _ in results])
    k2 = np.vstack([curve for _, curve in results])
    cost = k1[:, None] * grid + k2 * (size - grid)
    ddof = 1 if replicates > 1 else 0
    frame = pd.DataFrame(
        {
            "n": grid,
            "k2_mean": k2.mean(axis=0),
            "k2_sd": k2.std(axis=0, ddof=ddof),
            "replicates": replicates,
            "cost_mean": cost.mean(axis=0),
            "cost_sd": cost.std(axis=0, ddof=ddof),
        }
    )
    frame.attrs["k1"] = float(k1.mean())
    logger.info("cost structure: %d sizes x %d replicates, k1=%.4f", grid.size, replicates, frame.attrs["k1"])
    return frame


def curve_observations(frame: pd.DataFrame, N: int) -> ObservationSet:
    """Treat replicate means as k2 observations with variance sd^2 / replicates."""
    variances = np.maximum(frame["k2_sd"].to_numpy() ** 2 / frame["replicates"].to_numpy(), MIN_VARIANCE)
    return ObservationSet(
        sizes=frame["n"].astype(int).tolist(),
        values=frame["k2_mean"].astype(float).tolist(),
        variances=variances.tolist(),
        N=N,
    )


def flattening_point(frame: pd.DataFrame, tolerance: float = 1e-4) -> Optional[int]:
    """Smallest size after which the mean k2 improves by less than ``tolerance``."""
    sizes = frame["n"].to_numpy()
    gains = -np.diff(frame["k2_mean"].to_numpy())
    flat = np.flatnonzero(gains < tolerance)
    return int(sizes[flat[0]]) if flat.size else None
