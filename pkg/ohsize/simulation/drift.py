"""Population simulation under coefficient drift and score-guided intervention.

Three updating strategies are compared over a sequence of epochs:

* ``NoUpdate`` keeps the score fitted at time zero.
* ``NaiveUpdate`` refits at the end of each epoch on outcomes that were
  already shaped by the interventions the previous score triggered.
* ``HoldoutUpdate(h)`` withholds intervention from ``h`` random samples at the
  final timepoint of each epoch and refits on those samples only.

Treatment lowers the risk-increasing values of the modifiable covariates
only, so a score refitted on intervened outcomes underrates exactly the risk
factors treatment works on. The cost at a timepoint is the sum of
post-intervention true risks.
"""
from __future__ import annotations

import logging
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import linalg
from scipy.special import expit

from ohsize.simulation.learner import LogisticLearner, RiskScorer, treat_top
from ohsize.types.simulation import DominanceBoundInputs, PopulationConfig, StrategyKind
from ohsize.utils.random import spawn_generators

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["t", "strategy", "cost"]
AUDIT_COLUMNS = ["t", "strategy", "treated", "holdout", "holdout_treated"]
BASE_COEF_SCALE = 0.3
LATENT_COEF = 1.0
PATH_JITTER = 1e-8


def dominance_delta_bounds(inputs: DominanceBoundInputs) -> Tuple[float, float]:
    """Time horizons below which a holdout-updated score stays ahead.

    Returns ``(delta_l1, delta_l2)``; a bound is ``inf`` when its denominator
    vanishes (no drift in either the risk function or the covariate law).
    """
    alpha, alpha2 = inputs.alpha_lip, inputs.alpha2
    l1: List[float] = []
    l2: List[float] = []
    for gamma, kappa in ((inputs.gamma1, inputs.kappa1), (inputs.gamma2, inputs.kappa2)):
        denominator = 2 * alpha + gamma * alpha2
        l1.append(gamma * kappa / denominator if denominator > 0 else np.inf)
        if alpha == 0:
            l2.append(np.inf)
            continue
        a_term = 2 * alpha**2 + alpha2 * gamma**2
        l2.append((np.sqrt(a_term**2 + 4 * alpha2 * gamma**2 * kappa) - a_term) / (2 * alpha**2))
    return float(min(l1)), float(min(l2))


class DriftProcess:
    """Logistic true-risk function whose coefficients drift smoothly in time.

    Coefficient paths are sampled on the timepoint grid from a squared
    exponential process with a length scale of one epoch and linearly
    interpolated in between. Times are measured in epochs.
    """

    def __init__(self, times: np.ndarray, paths: np.ndarray, intercept: float) -> None:
        self.times = np.asarray(times, dtype=float)
        self.paths = np.asarray(paths, dtype=float)
        self.intercept = float(intercept)

    @classmethod
    def sample(cls, config: PopulationConfig, rng: np.random.Generator) -> "DriftProcess":
        n_coef = config.n_visible + config.n_latent
        times = np.arange(config.timepoints) / config.timepoints_per_epoch
        base = rng.normal(0.0, BASE_COEF_SCALE, size=n_coef)
        base[config.n_visible :] = LATENT_COEF
        gap = times[:, None] - times[None, :]
        kernel = np.exp(-0.5 * gap**2) + PATH_JITTER * np.eye(times.size)
        chol = linalg.cholesky(kernel, lower=True)
        drift = chol @ rng.standard_normal((times.size, n_coef))
        return cls(times, base + config.drift_scale * drift, config.intercept)

    def coefficients(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, column) for column in self.paths.T])

    def risk(self, covariates: np.ndarray, t: float) -> np.ndarray:
        return expit(self.intercept + covariates @ self.coefficients(t))


def intervene(
    covariates: np.ndarray,
    coefficients: np.ndarray,
    treated: np.ndarray,
    effect: float,
    modifiable: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Shrink the modifiable risk-increasing covariate contributions of treated samples.

    ``modifiable`` flags the columns an intervention can act on; all columns
    when omitted.
    """
    columns = np.ones(covariates.shape[1], dtype=bool) if modifiable is None else np.asarray(modifiable, dtype=bool)
    shrink = treated[:, None] & columns[None, :] & (covariates * coefficients > 0)
    return np.where(shrink, covariates * (1.0 - effect), covariates)


def default_strategies(config: PopulationConfig) -> List[StrategyKind]:
    return [
        StrategyKind(tag="NoUpdate"),
        StrategyKind(tag="NaiveUpdate"),
        *(StrategyKind(tag="HoldoutUpdate", holdout_size=size) for size in config.holdout_sizes),
    ]


def simulate_dominance(
    config: PopulationConfig,
    learner: Optional[LogisticLearner] = None,
) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """Cost traces (``t,strategy,cost``) and the per-timepoint intervention audit.

    One population is followed through every timepoint; only the risk
    function, the outcome draws and the holdout membership change over time.
    """
    learner = learner or LogisticLearner()
    strategies = default_strategies(config)
    n_coef = config.n_visible + config.n_latent
    visible = slice(0, config.n_visible)
    modifiable = np.asarray(config.modifiable, dtype=bool)
    drift_rng, population_rng, *step_rngs = spawn_generators(config.seed, config.timepoints + 2)
    process = DriftProcess.sample(config, drift_rng)

    covariates = population_rng.standard_normal((config.population_size, n_coef))
    initial_outcome = population_rng.random(config.population_size) < process.risk(covariates, 0.0)
    initial_score = learner.fit(covariates[:, visible], initial_outcome)
    scorers: Dict[str, RiskScorer] = {strategy.label: initial_score for strategy in strategies}

    trace: List[Tuple[int, str, float]] = []
    audit: List[Tuple[int, str, int, int, int]] = []
    for t, rng in enumerate(step_rngs):
        uniforms = rng.random(config.population_size)
        order = rng.permutation(config.population_size)
        epoch_end = (t + 1) % config.timepoints_per_epoch == 0
        refit = epoch_end and t < config.timepoints - 1
        time = t / config.timepoints_per_epoch
        coefficients = process.coefficients(time)
        for strategy in strategies:
            holdout = np.zeros(config.population_size, dtype=bool)
            if strategy.tag == "HoldoutUpdate" and epoch_end:
                holdout[order[: strategy.holdout_size]] = True
            scores = scorers[strategy.label].predict_risk(covariates[:, visible])
            treated = treat_top(scores, config.treat_fraction, eligible=~holdout)
            post = intervene(covariates, coefficients, treated, config.intervention_effect, modifiable)
            risk = expit(process.intercept + post @ coefficients)
            trace.append((t, strategy.label, float(risk.sum())))
            audit.append((t, strategy.label, int(treated.sum()), int(holdout.sum()), int((treated & holdout).sum())))
            if not refit or strategy.tag == "NoUpdate":
                continue
            # Outcomes follow the intervened covariates; the score is refitted on the recorded ones.
            outcome = uniforms < risk
            train = holdout if strategy.tag == "HoldoutUpdate" else np.ones_like(holdout)
            scorers[strategy.label] = learner.fit(covariates[train][:, visible], outcome[train])
            logger.debug("t=%d: refitted %s on %d samples", t, strategy.label, int(train.sum()))
    logger.info("simulated %d timepoints for %d strategies", config.timepoints, len(strategies))
    return pd.DataFrame(trace, columns=TRACE_COLUMNS), pd.DataFrame(audit, columns=AUDIT_COLUMNS)


def post_update_means(trace: pd.DataFrame, config: PopulationConfig) -> pd.Series:
    """Mean cost per strategy from the first refit onwards."""
    later = trace[trace["t"] >= config.timepoints_per_epoch]
    return later.groupby("strategy", sort=False)["cost"].mean()


def holdout_spikes(trace: pd.DataFrame, label: str, config: PopulationConfig) -> List[bool]:
    """Per epoch, whether the holdout timepoint costs more than the trend of the timepoints before it.

    The trend is the linear extrapolation from the two preceding timepoints,
    or the single preceding cost when the epoch is shorter than three.
    """
    costs = trace.loc[trace["strategy"] == label].set_index("t")["cost"]
    spikes: List[bool] = []
    for t in range(config.timepoints_per_epoch - 1, config.timepoints, config.timepoints_per_epoch):
        if t == 0:
            continue
        expected = 2 * costs[t - 1] - costs[t - 2] if config.timepoints_per_epoch >= 3 else costs[t - 1]
        spikes.append(bool(costs[t] > expected))
    return spikes


def holdout_spike_fraction(trace: pd.DataFrame, label: str, config: PopulationConfig) -> float:
    """Share of epochs whose holdout timepoint spikes above the preceding trend."""
    spikes = holdout_spikes(trace, label, config)
    return float(np.mean(spikes)) if spikes else 0.0
