"""Pre-eclampsia screening worked example.

A synthetic cohort with ASPRE-like covariates is calibrated so that its true
risk matches the published prevalence and top-decile event rate. The learning
curve of a logistic score fitted on ``n`` samples gives the event rate among
the top decile it selects, which maps to k2(n); both OHS algorithms then run
against that oracle with the population constants of the scenario.
"""
from __future__ import annotations

import logging
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import joblib
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field
from scipy import optimize
from scipy.special import expit

from ohsize.config import worker_count
from ohsize.errors import CalibrationError, DomainError, FitFailureError, InsufficientDataError
from ohsize.estimators.emulator import run_emulation_algorithm
from ohsize.estimators.parametric import (
    ParametricConfig,
    fit_power_law,
    pooled_residual_variance,
    run_parametric_algorithm,
)
from ohsize.services.oracle import CostOracle, Estimate, ReplayOracle
from ohsize.simulation.learner import LogisticLearner, treat_top
from ohsize.types.aspre import AspreParams, SyntheticCohort
from ohsize.types.emulation import GPConfig
from ohsize.types.observations import ObservationSet
from ohsize.types.result import OHSResult
from ohsize.utils.random import SeedLike, derive_int_seed, generator, spawn_seeds

logger = logging.getLogger(__name__)

TARGET_SENSITIVITY = 0.123
PREVALENCE_TOLERANCE = 0.002
SENSITIVITY_TOLERANCE = 0.01
TOP_FRACTION = 0.1
MIN_COHORT = 1000
TRAIN_SHARE = 0.8
DESIGN_RANGE = (500, 30_000)
CANDIDATE_RANGE = (500, 40_000)
CANDIDATE_COUNT = 80
DEFAULT_COHORT_SIZE = 50_000
EMULATOR_SIGMA_U2 = 1e4
EMULATOR_ZETA = 5000.0
ERROR_SET_ALPHA = 0.9

FEATURE_NAMES = (
    "age",
    "weight",
    "mean_arterial_pressure",
    "uterine_pi_mom",
    "pappa_mom",
    "plgf_mom",
    "chronic_hypertension",
    "previous_pe",
    "afro_caribbean",
    "conception_ivf",
)

# Log-odds weights of the uncalibrated risk index, one per feature.
INDEX_WEIGHTS = np.array([0.04, 0.02, 0.06, 1.6, -0.5, -1.0, 1.5, 1.2, 0.6, 0.4])

Algo = Literal["parametric", "emulation"]


def baseline_cost_k1(params: AspreParams) -> Tuple[float, float]:
    """k1 = pi0 (1 - pi) + pi1 pi alpha with its first-order standard error."""
    pi, pi0, pi1, alpha = params.pi, params.pi0, params.pi1, params.alpha_aspirin
    k1 = pi0 * (1 - pi) + pi1 * pi * alpha
    se = float(
        np.sqrt(
            ((1 - pi) * params.pi0_se) ** 2
            + (pi * alpha * params.pi1_se) ** 2
            + (pi * pi1 * params.alpha_se) ** 2
        )
    )
    return float(k1), se


def _check_rate(pi1: float) -> float:
    if not 0.0 <= pi1 <= 1.0:
        raise DomainError(f"top-decile event rate must lie in [0, 1], got {pi1}")
    return float(pi1)


def pi0_from_sensitivity(pi1: float, params: AspreParams) -> float:
    """Untreated event rate outside the treated group implied by pi1 and the prevalence."""
    return (params.pi_pre - params.pi * _check_rate(pi1)) / (1 - params.pi)


def k2_from_sensitivity(n: int, sens_fn: Callable[[int], float], params: AspreParams) -> float:
    """k2(n) = pi_pre - pi pi1(n) (1 - alpha)."""
    pi1 = _check_rate(sens_fn(n))
    return params.pi_pre - params.pi * pi1 * (1 - params.alpha_aspirin)


def k2_from_mse(mse: float, coefficients: Tuple[float, float]) -> float:
    c0, c2 = coefficients
    if mse < 0 or c2 < 0:
        raise DomainError("mse and slope must be non-negative")
    return c0 + c2 * mse


def fit_k2_mse(mse: Sequence[float], k2: Sequence[float]) -> Tuple[float, float]:
    """Least-squares (c0, c2) for k2 = c0 + c2 * mse."""
    x, y = np.asarray(mse, dtype=float), np.asarray(k2, dtype=float)
    if x.size < 2 or np.unique(x).size < 2:
        raise InsufficientDataError("need at least two observations with distinct mse")
    slope, intercept = np.polyfit(x, y, deg=1)
    return float(intercept), float(slope)


def _draw_covariates(size: int, rng: np.random.Generator) -> np.ndarray:
    age = np.clip(rng.normal(31.0, 5.5, size), 16, 50)
    weight = rng.lognormal(np.log(68.0), 0.2, size)
    # Blood pressure rises with weight.
    pressure = 85.0 + 0.15 * (weight - 68.0) + rng.normal(0.0, 7.5, size)
    uterine = rng.lognormal(0.0, 0.25, size)
    pappa = rng.lognormal(0.0, 0.45, size)
    plgf = np.exp(0.3 * np.log(pappa) + rng.normal(0.0, 0.35, size))
    flags = rng.random((size, 4)) < np.array([0.015, 0.03, 0.1, 0.03])
    return np.column_stack([age, weight, pressure, uterine, pappa, plgf, flags.astype(float)])


def _risk_index(covariates: np.ndarray) -> np.ndarray:
    logged = covariates.copy()
    logged[:, 3:6] = np.log(logged[:, 3:6])
    logged[:, :3] -= np.array([31.0, 68.0, 85.0])
    index = logged @ INDEX_WEIGHTS
    return (index - index.mean()) / index.std()


def _calibrate(index: np.ndarray, top: np.ndarray, prevalence: float) -> Tuple[float, float]:
    def intercept_for(slope: float) -> float:
        return optimize.brentq(lambda a: expit(a + slope * index).mean() - prevalence, -40.0, 20.0)

    def top_gap(slope: float) -> float:
        return expit(intercept_for(slope) + slope * index[top]).mean() - TARGET_SENSITIVITY

    slope = optimize.brentq(top_gap, 1e-3, 10.0, xtol=1e-10)
    return intercept_for(slope), slope


def generate_cohort(size: int = DEFAULT_COHORT_SIZE, seed: int = 0, params: Optional[AspreParams] = None) -> SyntheticCohort:
    """Synthetic cohort whose true risk hits the target prevalence and top-decile rate."""
    if size < MIN_COHORT:
        raise DomainError(f"cohort size must be at least {MIN_COHORT}, got {size}")
    prevalence = (params or AspreParams()).pi_pre
    rng = generator(seed)
    covariates = _draw_covariates(size, rng)
    index = _risk_index(covariates)
    top = np.argsort(-index, kind="stable")[: int(round(TOP_FRACTION * size))]
    try:
        intercept, slope = _calibrate(index, top, prevalence)
    except ValueError as exc:
        achieved = {"prevalence": float(expit(index).mean()), "top_rate": float(expit(index[top]).mean())}
        raise CalibrationError(f"risk calibration did not converge: {exc}", achieved=achieved) from exc
    risk = expit(intercept + slope * index)
    achieved = {"prevalence": float(risk.mean()), "top_rate": float(risk[top].mean())}
    if (
        abs(achieved["prevalence"] - prevalence) > PREVALENCE_TOLERANCE
        or abs(achieved["top_rate"] - TARGET_SENSITIVITY) > SENSITIVITY_TOLERANCE
    ):
        raise CalibrationError("calibrated risk misses its targets", achieved=achieved)
    outcome = rng.random(size) < risk
    logger.info("cohort of %d: prevalence %.4f, top-decile rate %.4f", size, *achieved.values())
    return SyntheticCohort(covariates, risk, outcome.astype(int), seed, FEATURE_NAMES)


class LearningCurvePoint(BaseModel):
    n: int
    sensitivity: float = Field(description="Mean true risk among the top decile selected by the score")
    variance: float = Field(description="Sampling variance of the sensitivity estimate")
    mse: float = Field(description="Mean squared error of the score against the true risk")
    replicates: int


def _one_fit(cohort: SyntheticCohort, n: int, seed: np.random.SeedSequence) -> Tuple[float, float, float]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(cohort))
    train, rest = order[:n], order[n:]
    scorer = LogisticLearner().fit(cohort.covariates[train], cohort.outcome[train])
    scores = scorer.predict_risk(cohort.covariates[rest])
    selected = cohort.risk[rest][treat_top(scores, TOP_FRACTION)]
    sensitivity = float(selected.mean())
    within = float(selected.var(ddof=1) / selected.size) if selected.size > 1 else 0.0
    mse = float(np.mean((scores - cohort.risk[rest]) ** 2))
    return sensitivity, within, mse


def learning_curve_point(
    cohort: SyntheticCohort,
    n: int,
    replicates: int = 10,
    seed: SeedLike = None,
    n_jobs: Optional[int] = None,
) -> LearningCurvePoint:
    """Score quality after training on ``n`` samples, averaged over replicate subsamples.

    With a single replicate the variance is the within-sample variance of the
    selected risks divided by their count.
    """
    if not 1 <= n <= TRAIN_SHARE * len(cohort):
        raise DomainError(f"n must lie in 1..{int(TRAIN_SHARE * len(cohort))}, got {n}")
    if replicates < 1:
        raise DomainError("replicates must be at least 1")
    fits = joblib.Parallel(n_jobs=n_jobs or worker_count())(
        joblib.delayed(_one_fit)(cohort, n, child) for child in spawn_seeds(seed, replicates)
    )
    values = np.array(fits)
    if replicates > 1:
        variance = float(values[:, 0].var(ddof=1) / replicates)
    else:
        variance = float(values[0, 1])
    return LearningCurvePoint(
        n=n,
        sensitivity=float(values[:, 0].mean()),
        variance=variance,
        mse=float(values[:, 2].mean()),
        replicates=replicates,
    )


def learning_curve_sensitivity(
    cohort: SyntheticCohort, n: int, replicates: int = 10, seed: SeedLike = None
) -> Tuple[float, float]:
    point = learning_curve_point(cohort, n, replicates=replicates, seed=seed)
    return point.sensitivity, point.variance


class CohortOracle(CostOracle):
    """k2(n) (or total cost) estimates from learning curves on a synthetic cohort."""

    def __init__(
        self,
        cohort: SyntheticCohort,
        params: AspreParams,
        seed: SeedLike = None,
        replicates: int = 1,
        target: Literal["k2", "cost"] = "k2",
        k1: Optional[float] = None,
        max_calls: Optional[int] = None,
    ) -> None:
        super().__init__(max_calls=max_calls)
        self._cohort = cohort
        self._params = params
        self._seed = seed
        self._replicates = replicates
        self._target = target
        self._k1 = k1 if k1 is not None else baseline_cost_k1(params)[0]
        self._variance_override: Optional[float] = None

    def pool_variance(self, variance: float) -> None:
        """Report ``variance`` for every later k2 estimate instead of the per-call one."""
        self._variance_override = variance

    def _evaluate(self, n: int, call_index: int) -> Estimate:
        point = learning_curve_point(
            self._cohort, n, replicates=self._replicates, seed=derive_int_seed(self._seed, call_index), n_jobs=1
        )
        scale = self._params.pi * (1 - self._params.alpha_aspirin)
        k2 = k2_from_sensitivity(n, lambda _: point.sensitivity, self._params)
        variance = self._variance_override or max(scale**2 * point.variance, 1e-12)
        if self._target == "k2":
            return k2, variance
        remaining = self._params.N - n
        return self._k1 * n + k2 * remaining, variance * remaining**2


def _candidates() -> List[int]:
    return np.unique(np.rint(np.linspace(*CANDIDATE_RANGE, CANDIDATE_COUNT)).astype(int)).tolist()


def run_aspre_pipeline(
    cohort_seed: int = 0,
    algo: Algo = "parametric",
    initial: int = 20,
    sequential: int = 100,
    seed: int = 0,
    params: Optional[AspreParams] = None,
    cohort_size: int = DEFAULT_COHORT_SIZE,
) -> Tuple[OHSResult, pd.DataFrame, Dict[str, Any]]:
    """Estimate the screening OHS with either algorithm.

    The initial design draws ``initial`` sizes uniformly from 500..30000. A
    power-law fit to those k2 estimates supplies the pooled residual variance
    used for every observation and, for the emulator, the prior mean. Costs are
    expected cases over one epoch of N pregnancies.
    """
    params = params or AspreParams()
    if initial < 3 or sequential < 0:
        raise DomainError("need at least 3 initial sizes and a non-negative sequential budget")
    cohort = generate_cohort(cohort_size, cohort_seed, params)
    k1, k1_se = baseline_cost_k1(params)
    N = int(round(params.N))
    design_seed, oracle_seed, algo_seed = spawn_seeds(seed, 3)
    design = generator(design_seed).integers(DESIGN_RANGE[0], DESIGN_RANGE[1] + 1, size=initial).tolist()
    candidates = _candidates()

    oracle = CohortOracle(cohort, params, seed=oracle_seed, k1=k1)
    pilot = [oracle(n) for n in design]
    pilot_obs = ObservationSet(sizes=design, values=[v for v, _ in pilot], variances=[s for _, s in pilot], N=N)
    try:
        pilot_fit = fit_power_law(pilot_obs, k1=k1, N=N, k1_se=k1_se, N_se=params.N_se)
    except FitFailureError as exc:
        raise FitFailureError(f"pilot fit on the initial design failed: {exc}", diagnostics=exc.diagnostics) from exc
    sigma2 = pooled_residual_variance(pilot_obs, pilot_fit)
    oracle.pool_variance(sigma2)
    logger.info("pilot fit theta=%s, pooled variance %.3g", pilot_fit.theta.as_array(), sigma2)

    algo_int_seed = derive_int_seed(algo_seed, 0)
    if algo == "parametric":
        config = ParametricConfig(
            initial_design=design,
            total_iterations=sequential,
            k1=k1,
            N=N,
            k1_se=k1_se,
            N_se=params.N_se,
            candidates=candidates,
            seed=algo_int_seed,
            sigma_new=sigma2,
            refresh_final=True,
        )
        replay = ReplayOracle([(value, sigma2) for value, _ in pilot], oracle)
        result, trace = run_parametric_algorithm(replay, config)
    elif algo == "emulation":
        oracle = CohortOracle(cohort, params, seed=derive_int_seed(oracle_seed, 1), target="cost", k1=k1)
        oracle.pool_variance(sigma2)
        gp = GPConfig(
            prior_theta=pilot_fit.theta,
            prior_k1=k1,
            prior_N=N,
            sigma_u2=EMULATOR_SIGMA_U2,
            zeta=EMULATOR_ZETA,
            tau=0.0,
            alpha=ERROR_SET_ALPHA,
        )
        recorded = [(k1 * n + value * (N - n), sigma2 * (N - n) ** 2) for n, (value, _) in zip(design, pilot)]
        replay = ReplayOracle(recorded, oracle)
        result, trace, _ = run_emulation_algorithm(
            replay, gp, design, max_iterations=sequential, seed=algo_int_seed, candidates=candidates
        )
    else:
        raise DomainError(f"unknown algorithm {algo!r}")

    summary = {
        "ohs": result.n_star,
        "cost": result.min_cost,
        "ci_or_error_set": result.uncertainty.to_json_dict() if result.uncertainty is not None else None,
        "algo": algo,
        "seeds": {"cohort_seed": cohort_seed, "seed": seed},
    }
    return result, trace, summary
