"""Parametric OHS estimation with a power-law learning curve.

k2(n) = a n^(-b) + c is fitted to noisy k2 estimates by weighted least squares
(Gaussian likelihood with known variances). The OHS and its minimum cost follow
from the fitted parameters; their uncertainty comes from the delta method or a
parametric bootstrap. New sizes are added greedily where they are expected to
shrink the OHS confidence interval the most.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, Dict, List, Literal, Optional, Sequence, Tuple, Union

import joblib
import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, model_validator
from scipy import linalg, optimize, stats
from scipy.special import expit, logit

from ohsize.config import worker_count
from ohsize.core.cost_model import default_grid, find_ohs_root, k2_power_law, stationary_point, total_cost
from ohsize.errors import (
    AlgorithmFailure,
    CIUndefinedError,
    CovarianceInvalidError,
    DomainError,
    FitFailureError,
    InsufficientDataError,
    NoInteriorOHSError,
)
from ohsize.types.cost import CostParameters, PowerLawTheta
from ohsize.types.observations import ConfidenceInterval, GradientVector, ObservationSet, ResidualReport, ThetaFit
from ohsize.types.result import OHSResult
from ohsize.utils.random import SeedLike, generator, spawn_seeds

logger = logging.getLogger(__name__)

B_MAX = 10.0
DEFAULT_STARTS = 5
DEGENERATE_LIMIT = 0.5
NEXT_POINT_CANDIDATES = 50

Oracle = Callable[[int], Tuple[float, float]]
RefitMode = Literal["one_step", "full"]


# ---------------------------------------------------------------------------
# Fitting
# ---------------------------------------------------------------------------


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _softplus_inv(y: float) -> float:
    return float(y + np.log(-np.expm1(-y))) if y > 0 else -50.0


def _to_theta(u: np.ndarray) -> Tuple[float, float, float]:
    return float(np.exp(u[0])), float(B_MAX * expit(u[1])), float(_softplus(u[2]))


def _to_u(a: float, b: float, c: float) -> np.ndarray:
    b = min(max(b, 1e-6), B_MAX * (1 - 1e-9))
    return np.array([np.log(a), logit(b / B_MAX), _softplus_inv(max(c, 1e-22))])


def _k2_jacobian(n: np.ndarray, a: float, b: float) -> np.ndarray:
    """d k2 / d(a, b, c), one row per size."""
    power = n ** (-b)
    return np.column_stack([power, -a * np.log(n) * power, np.ones_like(n)])


def _initial_guess(n: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """Log-log moment estimate of (a, b, c)."""
    spread = float(y.max() - y.min())
    c0 = max(float(y.min()) - 0.05 * spread, 0.0)
    mask = y - c0 > 0
    if np.count_nonzero(mask) >= 2 and np.unique(n[mask]).size >= 2:
        slope, intercept = np.polyfit(np.log(n[mask]), np.log(y[mask] - c0), 1)
        b0 = float(np.clip(-slope, 0.05, 0.9 * B_MAX))
        a0 = float(np.exp(intercept))
    else:
        b0, a0 = 1.0, max(spread, 1e-6) * float(n.min())
    if not np.isfinite(a0) or a0 <= 0:
        a0 = max(spread, 1e-6)
    return a0, b0, c0


def _starts(n: np.ndarray, y: np.ndarray, init: Optional[PowerLawTheta], count: int) -> List[np.ndarray]:
    a0, b0, c0 = (init.a, init.b, init.c) if init is not None else _initial_guess(n, y)
    spread = float(np.ptp(y)) or 1.0
    perturbed = [
        (a0, b0, c0),
        (a0 * 10.0, b0 * 1.2, c0),
        (a0 / 10.0, b0 / 1.2, c0),
        (a0, min(b0 * 1.5, 0.9 * B_MAX), c0 * 0.5),
        (a0, b0 / 1.5, c0 + 0.1 * spread),
    ]
    if init is not None:
        perturbed.insert(1, _initial_guess(n, y))
    return [_to_u(*p) for p in perturbed[:count]]


def _weighted_information(n: np.ndarray, var: np.ndarray, a: float, b: float) -> np.ndarray:
    jac = _k2_jacobian(n, a, b) / np.sqrt(var)[:, None]
    return jac.T @ jac


def _invert_information(info: np.ndarray) -> np.ndarray:
    """Symmetric pseudo-inverse after diagonal scaling."""
    diag = np.sqrt(np.clip(np.diag(info), 1e-300, None))
    scaled = info / np.outer(diag, diag)
    inverse = linalg.pinvh(scaled) / np.outer(diag, diag)
    return 0.5 * (inverse + inverse.T)


def _boundary_warning(a: float, b: float, c: float, n: np.ndarray, y: np.ndarray) -> Optional[str]:
    notes = []
    if b > 0.99 * B_MAX:
        notes.append(f"b={b:.4g} at its upper bound {B_MAX:g}")
    if c < 1e-10:
        notes.append("c at its lower bound 0")
    if a * float(n.min()) ** (-b) < 1e-8 * max(float(np.abs(y).max()), 1e-12):
        notes.append("power-law term vanishes over the design; b is unidentifiable")
    return "; ".join(notes) or None


def fit_power_law(
    obs: ObservationSet,
    init: Optional[PowerLawTheta] = None,
    k1: float = 1.0,
    N: Optional[float] = None,
    k1_se: float = 0.0,
    N_se: float = 0.0,
    n_starts: int = DEFAULT_STARTS,
) -> ThetaFit:
    """Weighted least-squares fit of k2(n) = a n^(-b) + c.

    Levenberg-Marquardt in unconstrained coordinates a = exp(u1),
    b = 10 sigmoid(u2), c = softplus(u3), restarted from several points. The
    covariance is the inverse weighted Gauss-Newton information at the optimum.
    """
    if obs.distinct_sizes < 3:
        raise InsufficientDataError("fit_power_law needs at least 3 distinct sizes")
    n, y, var = obs.n, obs.y, obs.var
    sd = np.sqrt(var)
    N = float(N if N is not None else (obs.N or n.max() + 1))

    def residuals(u: np.ndarray) -> np.ndarray:
        a, b, c = _to_theta(u)
        return (y - (a * n ** (-b) + c)) / sd

    def jacobian(u: np.ndarray) -> np.ndarray:
        a, b, c = _to_theta(u)
        chain = np.array([a, b * (1 - b / B_MAX), expit(u[2])])
        return -(_k2_jacobian(n, a, b) * chain) / sd[:, None]

    best = None
    messages: Dict[str, str] = {}
    for idx, u0 in enumerate(_starts(n, y, init, max(n_starts, 1))):
        try:
            with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
                result = optimize.least_squares(
                    residuals, u0, jac=jacobian, method="lm", xtol=1e-12, ftol=1e-12, gtol=1e-12, max_nfev=4000
                )
        except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
            messages[f"start{idx}"] = str(exc)
            continue
        a, b, c = _to_theta(result.x)
        objective = float(np.sum(result.fun**2))
        ok = result.success and np.isfinite(objective) and a > 0 and np.isfinite(a) and b > 0
        messages[f"start{idx}"] = result.message
        if ok and (best is None or objective < best[0]):
            best = (objective, a, b, c)

    if best is None:
        raise FitFailureError("power-law fit did not converge from any start", diagnostics=messages)

    objective, a, b, c = best
    cov = _invert_information(_weighted_information(n, var, a, b))
    standardised = (y - (a * n ** (-b) + c)) / sd
    warning = _boundary_warning(a, b, c, n, y)
    if warning:
        logger.warning("power-law fit at boundary: %s", warning)
    return ThetaFit(
        theta=PowerLawTheta(a=a, b=b, c=c),
        theta_cov=cov.tolist(),
        k1=k1,
        k1_se=k1_se,
        N=N,
        N_se=N_se,
        converged=True,
        objective=objective,
        residual_report=ResidualReport(
            weighted_rss=objective,
            dof=len(obs) - 3,
            max_abs_standardised=float(np.abs(standardised).max()),
            boundary_warning=warning,
        ),
    )


def pooled_residual_variance(obs: ObservationSet, fit: ThetaFit) -> float:
    """Sample variance of k2 estimates around the fitted curve."""
    residual = obs.y - np.asarray(k2_power_law(obs.n, fit.theta))
    if residual.size < 2:
        raise InsufficientDataError("pooled variance needs at least 2 observations")
    return float(np.var(residual, ddof=1))


# ---------------------------------------------------------------------------
# Gradients of n* and l(n*)
# ---------------------------------------------------------------------------


def _unpack(source: Union[CostParameters, ThetaFit]) -> Tuple[PowerLawTheta, float, float]:
    return source.theta, float(source.k1), float(source.N)


def _ohs_partials(theta: PowerLawTheta, k1: float, N: float, n: float) -> np.ndarray:
    a, b, _ = theta.a, theta.b, theta.c
    log_n = math.log(n)
    denom = b * (b + 1) * N - b * (b - 1) * n
    d_c = n ** (b + 2) / (a * denom)
    return np.array(
        [
            (b * N * n - (b - 1) * n**2) / (a * denom),
            -(N * n * (b * log_n - 1) - n**2 * ((b - 1) * log_n - 1)) / denom,
            d_c,
            -d_c,
            b * n / denom,
        ]
    )


def _mincost_partials(theta: PowerLawTheta, N: float, n: float) -> np.ndarray:
    a, b, c = theta.a, theta.b, theta.c
    power = n ** (-b)
    return np.array([(N - n) * power, -math.log(n) * (N - n) * a * power, N - n, n, a * power + c])


def ohs_gradient(source: Union[CostParameters, ThetaFit]) -> GradientVector:
    """Partial derivatives of the continuous OHS with respect to (a, b, c, k1, N)."""
    theta, k1, N = _unpack(source)
    n_hat = stationary_point(theta, k1, N)
    return GradientVector(**dict(zip(("a", "b", "c", "k1", "N"), _ohs_partials(theta, k1, N, n_hat))))


def mincost_gradient(source: Union[CostParameters, ThetaFit]) -> GradientVector:
    """Partial derivatives of l(n*) with respect to (a, b, c, k1, N)."""
    theta, k1, N = _unpack(source)
    n_hat = stationary_point(theta, k1, N)
    return GradientVector(**dict(zip(("a", "b", "c", "k1", "N"), _mincost_partials(theta, N, n_hat))))


# ---------------------------------------------------------------------------
# Confidence intervals
# ---------------------------------------------------------------------------


def _quadratic_form(grad: np.ndarray, cov: np.ndarray) -> float:
    value = float(grad @ cov @ grad)
    scale = float(np.abs(grad) @ np.abs(cov) @ np.abs(grad))
    if value < -1e-12 * max(1.0, scale):
        raise CovarianceInvalidError(f"negative variance {value:g} from the fit covariance")
    return max(value, 0.0)


def _params_of(fit: ThetaFit) -> CostParameters:
    return CostParameters(N=int(round(fit.N)), k1=fit.k1, theta=fit.theta)


def asymptotic_ci(fit: ThetaFit, alpha: float = 0.1) -> Tuple[ConfidenceInterval, ConfidenceInterval]:
    """Delta-method intervals for n* and l(n*) at level 1 - alpha."""
    if not 0 < alpha < 1:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    params = _params_of(fit)
    result = find_ohs_root(params)
    n_hat = float(result.n_continuous)
    cov = fit.covariance5()
    z = float(stats.norm.ppf(1 - alpha / 2))
    half_n = z * math.sqrt(_quadratic_form(_ohs_partials(fit.theta, fit.k1, fit.N, n_hat), cov))
    half_cost = z * math.sqrt(_quadratic_form(_mincost_partials(fit.theta, fit.N, n_hat), cov))
    upper_n = params.N - 1
    ci_n = ConfidenceInterval(
        lower=float(np.clip(result.n_star - half_n, 1, upper_n)),
        upper=float(np.clip(result.n_star + half_n, 1, upper_n)),
        level=1 - alpha,
        kind="asymptotic",
    )
    ci_cost = ConfidenceInterval(
        lower=result.min_cost - half_cost,
        upper=result.min_cost + half_cost,
        level=1 - alpha,
        kind="asymptotic",
        target="cost",
    )
    return ci_n, ci_cost


def _bootstrap_replicate(
    obs: ObservationSet, fit: ThetaFit, seed: np.random.SeedSequence
) -> Optional[float]:
    rng = generator(seed)
    mean = np.asarray(k2_power_law(obs.n, fit.theta))
    draw = obs.with_values(mean + rng.standard_normal(len(obs)) * np.sqrt(obs.var))
    k1 = fit.k1 + fit.k1_se * rng.standard_normal()
    N = fit.N + fit.N_se * rng.standard_normal()
    try:
        refit = fit_power_law(draw, init=fit.theta, k1=fit.k1, N=fit.N, n_starts=2)
        if k1 <= 0:
            return None
        return stationary_point(refit.theta, k1, N)
    except (FitFailureError, NoInteriorOHSError, InsufficientDataError):
        return None


def bootstrap_ci(
    obs: ObservationSet,
    fit: ThetaFit,
    alpha: float = 0.1,
    B: int = 1000,
    seed: SeedLike = None,
    n_jobs: Optional[int] = None,
) -> ConfidenceInterval:
    """Parametric bootstrap interval for n*.

    Replicates redraw every k2 estimate from the fitted curve with its own
    variance (and k1, N from their standard errors), refit and recompute n*.
    Replicates with no interior OHS are dropped and counted.
    """
    if B < 1:
        raise DomainError("B must be positive")
    seeds = spawn_seeds(seed, B)
    draws = joblib.Parallel(n_jobs=n_jobs or worker_count())(
        joblib.delayed(_bootstrap_replicate)(obs, fit, child) for child in seeds
    )
    valid = np.array([d for d in draws if d is not None], dtype=float)
    degenerate = 1.0 - valid.size / B
    if degenerate > DEGENERATE_LIMIT:
        raise CIUndefinedError(
            f"{degenerate:.0%} of bootstrap replicates have no interior OHS", degenerate_fraction=degenerate
        )
    if degenerate > 0:
        logger.info("bootstrap: %.1f%% degenerate replicates dropped", 100 * degenerate)
    lower, upper = np.quantile(valid, [alpha / 2, 1 - alpha / 2])
    return ConfidenceInterval(
        lower=float(lower), upper=float(upper), level=1 - alpha, kind="bootstrap", degenerate_fraction=degenerate
    )


# ---------------------------------------------------------------------------
# Next-point selection
# ---------------------------------------------------------------------------


def _one_step_theta(n: np.ndarray, y: np.ndarray, var: np.ndarray, theta: PowerLawTheta) -> Optional[np.ndarray]:
    """Single Gauss-Newton update of (a, b, c); None if it leaves the domain."""
    jac = _k2_jacobian(n, theta.a, theta.b) / np.sqrt(var)[:, None]
    resid = (y - (theta.a * n ** (-theta.b) + theta.c)) / np.sqrt(var)
    step, *_ = np.linalg.lstsq(jac, resid, rcond=None)
    updated = theta.as_array() + step
    updated[2] = max(updated[2], 0.0)
    if updated[0] <= 0 or not 0 < updated[1] <= B_MAX or not np.all(np.isfinite(updated)):
        return None
    return updated


def _width_after(
    obs: ObservationSet,
    fit: ThetaFit,
    n_new: int,
    y_new: float,
    var_new: float,
    z: float,
    refit: RefitMode,
) -> Optional[float]:
    n = np.append(obs.n, float(n_new))
    y = np.append(obs.y, y_new)
    var = np.append(obs.var, var_new)
    try:
        if refit == "full":
            augmented = obs.append(n_new, y_new, var_new)
            theta = fit_power_law(augmented, init=fit.theta, k1=fit.k1, N=fit.N, n_starts=1).theta
        else:
            updated = _one_step_theta(n, y, var, fit.theta)
            if updated is None:
                return None
            theta = PowerLawTheta(a=updated[0], b=updated[1], c=updated[2])
        cov = np.zeros((5, 5))
        cov[:3, :3] = _invert_information(_weighted_information(n, var, theta.a, theta.b))
        cov[3, 3], cov[4, 4] = fit.k1_se**2, fit.N_se**2
        n_hat = stationary_point(theta, fit.k1, fit.N)
        return 2 * z * math.sqrt(_quadratic_form(_ohs_partials(theta, fit.k1, fit.N, n_hat), cov))
    except (FitFailureError, NoInteriorOHSError, CovarianceInvalidError, InsufficientDataError):
        return None


def _expected_width(
    obs: ObservationSet,
    fit: ThetaFit,
    n_new: int,
    var_new: float,
    mc_draws: int,
    z: float,
    refit: RefitMode,
    seed: np.random.SeedSequence,
) -> float:
    rng = generator(seed)
    mean = float(k2_power_law(float(n_new), fit.theta))
    draws = mean + math.sqrt(var_new) * rng.standard_normal(mc_draws)
    widths = [_width_after(obs, fit, n_new, float(d), var_new, z, refit) for d in draws]
    valid = [w for w in widths if w is not None]
    if len(valid) * 2 < mc_draws:
        return math.inf
    return float(np.mean(valid))


def next_point_parametric(
    obs: ObservationSet,
    fit: ThetaFit,
    candidates: Optional[Sequence[int]] = None,
    sigma_new: Optional[float] = None,
    mc_draws: int = 100,
    seed: SeedLike = None,
    alpha: float = 0.1,
    refit: RefitMode = "one_step",
    n_jobs: Optional[int] = None,
) -> int:
    """Candidate size minimising the expected OHS interval width after one more observation.

    ``sigma_new`` is the variance of the new observation (default: median of
    the existing variances). Falls back to a uniformly random candidate when
    no candidate yields a finite expected width.
    """
    points = np.sort(np.asarray(
        candidates if candidates is not None else default_grid(int(round(fit.N)), NEXT_POINT_CANDIDATES), dtype=int
    ))
    if points.size == 0:
        raise DomainError("candidates must not be empty")
    if points.size == 1:
        return int(points[0])
    var_new = float(sigma_new if sigma_new is not None else np.median(obs.var))
    z = float(stats.norm.ppf(1 - alpha / 2))
    root, fallback = spawn_seeds(seed, 2)
    seeds = root.spawn(points.size)
    widths = joblib.Parallel(n_jobs=n_jobs or worker_count())(
        joblib.delayed(_expected_width)(obs, fit, int(p), var_new, mc_draws, z, refit, s)
        for p, s in zip(points, seeds)
    )
    widths = np.asarray(widths, dtype=float)
    if not np.any(np.isfinite(widths)):
        choice = int(generator(fallback).choice(points))
        logger.warning("no candidate gave a finite expected CI width; choosing n=%d uniformly", choice)
        return choice
    best = int(points[int(np.argmin(widths))])
    logger.debug("next parametric point %d (expected width %.4g)", best, float(np.nanmin(widths)))
    return best


# ---------------------------------------------------------------------------
# Acquisition loop
# ---------------------------------------------------------------------------


class ParametricConfig(BaseModel):
    initial_design: List[int] = Field(description="Sizes evaluated before the greedy loop")
    total_iterations: int = Field(ge=0, description="Sizes acquired after the initial design")
    k1: float = Field(gt=0)
    N: int = Field(ge=3)
    k1_se: float = Field(default=0.0, ge=0)
    N_se: float = Field(default=0.0, ge=0)
    alpha: float = Field(default=0.1, gt=0, lt=1)
    candidates: Optional[List[int]] = None
    seed: int = 0
    sigma_new: Optional[float] = Field(default=None, gt=0, description="Variance of future observations")
    mc_draws: int = Field(default=100, ge=1)
    acquisition: Literal["greedy", "random"] = "greedy"
    random_fraction: float = Field(default=0.0, ge=0, le=1, description="Share of random acquisitions in greedy mode")
    refit: RefitMode = "one_step"
    refresh_final: bool = Field(default=False, description="Re-query every size before the final estimate")

    @model_validator(mode="after")
    def _check_design(self) -> "ParametricConfig":
        if len(set(self.initial_design)) < 3:
            raise ValueError("initial_design needs at least 3 distinct sizes")
        if any(not 1 <= n <= self.N for n in self.initial_design):
            raise ValueError(f"initial_design sizes must lie in 1..{self.N}")
        return self


def _fit_or_none(obs: ObservationSet, config: ParametricConfig, init: Optional[PowerLawTheta]) -> Optional[ThetaFit]:
    try:
        return fit_power_law(obs, init=init, k1=config.k1, N=config.N, k1_se=config.k1_se, N_se=config.N_se)
    except FitFailureError as exc:
        logger.warning("refit failed: %s", exc)
        return None


def _estimate(fit: Optional[ThetaFit], alpha: float) -> Tuple[float, float]:
    if fit is None:
        return math.nan, math.nan
    try:
        ci_n, _ = asymptotic_ci(fit, alpha)
        return float(find_ohs_root(_params_of(fit)).n_star), ci_n.width
    except (NoInteriorOHSError, CovarianceInvalidError):
        return math.nan, math.nan


def run_parametric_algorithm(oracle: Oracle, config: ParametricConfig) -> Tuple[OHSResult, pd.DataFrame]:
    """Acquire sizes greedily, refit after each, and report the final OHS with its asymptotic CI."""
    candidates = np.asarray(config.candidates or default_grid(config.N, NEXT_POINT_CANDIDATES), dtype=int)
    choice_seed, *step_seeds = spawn_seeds(config.seed, config.total_iterations + 1)
    rng = generator(choice_seed)
    rows: List[Dict[str, object]] = []

    obs = ObservationSet(N=config.N)
    for n in config.initial_design:
        value, variance = oracle(int(n))
        obs = obs.append(int(n), value, variance)
        rows.append({"iter": 0, "n_acquired": int(n), "value": value, "variance": variance, "mode": "initial"})
    fit = _fit_or_none(obs, config, None)
    rows[-1]["n_star"], rows[-1]["ci_width"] = _estimate(fit, config.alpha)

    for it, step_seed in enumerate(step_seeds, start=1):
        explore = config.acquisition == "random" or rng.random() < config.random_fraction
        if explore or fit is None:
            n_next, mode = int(rng.choice(candidates)), "random"
        else:
            n_next = next_point_parametric(
                obs,
                fit,
                candidates=candidates,
                sigma_new=config.sigma_new,
                mc_draws=config.mc_draws,
                seed=step_seed,
                alpha=config.alpha,
                refit=config.refit,
            )
            mode = "greedy"
        value, variance = oracle(n_next)
        obs = obs.append(n_next, value, variance)
        fit = _fit_or_none(obs, config, fit.theta if fit is not None else None)
        n_star, width = _estimate(fit, config.alpha)
        rows.append(
            {"iter": it, "n_acquired": n_next, "value": value, "variance": variance, "mode": mode,
             "n_star": n_star, "ci_width": width}
        )
        logger.debug("iteration %d: acquired n=%d (%s), n*=%s", it, n_next, mode, n_star)

    trace = pd.DataFrame(rows, columns=["iter", "n_acquired", "value", "variance", "mode", "n_star", "ci_width"])
    if config.refresh_final:
        fresh = [oracle(int(n)) for n in obs.sizes]
        obs = ObservationSet(
            sizes=obs.sizes, values=[v for v, _ in fresh], variances=[s for _, s in fresh], N=config.N
        )
        logger.info("refreshed %d observations before the final estimate", len(obs))

    final = _fit_or_none(obs, config, fit.theta if fit is not None else None)
    if final is None:
        raise AlgorithmFailure("final power-law fit failed", trace=trace.to_dict("records"))
    try:
        params = _params_of(final)
        root = find_ohs_root(params)
        ci_n, ci_cost = asymptotic_ci(final, config.alpha)
    except (NoInteriorOHSError, CovarianceInvalidError) as exc:
        raise AlgorithmFailure(f"no final OHS estimate: {exc}", trace=trace.to_dict("records")) from exc
    result = OHSResult(
        n_star=root.n_star,
        min_cost=float(total_cost(root.n_star, params)),
        method="parametric",
        uncertainty=ci_n,
        cost_uncertainty=ci_cost,
        n_continuous=root.n_continuous,
    )
    logger.info("parametric OHS %d (CI %.0f-%.0f)", result.n_star, ci_n.lower, ci_n.upper)
    return result, trace
