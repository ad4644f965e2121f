"""Semi-parametric OHS estimation with a Gaussian-process emulator of l(n).

The prior mean is the parametric cost k1 n + k2(n; theta)(N - n); a
squared-exponential Gaussian process absorbs departures from it. Observed total
costs update the emulator through the Bayes linear equations, and new sizes are
chosen by expected improvement until it drops to the threshold tau.
"""
from __future__ import annotations

import logging
import math
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, stats

from ohsize.core.cost_model import default_grid, k2_power_law
from ohsize.errors import ConditioningError, DomainError, FitFailureError, InsufficientDataError
from ohsize.estimators.parametric import fit_power_law
from ohsize.types.emulation import CoalescedObservations, CoalesceStatistic, EmulatorMode, ErrorSet, GPConfig
from ohsize.types.observations import ObservationSet
from ohsize.types.result import OHSResult
from ohsize.utils.random import SeedLike, generator

logger = logging.getLogger(__name__)

JITTER_LADDER = (0.0, 1e-8, 1e-6, 1e-4)
TRACE_COLUMNS = ["iter", "n_acquired", "d", "variance", "max_EI", "n_star", "mu_at_n_star"]

Oracle = Callable[[int], Tuple[float, float]]
Nugget = Callable[[np.ndarray], np.ndarray]


def coalesce(obs: ObservationSet, statistic: CoalesceStatistic = "mean") -> CoalescedObservations:
    """Pool repeated sizes into one inverse-variance weighted observation.

    The combined variance is (sum of 1/sigma^2)^-1. With ``statistic="median"``
    the pooled value is the plain median of the repeats instead.
    """
    if len(obs) == 0:
        return CoalescedObservations()
    sizes, inverse, counts = np.unique(obs.sizes, return_inverse=True, return_counts=True)
    precision = np.bincount(inverse, weights=1.0 / obs.var)
    if statistic == "median":
        y = obs.y
        means = np.array([np.median(y[inverse == i]) for i in range(sizes.size)])
    else:
        means = np.bincount(inverse, weights=obs.y / obs.var) / precision
    return CoalescedObservations(
        unique_sizes=sizes.astype(int).tolist(),
        means=means.tolist(),
        variances=(1.0 / precision).tolist(),
        counts=counts.astype(int).tolist(),
    )


def cost_observations_from_k2(obs: ObservationSet, k1: float, N: float) -> ObservationSet:
    """Map k2 estimates to total-cost estimates d = k1 n + k2 (N - n)."""
    n = obs.n
    if np.any(n >= N):
        raise DomainError("total-cost transform needs every size below N")
    return ObservationSet(
        sizes=obs.sizes,
        values=(k1 * n + obs.y * (N - n)).tolist(),
        variances=((N - n) ** 2 * obs.var).tolist(),
        N=obs.N,
    )


def k2_observations_from_cost(obs: ObservationSet, k1: float, N: float) -> ObservationSet:
    """Inverse of :func:`cost_observations_from_k2`."""
    n = obs.n
    if np.any(n >= N):
        raise DomainError("k2 transform needs every size below N")
    return ObservationSet(
        sizes=obs.sizes,
        values=((obs.y - k1 * n) / (N - n)).tolist(),
        variances=(obs.var / (N - n) ** 2).tolist(),
        N=obs.N,
    )


class EmulatorPosterior:
    """Posterior mean mu(n) and variance psi(n) of the total cost."""

    def __init__(
        self,
        data: CoalescedObservations,
        config: GPConfig,
        nugget: Optional[Nugget] = None,
        include_observation_variance: bool = True,
    ) -> None:
        self.data = data
        self.config = config
        self._nugget = nugget
        self._design = data.n
        self.jitter = 0.0
        if len(data) == 0:
            self._factor = None
            self._weights = np.zeros(0)
            self.d_minus = math.inf
            return

        noise = np.zeros(len(data))
        if include_observation_variance:
            noise = noise + data.var
        if nugget is not None:
            noise = noise + np.asarray(nugget(self._design), dtype=float)
        base = self.kernel(self._design, self._design) + np.diag(noise)
        self._factor = self._factorise(base)
        self._weights = linalg.cho_solve(self._factor, data.d - self.prior_mean(self._design))
        if nugget is None:
            self.d_minus = float(data.d.min())
        else:
            self.d_minus = float(np.min(self.mu(self._design)))

    def _factorise(self, matrix: np.ndarray) -> Tuple[np.ndarray, bool]:
        for scale in JITTER_LADDER:
            jitter = scale * self.config.sigma_u2
            try:
                factor = linalg.cho_factor(matrix + jitter * np.eye(matrix.shape[0]), lower=True)
            except linalg.LinAlgError:
                logger.debug("cholesky failed with jitter %.3g; escalating", jitter)
                continue
            if scale:
                logger.warning("emulator system needed jitter %.3g to factorise", jitter)
            self.jitter = jitter
            return factor
        raise ConditioningError(
            f"emulator system is singular after jitter up to {JITTER_LADDER[-1]:g} x sigma_u2; "
            "check for zero variances at duplicated sizes"
        )

    def kernel(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        diff = (np.asarray(x1, dtype=float)[:, None] - np.asarray(x2, dtype=float)[None, :]) / self.config.zeta
        return self.config.sigma_u2 * np.exp(-(diff**2))

    def prior_mean(self, n: np.ndarray) -> np.ndarray:
        cfg = self.config
        n = np.asarray(n, dtype=float)
        return cfg.prior_k1 * n + np.asarray(k2_power_law(n, cfg.prior_theta)) * (cfg.prior_N - n)

    def prior_variance(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        extra = np.asarray(self._nugget(n), dtype=float) if self._nugget is not None else 0.0
        return self.config.sigma_u2 + np.zeros_like(n) + extra

    def mu(self, n: Sequence[float]) -> np.ndarray:
        points = np.atleast_1d(np.asarray(n, dtype=float))
        mean = self.prior_mean(points)
        if self._factor is None:
            return mean
        return mean + self.kernel(points, self._design) @ self._weights

    def psi(self, n: Sequence[float]) -> np.ndarray:
        points = np.atleast_1d(np.asarray(n, dtype=float))
        prior = self.prior_variance(points)
        if self._factor is None:
            return prior
        cross = self.kernel(self._design, points)
        reduction = np.sum(cross * linalg.cho_solve(self._factor, cross), axis=0)
        return np.maximum(prior - reduction, 0.0)


def posterior(obs: ObservationSet, config: GPConfig) -> EmulatorPosterior:
    """Bayes linear update of the emulator on coalesced total-cost observations."""
    return EmulatorPosterior(coalesce(obs), config)


def posterior_with_nugget(
    obs: ObservationSet,
    config: GPConfig,
    kappa: Nugget,
    include_observation_variance: bool = False,
    statistic: CoalesceStatistic = "mean",
) -> EmulatorPosterior:
    """Posterior with a size-dependent nugget kappa(n) on the kernel diagonal.

    kappa replaces the pooled observation variances on the data diagonal
    (unless ``include_observation_variance``) and the incumbent becomes the
    smallest posterior mean at a design point. kappa also enters the prior
    variance k(n, n) + kappa(n), but never the cross-covariance k(n, design),
    even where n is itself a design point; a single observation d at n therefore
    gives mu(n) = m(n) + sigma_u2 / (sigma_u2 + kappa(n)) (d - m(n)).
    """
    return EmulatorPosterior(
        coalesce(obs, statistic), config, nugget=kappa, include_observation_variance=include_observation_variance
    )


def expected_improvement_from_moments(mu: np.ndarray, psi: np.ndarray, d_minus: float) -> np.ndarray:
    mu = np.asarray(mu, dtype=float)
    psi = np.asarray(psi, dtype=float)
    if np.isinf(d_minus):
        return np.full_like(mu, math.inf)
    gain = d_minus - mu
    sd = np.sqrt(np.maximum(psi, 0.0))
    out = np.maximum(gain, 0.0)
    positive = sd > 0
    z = gain[positive] / sd[positive]
    out[positive] = gain[positive] * stats.norm.cdf(z) + sd[positive] * stats.norm.pdf(z)
    return np.maximum(out, 0.0)


def expected_improvement(n: Sequence[float], post: EmulatorPosterior) -> np.ndarray:
    """E[max(0, d_minus - l(n))] under the posterior."""
    return expected_improvement_from_moments(post.mu(n), post.psi(n), post.d_minus)


def next_point_ei(post: EmulatorPosterior, candidates: Sequence[int]) -> int:
    """Candidate with the largest expected improvement; ties go to the smallest size."""
    points = np.unique(np.asarray(candidates, dtype=int))
    if points.size == 0:
        raise DomainError("candidates must not be empty")
    ei = np.nan_to_num(expected_improvement(points, post), nan=-1.0)
    return int(points[int(np.argmax(ei))])


def error_set(
    post: EmulatorPosterior,
    n_star: int,
    alpha: Optional[float] = None,
    candidates: Optional[Sequence[int]] = None,
) -> ErrorSet:
    """Sizes n with P(l(n) < mu(n*)) >= 1 - alpha under the posterior (not a credible set)."""
    alpha = post.config.alpha if alpha is None else alpha
    points = default_grid(post.config.prior_N) if candidates is None else np.asarray(candidates, dtype=int)
    mu = post.mu(points)
    psi = post.psi(points)
    mu_star = float(post.mu([n_star])[0])
    member = mu < mu_star
    spread = psi > 0
    member[spread] = stats.norm.cdf((mu_star - mu[spread]) / np.sqrt(psi[spread])) >= 1 - alpha
    members = set(points[member].tolist())
    if float(post.psi([n_star])[0]) > 0:
        members.add(int(n_star))
    return ErrorSet(members=sorted(int(m) for m in members), alpha=alpha, n_star=int(n_star))


def _argmin_prefer_larger(values: np.ndarray) -> int:
    return int(np.flatnonzero(values == values.min())[-1])


def _refit_prior(obs: ObservationSet, config: GPConfig) -> GPConfig:
    try:
        k2_obs = k2_observations_from_cost(obs, config.prior_k1, config.prior_N)
        fit = fit_power_law(k2_obs, init=config.prior_theta, k1=config.prior_k1, N=config.prior_N, n_starts=2)
    except (FitFailureError, InsufficientDataError, DomainError) as exc:
        logger.debug("prior refit skipped: %s", exc)
        return config
    return config.model_copy(update={"prior_theta": fit.theta})


def run_emulation_algorithm(
    oracle: Oracle,
    config: GPConfig,
    initial_design: Sequence[int],
    max_iterations: int = 100,
    seed: SeedLike = None,
    candidates: Optional[Sequence[int]] = None,
    refit_prior: bool = True,
    mode: EmulatorMode = "greedy",
    random_fraction: float = 0.0,
    nugget: Optional[Nugget] = None,
) -> Tuple[OHSResult, pd.DataFrame, EmulatorPosterior]:
    """Acquire sizes by expected improvement until max EI <= tau or the iteration cap.

    ``oracle`` returns a total-cost estimate and its variance. Returns the OHS
    (argmin of the posterior mean over the candidate grid) with its error set,
    the per-acquisition trace, and the final posterior.
    """
    if len(initial_design) < 1:
        raise DomainError("initial_design needs at least one size")
    points = np.unique(np.asarray(
        candidates if candidates is not None else default_grid(config.prior_N), dtype=int
    ))
    rng = generator(seed)

    def build(current: ObservationSet, cfg: GPConfig) -> EmulatorPosterior:
        data = coalesce(current)
        return EmulatorPosterior(data, cfg, nugget=nugget, include_observation_variance=nugget is None)

    obs = ObservationSet(N=config.prior_N)
    for n in initial_design:
        value, variance = oracle(int(n))
        obs = obs.append(int(n), value, variance)
    if refit_prior:
        config = _refit_prior(obs, config)
    post = build(obs, config)

    rows: List[Dict[str, float]] = []
    for it in range(1, max_iterations + 1):
        ei = np.nan_to_num(expected_improvement(points, post), nan=-1.0)
        max_ei = float(ei.max())
        if max_ei <= config.tau:
            logger.info("max EI %.4g <= tau %.4g after %d acquisitions", max_ei, config.tau, it - 1)
            break
        if mode == "random" or rng.random() < random_fraction:
            n_next = int(rng.choice(points))
        else:
            n_next = int(points[int(np.argmax(ei))])
        value, variance = oracle(n_next)
        obs = obs.append(n_next, value, variance)
        if refit_prior:
            config = _refit_prior(obs, config)
        post = build(obs, config)
        mu = post.mu(points)
        best = _argmin_prefer_larger(mu)
        rows.append(
            {"iter": it, "n_acquired": n_next, "d": value, "variance": variance, "max_EI": max_ei,
             "n_star": int(points[best]), "mu_at_n_star": float(mu[best])}
        )
        logger.debug("iteration %d: acquired n=%d, max EI %.4g", it, n_next, max_ei)

    mu = post.mu(points)
    best = _argmin_prefer_larger(mu)
    n_star = int(points[best])
    errors = error_set(post, n_star, candidates=points)
    result = OHSResult(n_star=n_star, min_cost=float(mu[best]), method="emulation", uncertainty=errors)
    logger.info("emulation OHS %d (error set %d-%d)", n_star, errors.lower, errors.upper)
    return result, pd.DataFrame(rows, columns=TRACE_COLUMNS), post
