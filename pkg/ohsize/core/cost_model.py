"""Total cost of a holdout policy and the optimal holdout set size.

The cost of holding out ``n`` of ``N`` samples is

    l(n) = k1 * n + k2(n) * (N - n)

where ``k1`` is the per-sample cost without a risk score and ``k2(n)`` the
per-sample cost under a score trained on ``n`` holdout samples.
"""
from __future__ import annotations

import logging
import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import optimize

from ohsize.config import grid_size
from ohsize.errors import DomainError, NoInteriorOHSError, UnsupportedOperationError
from ohsize.types.cost import CostCurve, CostParameters, GaussianBump, PowerLawTheta
from ohsize.types.result import OHSResult

logger = logging.getLogger(__name__)

ArrayLike = Union[float, Sequence[float], np.ndarray]
ParamsLike = Union[CostParameters, Tuple[float, float]]

ROOT_RTOL = 1e-8
ROOT_MAXITER = 200


def _as_scalar_or_array(values: np.ndarray, like: ArrayLike) -> Union[float, np.ndarray]:
    return float(values) if np.ndim(like) == 0 else values


def k2_power_law(n: ArrayLike, theta: PowerLawTheta) -> Union[float, np.ndarray]:
    """a * n**(-b) + c for n > 0."""
    arr = np.asarray(n, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("k2_power_law needs n > 0")
    return _as_scalar_or_array(theta.a * arr ** (-theta.b) + theta.c, n)


def k2_power_law_derivative(n: ArrayLike, theta: PowerLawTheta) -> Union[float, np.ndarray]:
    arr = np.asarray(n, dtype=float)
    if np.any(arr <= 0):
        raise DomainError("k2_power_law_derivative needs n > 0")
    return _as_scalar_or_array(-theta.a * theta.b * arr ** (-theta.b - 1), n)


def _bump(arr: np.ndarray, bump: GaussianBump) -> Tuple[np.ndarray, np.ndarray]:
    if bump.width <= 0:
        raise DomainError(f"bump width must be positive, got {bump.width}")
    z = (arr - bump.center) / bump.width
    scale = bump.height_scale / math.sqrt(2 * math.pi)
    if bump.density:
        scale /= bump.width
    term = scale * np.exp(-0.5 * z**2)
    return term, -term * z / bump.width


def k2_double_descent(n: ArrayLike, theta: PowerLawTheta, bump: GaussianBump) -> Union[float, np.ndarray]:
    """Power-law k2 plus a Gaussian bump."""
    arr = np.asarray(n, dtype=float)
    term, _ = _bump(arr, bump)
    return _as_scalar_or_array(np.asarray(k2_power_law(arr, theta)) + term, n)


def power_law_curve(theta: PowerLawTheta) -> CostCurve:
    return CostCurve(
        evaluator=lambda n: np.asarray(k2_power_law(n, theta)),
        derivative=lambda n: np.asarray(k2_power_law_derivative(n, theta)),
        kind="power-law",
    )


def double_descent_curve(theta: PowerLawTheta, bump: GaussianBump) -> CostCurve:
    _bump(np.zeros(1), bump)

    def derivative(n: np.ndarray) -> np.ndarray:
        _, slope = _bump(n, bump)
        return np.asarray(k2_power_law_derivative(n, theta)) + slope

    return CostCurve(
        evaluator=lambda n: np.asarray(k2_double_descent(n, theta, bump)),
        derivative=derivative,
        kind="double-descent",
    )


def tabulated_curve(sizes: Sequence[float], values: Sequence[float]) -> CostCurve:
    """Piecewise-linear k2 through the given knots, constant beyond the ends."""
    knots = np.asarray(sizes, dtype=float)
    heights = np.asarray(values, dtype=float)
    if knots.ndim != 1 or knots.shape != heights.shape or knots.size == 0:
        raise DomainError("tabulated curve needs equal-length, nonempty sizes and values")
    if np.any(np.diff(knots) <= 0):
        raise DomainError("tabulated sizes must be strictly increasing")
    if not np.all(np.isfinite(heights)):
        raise DomainError("tabulated k2 values must be finite")
    return CostCurve(
        evaluator=lambda n: np.interp(n, knots, heights),
        kind="tabulated",
        finite_at_zero=bool(knots[0] <= 0),
    )


def _resolve(params: ParamsLike, curve: Optional[CostCurve]) -> Tuple[float, float, CostCurve]:
    if isinstance(params, CostParameters):
        return float(params.N), params.k1, curve or power_law_curve(params.theta)
    N, k1 = params
    if curve is None:
        raise DomainError("a CostCurve is required when params is (N, k1)")
    return float(N), float(k1), curve


def total_cost(n: ArrayLike, params: ParamsLike, curve: Optional[CostCurve] = None) -> Union[float, np.ndarray]:
    """l(n) on [0, N]; +inf at n = 0 unless the curve is finite there."""
    N, k1, k2 = _resolve(params, curve)
    arr = np.atleast_1d(np.asarray(n, dtype=float))
    if np.any(arr < 0) or np.any(arr > N):
        raise DomainError(f"holdout size must lie in [0, {N:g}]")
    cost = np.empty_like(arr)
    zero = arr == 0
    if np.any(~zero):
        m = arr[~zero]
        cost[~zero] = k1 * m + k2(m) * (N - m)
    if np.any(zero):
        cost[zero] = float(k2(np.zeros(1))[0]) * N if k2.finite_at_zero else np.inf
    if np.ndim(n) == 0:
        return float(cost[0])
    return cost.reshape(np.shape(n))


def cost_derivative(n: ArrayLike, params: ParamsLike, curve: Optional[CostCurve] = None) -> Union[float, np.ndarray]:
    """l'(n) = (k1 - k2(n)) + k2'(n) (N - n) on (0, N]."""
    N, k1, k2 = _resolve(params, curve)
    if k2.derivative is None:
        raise UnsupportedOperationError(f"{k2.kind} curve has no derivative")
    arr = np.asarray(n, dtype=float)
    if np.any(arr <= 0) or np.any(arr > N):
        raise DomainError(f"cost_derivative needs n in (0, {N:g}]")
    slope = (k1 - k2(arr)) + k2.derivative(arr) * (N - arr)
    return _as_scalar_or_array(np.asarray(slope), n)


def default_grid(N: int, size: Optional[int] = None) -> np.ndarray:
    """Evenly spaced integers over [1, N-1], deduplicated."""
    if N < 2:
        raise DomainError("N must be at least 2")
    size = size or grid_size()
    return np.unique(np.rint(np.linspace(1, N - 1, size)).astype(int))


def _argmin_prefer_larger(costs: np.ndarray) -> int:
    best = np.flatnonzero(costs == costs.min())
    return int(best[-1])


def find_ohs_grid(
    params: ParamsLike,
    curve: Optional[CostCurve] = None,
    grid: Optional[Sequence[int]] = None,
) -> OHSResult:
    """Grid point with the smallest total cost; ties go to the larger size."""
    N, _, _ = _resolve(params, curve)
    points = default_grid(int(N)) if grid is None else np.asarray(grid, dtype=int)
    if points.size == 0:
        raise DomainError("grid must not be empty")
    if points.min() < 1 or points.max() > N - 1:
        raise DomainError(f"grid entries must lie in 1..{int(N) - 1}")
    costs = np.asarray(total_cost(points, params, curve))
    idx = _argmin_prefer_larger(costs)
    return OHSResult(n_star=int(points[idx]), min_cost=float(costs[idx]), method="grid")


def _continuous_slope(n: float, theta: PowerLawTheta, k1: float, N: float) -> float:
    return (k1 - theta.a * n ** (-theta.b) - theta.c) - theta.a * theta.b * n ** (-theta.b - 1) * (N - n)


def stationary_point(theta: PowerLawTheta, k1: float, N: float) -> float:
    """Continuous root of l' on [1, N-1] for the power-law curve; N may be real.

    Raises NoInteriorOHSError with a diagnosis when l' does not change sign.
    """
    if k1 <= theta.c:
        raise NoInteriorOHSError(
            f"k1={k1:g} <= c={theta.c:g}: Assumption 3 fails, the risk score never beats baseline care"
        )
    if N < 3:
        raise NoInteriorOHSError(f"N={N:g} leaves no interior holdout size")
    lo, hi = 1.0, N - 1.0
    slope_lo = _continuous_slope(lo, theta, k1, N)
    slope_hi = _continuous_slope(hi, theta, k1, N)
    if slope_lo >= 0:
        raise NoInteriorOHSError(
            f"l'(1)={slope_lo:g} >= 0: k2 does not exceed k1 at small n (Assumption 3 fails), "
            "holding out samples never pays"
        )
    if slope_hi <= 0:
        raise NoInteriorOHSError(
            f"l'(N-1)={slope_hi:g} <= 0: cost still falls at N-1, the optimum is to hold out everything"
        )
    root = optimize.bisect(
        _continuous_slope, lo, hi, args=(theta, k1, N), rtol=ROOT_RTOL, maxiter=ROOT_MAXITER
    )
    logger.debug("stationary point %.6f for theta=%s k1=%g N=%g", root, theta, k1, N)
    return float(root)


def find_ohs_root(params: CostParameters) -> OHSResult:
    """Integer OHS next to the unique stationary point of l for a power-law k2."""
    n_hat = stationary_point(params.theta, params.k1, float(params.N))
    candidates = np.unique(np.clip([math.floor(n_hat), math.ceil(n_hat)], 1, params.N - 1))
    costs = np.asarray(total_cost(candidates, params))
    idx = _argmin_prefer_larger(costs)
    return OHSResult(
        n_star=int(candidates[idx]),
        min_cost=float(costs[idx]),
        method="root",
        n_continuous=n_hat,
    )


def cost_table(params: ParamsLike, curve: Optional[CostCurve] = None, grid: Optional[Sequence[int]] = None) -> pd.DataFrame:
    """Total cost over a grid as a two-column frame ``n, cost``."""
    N, _, _ = _resolve(params, curve)
    points = default_grid(int(N)) if grid is None else np.asarray(grid, dtype=int)
    return pd.DataFrame({"n": points, "cost": np.asarray(total_cost(points, params, curve))})
