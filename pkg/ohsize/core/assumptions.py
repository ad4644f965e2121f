"""Empirical checks of the cost-model assumptions on an observed k2 curve."""
from __future__ import annotations

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from ohsize.core.cost_model import default_grid
from ohsize.errors import DomainError, InsufficientDataError
from ohsize.types.cost import AssumptionReport, CostCurve
from ohsize.types.observations import ObservationSet

logger = logging.getLogger(__name__)

CONVEXITY_TOL = 1e-12

Samples = Union[ObservationSet, CostCurve, Tuple[Sequence[float], Sequence[float]]]


def _pooled(obs: ObservationSet) -> Tuple[np.ndarray, np.ndarray]:
    sizes, inverse = np.unique(obs.n, return_inverse=True)
    weights = 1.0 / obs.var
    means = np.bincount(inverse, weights=weights * obs.y) / np.bincount(inverse, weights=weights)
    return sizes, means


def _curve_points(
    samples: Samples, N: float, grid: Optional[Sequence[float]]
) -> Tuple[np.ndarray, np.ndarray, Optional[float]]:
    if isinstance(samples, ObservationSet):
        sizes, values = _pooled(samples)
        return sizes, values, None
    if isinstance(samples, CostCurve):
        points = default_grid(int(N)) if grid is None else np.asarray(grid, dtype=float)
        zero = float(samples(np.zeros(1))[0]) if samples.finite_at_zero else None
        return points.astype(float), np.asarray(samples(points), dtype=float), zero
    sizes, values = (np.asarray(part, dtype=float) for part in samples)
    if sizes.shape != values.shape:
        raise DomainError("sizes and values must have equal lengths")
    order = np.argsort(sizes, kind="stable")
    return sizes[order], values[order], None


def _first(mask: np.ndarray) -> Optional[int]:
    hits = np.flatnonzero(mask)
    return int(hits[0]) if hits.size else None


def check_assumptions(
    samples: Samples,
    k1: float,
    N: float,
    grid: Optional[Sequence[float]] = None,
    k2_zero: Optional[float] = None,
) -> AssumptionReport:
    """Report which assumptions an observed k2 curve satisfies.

    ``samples`` is an ObservationSet (duplicates pooled by inverse-variance
    mean), a CostCurve evaluated on ``grid``, or a pair of arrays. ``k2_zero``
    is the cost rate of a score built with no data; when absent the curve's
    value at 0 (if finite) or at the smallest size stands in.
    """
    sizes, values, curve_zero = _curve_points(samples, N, grid)
    keep = sizes > 0
    sizes, values = sizes[keep], values[keep]
    if np.unique(sizes).size < 3:
        raise InsufficientDataError("check_assumptions needs at least 3 distinct sizes")

    steps = np.diff(values)
    a2_violation = _first(steps >= 0)

    slopes = steps / np.diff(sizes)
    a4_violation = _first(np.diff(slopes) < -CONVEXITY_TOL)

    below = values <= k1
    m_index = _first(below)
    a3 = bool(
        m_index is not None
        and m_index > 0
        and np.all(below[m_index:])
        and sizes[m_index] < N
    )
    M = float(sizes[m_index]) if m_index is not None and a3 else None

    if k2_zero is None:
        k2_zero = curve_zero if curve_zero is not None else float(values[0])
    inside = sizes < N
    margins = (N - sizes[inside]) / N * (k1 - values[inside]) - (k1 - k2_zero)
    a5 = bool(margins.size and margins.max() > 0)
    a5_M = float(sizes[inside][int(np.argmax(margins))]) if a5 else None

    a2 = a2_violation is None
    a4 = a4_violation is None
    if a2 and a3 and a4:
        theorem = "unique_minimum"
    elif k2_zero <= k1 and a5:
        theorem = "weak_minimum"
    elif k2_zero > k1 and bool(np.any(values[inside] < k1)):
        theorem = "crossing_minimum"
    else:
        theorem = "none"
    logger.debug("assumptions: A2=%s A3=%s A4=%s A5=%s -> %s", a2, a3, a4, a5, theorem)

    return AssumptionReport(
        a2_holds=a2,
        a2_first_violation=a2_violation,
        a2_violations=int(np.count_nonzero(steps >= 0)),
        a3_holds=a3,
        M=M,
        a4_holds=a4,
        a4_first_violation=a4_violation,
        a4_violations=int(np.count_nonzero(np.diff(slopes) < -CONVEXITY_TOL)),
        a5_holds=a5,
        a5_M=a5_M,
        k2_zero=float(k2_zero),
        intervals=int(steps.size),
        theorem_applicable=theorem,
    )
