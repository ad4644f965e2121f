import numpy as np
import pytest

from ohsize.core.assumptions import check_assumptions
from ohsize.core.cost_model import double_descent_curve, power_law_curve
from ohsize.errors import InsufficientDataError
from ohsize.types.cost import DENSITY_BUMP
from ohsize.types.observations import ObservationSet


def _obs(sizes, values):
    return ObservationSet(sizes=sizes, values=values, variances=[1e-4] * len(sizes))


def test_power_law_satisfies_unique_minimum(default_params):
    sizes = [100, 1_000, 10_000, 50_000]
    values = [float(power_law_curve(default_params.theta)(n)) for n in sizes]
    report = check_assumptions(_obs(sizes, values), k1=0.4, N=100_000)
    assert report.a2_holds and report.a3_holds and report.a4_holds
    assert report.M == 10_000
    assert report.a1 == "assumed"
    assert report.theorem_applicable == "unique_minimum"
    assert report.intervals == 3


def test_curve_input_is_evaluated_on_grid(default_params):
    grid = np.geomspace(10, 90_000, 60)
    report = check_assumptions(power_law_curve(default_params.theta), 0.4, 100_000, grid=grid)
    assert report.a2_holds and report.a4_holds
    assert report.theorem_applicable == "unique_minimum"


def test_non_decreasing_step_breaks_monotonicity():
    report = check_assumptions(_obs([1, 2, 3, 4], [0.5, 0.4, 0.45, 0.3]), k1=0.6, N=10)
    assert not report.a2_holds
    assert report.a2_first_violation == 1
    assert report.a2_violations == 1


def test_concave_triple_breaks_convexity_and_selects_crossing():
    report = check_assumptions(_obs([1, 2, 3, 4], [1.0, 0.9, 0.7, 0.6]), k1=0.8, N=10)
    assert report.a2_holds and report.a3_holds
    assert not report.a4_holds
    assert report.a4_first_violation == 0
    assert report.theorem_applicable == "crossing_minimum"


def test_weak_minimum_from_margin():
    report = check_assumptions(_obs([1, 2, 3, 4], [0.55, 0.5, 0.3, 0.2]), k1=0.6, N=100, k2_zero=0.5)
    assert not report.a3_holds
    assert report.a5_holds
    assert report.theorem_applicable == "weak_minimum"


def test_duplicates_are_pooled_by_precision():
    obs = ObservationSet(sizes=[1, 1, 2, 3], values=[0.9, 0.7, 0.6, 0.5], variances=[1.0, 3.0, 1.0, 1.0])
    report = check_assumptions(obs, k1=0.55, N=10)
    assert report.intervals == 2
    assert report.a2_holds


def test_array_pair_input():
    report = check_assumptions(([3, 1, 2], [0.2, 0.9, 0.4]), k1=0.5, N=10)
    assert report.a2_holds


def test_needs_three_distinct_sizes():
    with pytest.raises(InsufficientDataError):
        check_assumptions(_obs([1, 1, 2], [0.5, 0.5, 0.4]), k1=0.6, N=10)


def test_double_descent_curve_is_flagged(default_params):
    grid = np.arange(1_000, 99_000, 500)
    report = check_assumptions(double_descent_curve(default_params.theta, DENSITY_BUMP), 0.4, 100_000, grid=grid)
    assert not report.a2_holds
    assert not report.a4_holds
    assert report.theorem_applicable != "unique_minimum"
