import numpy as np
import pytest

from ohsize.core.cost_model import (
    cost_derivative,
    cost_table,
    default_grid,
    double_descent_curve,
    find_ohs_grid,
    find_ohs_root,
    k2_power_law,
    power_law_curve,
    stationary_point,
    tabulated_curve,
    total_cost,
)
from ohsize.errors import DomainError, NoInteriorOHSError, UnsupportedOperationError
from ohsize.types.cost import DENSITY_BUMP, CostParameters, GaussianBump, PowerLawTheta


def test_k2_power_law_scalar_and_array():
    theta = PowerLawTheta(a=10_000, b=1.2, c=0.2)
    value = k2_power_law(10_000, theta)
    assert isinstance(value, float)
    assert value == pytest.approx(10 ** (-0.8) + 0.2)
    values = k2_power_law(np.array([1.0, 10_000.0]), theta)
    assert values.shape == (2,)


def test_k2_power_law_rejects_non_positive_sizes():
    theta = PowerLawTheta(a=1, b=1, c=0)
    with pytest.raises(DomainError):
        k2_power_law(0, theta)


def test_total_cost_reference_value(default_params):
    assert total_cost(10_000, default_params) == pytest.approx(36_264.0, rel=1e-4)


def test_total_cost_boundaries(default_params):
    assert total_cost(0, default_params) == np.inf
    assert total_cost(default_params.N, default_params) == pytest.approx(0.4 * default_params.N)
    with pytest.raises(DomainError):
        total_cost(default_params.N + 1, default_params)
    with pytest.raises(DomainError):
        total_cost(-1, default_params)


def test_total_cost_at_zero_for_finite_curve():
    curve = tabulated_curve([0, 100], [0.8, 0.2])
    assert total_cost(0, (100, 0.5), curve) == pytest.approx(80.0)


def test_cost_derivative_matches_finite_difference(default_params):
    n, h = 20_000.0, 1e-3
    numeric = (total_cost(n + h, default_params) - total_cost(n - h, default_params)) / (2 * h)
    assert cost_derivative(n, default_params) == pytest.approx(numeric, rel=1e-5)


def test_cost_derivative_unavailable_for_tabulated_curve():
    curve = tabulated_curve([1, 50, 99], [0.9, 0.5, 0.4])
    with pytest.raises(UnsupportedOperationError):
        cost_derivative(10, (100, 0.6), curve)


def test_default_grid_size_and_bounds():
    grid = default_grid(100_000, 100)
    assert grid.size == 100
    assert grid[0] == 1 and grid[-1] == 99_999


def test_reference_ohs_near_27000(default_params):
    root = find_ohs_root(default_params)
    assert 25_000 <= root.n_star <= 30_000
    assert root.method == "root"
    assert root.n_continuous == pytest.approx(root.n_star, abs=1)


def test_root_matches_exhaustive_search_on_random_draws():
    rng = np.random.default_rng(7)
    checked = 0
    while checked < 50:
        theta = PowerLawTheta(a=rng.uniform(100, 10_000), b=rng.uniform(0.5, 2.0), c=rng.uniform(0, 0.3))
        params = CostParameters(N=int(rng.integers(1_000, 50_000)), k1=theta.c + rng.uniform(0.05, 0.5), theta=theta)
        try:
            root = find_ohs_root(params)
        except NoInteriorOHSError:
            continue
        exhaustive = find_ohs_grid(params, grid=np.arange(1, params.N))
        assert abs(root.n_star - exhaustive.n_star) <= 1
        assert root.min_cost == pytest.approx(exhaustive.min_cost, rel=1e-9)
        checked += 1


def test_optimum_lies_beyond_threshold_size_on_random_draws():
    rng = np.random.default_rng(11)
    checked = 0
    while checked < 50:
        theta = PowerLawTheta(a=rng.uniform(100, 10_000), b=rng.uniform(0.5, 2.0), c=rng.uniform(0, 0.3))
        params = CostParameters(N=int(rng.integers(1_000, 50_000)), k1=theta.c + rng.uniform(0.05, 0.5), theta=theta)
        try:
            root = find_ohs_root(params)
        except NoInteriorOHSError:
            continue
        threshold = (theta.a / (params.k1 - theta.c)) ** (1 / theta.b)
        assert root.n_continuous > threshold
        assert root.n_star > threshold - 1
        checked += 1


def test_grid_ties_go_to_larger_size():
    curve = tabulated_curve([1, 99], [0.5, 0.5])
    result = find_ohs_grid((100, 0.5), curve=curve, grid=[10, 20, 30])
    assert result.n_star == 30


def test_no_interior_when_k1_below_floor():
    params = CostParameters(N=100_000, k1=0.1, theta=PowerLawTheta(a=10_000, b=1.2, c=0.2))
    with pytest.raises(NoInteriorOHSError) as info:
        find_ohs_root(params)
    assert "Assumption 3" in info.value.diagnosis


def test_stationary_point_accepts_real_population(default_params):
    low = stationary_point(default_params.theta, default_params.k1, 100_000.0)
    high = stationary_point(default_params.theta, default_params.k1, 100_000.5)
    assert high > low


def test_density_bump_gives_two_local_minima(default_params):
    curve = double_descent_curve(default_params.theta, DENSITY_BUMP)
    grid = np.arange(1_000, 99_000, 500)
    costs = np.asarray(total_cost(grid, default_params, curve))
    interior = np.flatnonzero((costs[1:-1] < costs[:-2]) & (costs[1:-1] < costs[2:])) + 1
    minima = grid[interior]
    assert np.any(minima < 40_000)
    assert np.any(minima > 40_000)


def test_bump_width_must_be_positive(default_params):
    with pytest.raises(DomainError):
        double_descent_curve(default_params.theta, GaussianBump(height_scale=1.0, center=10.0, width=0.0))


def test_power_law_curve_derivative_available(default_params):
    curve = power_law_curve(default_params.theta)
    assert curve.derivative is not None
    assert curve.kind == "power-law"


def test_cost_table_columns(default_params):
    table = cost_table(default_params, grid=[100, 200, 300])
    assert list(table.columns) == ["n", "cost"]
    assert len(table) == 3
