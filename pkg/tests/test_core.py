"""
Tests core.py: grids, trajectories, the cost functional and the increment factor.
"""

import math

import numpy as np
import pytest

from monocontrol.core import (
    ControlTrajectory,
    TimeGrid,
    collocation_adjoints,
    collocation_states,
    cost,
    delta_generic,
    increment_bound_check,
    upsilon,
    xi,
)
from monocontrol.errors import NumericError, ShapeError
from monocontrol.propagators import propagate_adjoint, propagate_forward
from monocontrol.selftest import factorization_defect

from .conftest import LinearToyProblem

# 1. Grid and trajectories


def test_time_grid_spacing():
    grid = TimeGrid(1.0, 4)
    assert grid.dt == pytest.approx(0.25)
    assert np.allclose(grid.nodes(), [0.0, 0.25, 0.5, 0.75, 1.0])
    assert np.allclose(grid.midpoints(), [0.125, 0.375, 0.625, 0.875])
    assert grid.midpoint(2) == pytest.approx(0.625)


@pytest.mark.parametrize(
    "horizon, steps",
    [(0.0, 4), (-1.0, 4), (math.inf, 4), (1.0, 0), (1.0, 2.5)],
)
def test_time_grid_rejects_bad_input(horizon, steps):
    with pytest.raises(ShapeError):
        TimeGrid(horizon, steps)


def test_control_length_must_match_grid():
    with pytest.raises(ShapeError):
        ControlTrajectory(TimeGrid(1.0, 4), np.zeros(5))


def test_control_rejects_non_finite_values():
    with pytest.raises(NumericError):
        ControlTrajectory(TimeGrid(1.0, 2), np.array([0.0, np.nan]))


def test_control_values_are_frozen():
    v = ControlTrajectory.constant(TimeGrid(1.0, 3), 0.5)
    with pytest.raises(ValueError):
        v.values[0] = 1.0
    # replace() builds a new trajectory instead
    w = v.replace(np.ones(3))
    assert np.all(v.values == 0.5) and np.all(w.values == 1.0)


def test_constant_pair_control_shape():
    v = ControlTrajectory.constant(TimeGrid(1.0, 3), [1.0, 2.0], (2,))
    assert v.shape == (2,)
    assert np.allclose(v.values[:, 1], 2.0)


# 2. Cost functional


def test_cost_with_zero_dynamics_and_no_control_penalty():
    """With gain = 0 and alpha = 0, J is the same for every control."""
    toy = LinearToyProblem(gain=0.0, alpha=0.0)
    expected = toy.x0 * 1.5 + toy.terminal_weight * toy.x0
    for value in (0.0, 3.0, -7.0):
        v = ControlTrajectory.constant(toy.grid, value)
        assert cost(toy, v, propagate_forward(toy, v)) == pytest.approx(expected, rel=1e-12)


def test_cost_with_zero_dynamics_is_penalty_plus_constant():
    toy = LinearToyProblem(gain=0.0, alpha=0.5)
    v = ControlTrajectory.constant(toy.grid, 2.0)
    expected = 0.5 * 4.0 + toy.x0 * 1.5 + toy.terminal_weight * toy.x0
    assert cost(toy, v, propagate_forward(toy, v)) == pytest.approx(expected, rel=1e-12)


def test_quantum_running_cost_of_constant_control(twolevel):
    v = ControlTrajectory.constant(twolevel.grid, 0.3)
    figures = twolevel.report_costs(v, propagate_forward(twolevel, v))
    assert figures["running"] == pytest.approx(twolevel.grid.horizon * 0.09, rel=1e-10)


def test_cost_rejects_foreign_grid(toy):
    other = ControlTrajectory.constant(TimeGrid(1.0, toy.grid.steps + 1), 0.0)
    X = propagate_forward(toy, toy.default_control())
    with pytest.raises(ShapeError):
        cost(toy, other, X)


# 3. Increment factor


def test_xi_two_level_matches_definition(twolevel, rng):
    X, Y = twolevel.random_state(rng), twolevel.random_adjoint(rng)
    v = 0.3
    A = twolevel.operator(0.0, v)
    expected = -np.vdot(Y, A @ X).real + twolevel.alpha * v**2
    assert xi(twolevel, 0.0, v, X, Y) == pytest.approx(expected, rel=1e-12)


def test_generic_delta_matches_exact_bilinear_form(twolevel, rng):
    """xi is quadratic in v, so the quadrature is exact."""
    for _ in range(10):
        X, Y = twolevel.random_state(rng), twolevel.random_adjoint(rng)
        v, v_new = rng.standard_normal(2)
        generic = float(delta_generic(twolevel, v_new, v, 0.1, X, Y))
        assert generic == pytest.approx(float(twolevel.delta(0.1, v_new, v, X, Y)), abs=1e-12)


def test_generic_delta_factorizes_cubic_xi(co, rng):
    assert factorization_defect(co, rng, samples=50, generic=True) <= 1e-12


def test_delta_on_the_diagonal_is_the_gradient(problem, rng):
    X, Y = problem.random_state(rng), problem.random_adjoint(rng)
    v = problem.random_control_value(rng)
    assert np.allclose(
        problem.delta(0.0, v, v, X, Y), problem.grad_v_Xi(0.0, v, X, Y), rtol=1e-12, atol=1e-12
    )


def test_generic_delta_rejects_mismatched_shapes(co, rng):
    X, Y = co.random_state(rng), co.random_adjoint(rng)
    with pytest.raises(ShapeError):
        delta_generic(co, np.zeros(2), np.zeros(3), 0.0, X, Y)


# 4. Upsilon and the increment bound


def test_upsilon_vanishes_for_equal_controls(problem, rng):
    X, Y = problem.random_state(rng), problem.random_adjoint(rng)
    v = problem.random_control_value(rng)
    assert upsilon(problem, 0.0, v, v, X, Y, problem.random_state(rng)) == pytest.approx(
        0.0, abs=1e-14
    )


def test_upsilon_is_the_increment_pairing(problem, rng):
    """Upsilon equals dot(Delta(v', v; X_new, Y), v' - v) evaluated at the new state."""
    for _ in range(10):
        X, X_new = problem.random_state(rng), problem.random_state(rng)
        Y = problem.random_adjoint(rng)
        v, v_new = problem.random_control_value(rng), problem.random_control_value(rng)
        value = upsilon(problem, 0.2, v, v_new, X, Y, X_new)
        pairing = problem.dot(
            problem.delta(0.2, v_new, v, X_new, Y), np.asarray(v_new) - np.asarray(v), X_new
        )
        assert value == pytest.approx(pairing, rel=1e-10, abs=1e-12)


def test_upsilon_rejects_mismatched_states(twolevel, rng):
    X, Y = twolevel.random_state(rng), twolevel.random_adjoint(rng)
    with pytest.raises(ShapeError):
        upsilon(twolevel, 0.0, 0.1, 0.2, X, Y, np.zeros(3, dtype=complex))


def test_increment_bound_holds(problem, rng):
    for _ in range(3):
        v = problem.random_control(rng)
        v_new = v.replace(v.values + problem.random_control(rng).values)
        lhs, rhs = increment_bound_check(problem, v, v_new)
        assert lhs <= rhs + 1e-8 * (1.0 + abs(lhs))


def test_increment_bound_is_tight_for_equal_controls(mfg, rng):
    v = mfg.random_control(rng)
    lhs, rhs = increment_bound_check(mfg, v, v)
    assert lhs == pytest.approx(0.0, abs=1e-14)
    assert rhs == pytest.approx(0.0, abs=1e-14)


# 5. Collocation helpers


def test_backward_euler_collocation_uses_right_nodes(toy):
    v = toy.default_control()
    X = propagate_forward(toy, v)
    Y = propagate_adjoint(toy, v, X)
    assert np.array_equal(collocation_states(toy, X), X.states[1:])
    assert np.array_equal(collocation_adjoints(toy, Y), Y.states[:-1])


def test_crank_nicolson_collocation_averages_nodes(twolevel):
    v = twolevel.default_control()
    X = propagate_forward(twolevel, v)
    assert np.allclose(collocation_states(twolevel, X), 0.5 * (X.states[:-1] + X.states[1:]))
