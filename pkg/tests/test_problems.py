"""
Tests problems.py: physical setup of each shipped problem and the registry.
"""

import logging
import math

import numpy as np
import pytest

from monocontrol.core import ControlTrajectory
from monocontrol.errors import ProblemConstructionError
from monocontrol.monotonic import MonotonicConfig, criticality_residual, solve_vtheta
from monocontrol.problems import (
    CoParams,
    MfgParams,
    MorseParams,
    TwoLevelParams,
    build_co,
    build_mfg,
    build_morse,
    build_problem,
    build_twolevel,
)
from monocontrol.selftest import concavity_violation, factorization_defect

# 1. Morse oscillator


def test_morse_potential_minimum_is_minus_well_depth(morse):
    p = morse.params
    assert morse.morse_potential(np.array([p.equilibrium]))[0] == pytest.approx(-p.well_depth)


def test_morse_observable_integrates_to_one():
    problem = build_morse(steps=10)
    assert np.sum(problem.observable) * problem.spacing == pytest.approx(1.0, abs=1e-6)


def test_morse_ground_state_converges_with_grid():
    coarse = build_morse(grid_points=512, steps=10)
    fine = build_morse(grid_points=2048, steps=10)
    assert abs(coarse.ground_energy - fine.ground_energy) <= 1e-4
    # bound state below the dissociation limit
    assert -coarse.params.well_depth < coarse.ground_energy < 0.0


def test_morse_initial_state_is_normalized(morse):
    assert morse.norm(morse.initial_state()) == pytest.approx(1.0, rel=1e-12)


def test_morse_yield_is_reported(morse):
    v = morse.default_control()
    from monocontrol.propagators import propagate_forward

    figures = morse.report_costs(v, propagate_forward(morse, v))
    assert figures["target_yield"] == pytest.approx(-figures["terminal"])
    assert 0.0 <= figures["target_yield"]


@pytest.mark.parametrize(
    "kwargs, grid_points",
    [({}, 32), ({"well_depth": -1.0}, 128), ({"z_min": 9.0}, 128), ({"alpha": 0.0}, 128)],
)
def test_morse_rejects_bad_parameters(kwargs, grid_points):
    with pytest.raises(ProblemConstructionError):
        build_morse(MorseParams(**kwargs), grid_points=grid_points, steps=10)


# 2. Mean-field crowd model


def test_mfg_running_cost_of_uniform_density(mfg):
    """Midpoint cells integrate the linear price and crowd terms exactly."""
    X = np.ones(mfg.state_dim)
    expected = (1.0 - 0.5 * 0.8) + 0.5 / 1.1
    assert mfg.running_cost(0.0, np.zeros(mfg.state_dim), X) == pytest.approx(expected, rel=1e-12)


def test_mfg_operator_columns_sum_to_zero(mfg, rng):
    A = mfg.operator(0.0, rng.standard_normal(mfg.state_dim)).toarray()
    assert np.abs(A.sum(axis=0)).max() <= 1e-9


def test_mfg_adjoint_gradient_is_centered_difference(mfg):
    gradient = mfg.adjoint_gradient(mfg.z.copy())
    assert np.allclose(gradient[1:-1], 1.0)


def test_mfg_state_gradient_matches_finite_difference(mfg, rng):
    X = mfg.random_state(rng)
    d = rng.standard_normal(mfg.state_dim)
    v = rng.standard_normal(mfg.state_dim)
    eps = 1e-6
    numeric = (mfg.running_cost(0.0, v, X + eps * d) - mfg.running_cost(0.0, v, X - eps * d)) / (
        2 * eps
    )
    assert mfg.inner(mfg.grad_X_F(0.0, v, X), d) == pytest.approx(numeric, rel=1e-6)


def test_mfg_initial_mass(mfg):
    assert mfg.mass(mfg.initial_state()) == pytest.approx(1.0)


def test_mfg_warns_above_positivity_bound(mfg, caplog):
    v = ControlTrajectory.constant(mfg.grid, 2.0 * mfg.positivity_bound, mfg.control_shape)
    with caplog.at_level(logging.WARNING, logger="monocontrol.problems"):
        mfg.validate_control(v)
    assert "positivity bound" in caplog.text


def test_mfg_rejects_coarse_grid():
    with pytest.raises(ProblemConstructionError):
        build_mfg(MfgParams(), grid_points=16, steps=10)


# 3. Molecular orientation


def test_co_first_cosine_element():
    problem = build_co(steps=10)
    assert problem.cosine[0, 1] == pytest.approx(1.0 / math.sqrt(3.0))
    assert problem.orientation(problem.initial_state()) == pytest.approx(0.0)


def test_co_horizon_counts_rotational_periods():
    params = CoParams(periods=3.0)
    assert build_co(params, steps=10).grid.horizon == pytest.approx(3.0 * math.pi / 1.93)


def test_co_unit_rotational_constant():
    problem = build_co(CoParams(include_rotational_constant=False, basis_size=5), steps=10)
    assert np.allclose(np.diag(problem.hamiltonian), [0, 2, 6, 12, 20])


def test_co_terminal_cost_on_unit_sphere(co, rng):
    X = co.random_state(rng)
    assert co.terminal_cost(X) == pytest.approx(-co.orientation(X), abs=1e-12)


def test_co_factorization_is_exact(co, rng):
    assert factorization_defect(co, rng, samples=100) <= 1e-12


def test_co_update_solves_component_two_first(co, rng):
    """
    The pointwise update of the pair control decouples: the second component
    solves a linear equation, the first follows from it. Writing the solution
    with the components exchanged does not satisfy the update equation.
    """
    theta = co.default_theta
    cfg = MonotonicConfig(theta_init=theta, picard_tol=1e-13)
    for _ in range(10):
        X, Y = co.random_state(rng), co.random_adjoint(rng)
        v = co.random_control_value(rng)
        xi1, xi2 = co.xi_coefficients(X, Y)
        v1, v2 = v

        def residual(candidate):
            return np.linalg.norm(co.delta(0.0, candidate, v, X, Y) + theta * (candidate - v))

        picard = solve_vtheta(co, 0.0, v, X, Y, theta, cfg, use_closed_form=False)
        assert residual(picard) <= 1e-8

        w2 = ((theta - xi1) * v2 - xi2 * v1**2) / (theta + xi1)
        w1 = (theta - xi1 - xi2 * w2) / (theta + xi1 + xi2 * w2) * v1
        assert np.allclose(picard, [w1, w2], atol=1e-10)

        swapped_first = w2
        swapped_second = -(theta - xi1 + xi2 * swapped_first) / (
            theta + xi1 + xi2 * swapped_first
        ) * v1
        assert residual(np.array([swapped_first, swapped_second])) > 1e-3


def test_co_default_control_is_not_the_trivial_critical_point(co):
    zero = ControlTrajectory.constant(co.grid, 0.0, (2,))
    assert criticality_residual(co, zero) == 0.0
    assert criticality_residual(co, co.default_control()) > 1e-2


# 4. Two-level system


def test_two_level_cost_equals_distance_on_unit_sphere(twolevel, rng):
    for _ in range(10):
        X = twolevel.random_state(rng)
        assert twolevel.terminal_cost(X) == pytest.approx(twolevel.distance_cost(X), abs=1e-12)


def test_two_level_rejects_negative_alpha():
    with pytest.raises(ProblemConstructionError):
        build_twolevel(TwoLevelParams(alpha=-1.0))


# 5. Concavity and registry


def test_state_costs_are_concave(problem, rng):
    assert concavity_violation(problem, rng) <= 1e-10


def test_build_problem_default_sizes():
    problem = build_problem("mfg")
    assert problem.state_dim == 64
    assert problem.grid.steps == 100
    assert build_problem("twolevel", time_steps=32).grid.steps == 32


def test_build_problem_unknown_name():
    with pytest.raises(ProblemConstructionError):
        build_problem("pendulum")
