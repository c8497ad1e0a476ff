"""
Tests monotonic.py: the pointwise update, the coupled step, theta adaptation and
the outer loop's descent guarantee.
"""

import numpy as np
import pytest

from monocontrol.core import (
    ControlTrajectory,
    collocation_adjoints,
    collocation_states,
    cost,
)
from monocontrol.errors import ConfigError, ThetaTooSmall
from monocontrol.monotonic import (
    MonotonicConfig,
    RunStatus,
    criticality_residual,
    monotonic_step,
    run,
    solve_vtheta,
)
from monocontrol.problems import (
    CoParams,
    MorseParams,
    build_co,
    build_mfg,
    build_morse,
    build_twolevel,
)
from monocontrol.propagators import propagate_adjoint, propagate_forward
from monocontrol.selftest import closed_form_defect

from .conftest import LinearToyProblem


def _assert_nonincreasing(record, slack=1e-9):
    history = record.cost_history()
    for before, after in zip(history, history[1:]):
        assert after <= before + slack * (1.0 + abs(before))


# 1. Configuration


@pytest.mark.parametrize(
    "kwargs",
    [
        {"theta_init": 0.0},
        {"theta_growth": 1.0},
        {"picard_tol": -1.0},
        {"outer_max": 0},
        {"theta_ceiling_factor": 0.5},
    ],
)
def test_config_rejects_bad_values(kwargs):
    with pytest.raises(ConfigError):
        MonotonicConfig(**kwargs)


# 2. Pointwise update


def test_closed_forms_agree_with_picard(problem, rng):
    if not problem.has_closed_form:
        pytest.skip(f"{problem.name} has no explicit update")
    assert closed_form_defect(problem, rng, samples=20) <= 1e-10


def test_picard_satisfies_update_equation_without_closed_form(co, rng):
    assert closed_form_defect(co, rng, samples=20) <= 1e-8


def test_zero_alpha_update_is_a_single_gradient_step(rng):
    """With a control-independent gradient the fixed point is v - grad / theta."""
    toy = LinearToyProblem(alpha=0.0)
    X, Y = np.array([0.4]), np.array([1.7])
    theta = 2.0
    updated = solve_vtheta(toy, 0.0, 0.3, X, Y, theta)
    assert float(updated) == pytest.approx(0.3 - toy.gain * 1.7 / theta, rel=1e-14)


def test_mfg_explicit_update(mfg, rng):
    X, Y = mfg.random_state(rng), mfg.random_adjoint(rng)
    v = rng.standard_normal(mfg.state_dim)
    theta = 3.0
    expected = ((theta - 0.5) * v - mfg.adjoint_gradient(Y)) / (theta + 0.5)
    assert np.allclose(solve_vtheta(mfg, 0.0, v, X, Y, theta), expected)


def test_nonpositive_theta_is_rejected(twolevel, rng):
    X, Y = twolevel.random_state(rng), twolevel.random_adjoint(rng)
    with pytest.raises(ValueError):
        solve_vtheta(twolevel, 0.0, 0.1, X, Y, 0.0)


def test_picard_reports_small_theta():
    """Generic Picard diverges once the penalty curvature exceeds theta."""
    toy = LinearToyProblem(alpha=1.0)
    with pytest.raises(ThetaTooSmall):
        solve_vtheta(toy, 0.0, 0.1, np.array([0.0]), np.array([1.0]), 1e-3)


# 3. Coupled step


def _step_inputs(problem, theta, sweep=False):
    v = problem.default_control()
    X = propagate_forward(problem, v)
    Y = propagate_adjoint(problem, v, X)
    cfg = MonotonicConfig(theta_init=theta, time_local_sweep=sweep)
    return v, X, Y, cfg


def test_step_satisfies_fixed_point_pointwise(twolevel):
    theta = twolevel.default_theta
    v, X, Y, cfg = _step_inputs(twolevel, theta)
    step = monotonic_step(twolevel, v, Y, theta, cfg, X_k=X)
    colloc = collocation_states(twolevel, step.states)
    adjoints = collocation_adjoints(twolevel, Y)
    for n in range(twolevel.grid.steps):
        expected = twolevel.closed_form_vtheta(0.0, v.values[n], colloc[n], adjoints[n], theta)
        assert float(step.control.values[n]) == pytest.approx(float(expected), abs=1e-8)


def test_step_states_follow_the_new_control(mfg):
    v, X, Y, cfg = _step_inputs(mfg, mfg.default_theta)
    step = monotonic_step(mfg, v, Y, mfg.default_theta, cfg, X_k=X)
    assert np.allclose(step.states.states, propagate_forward(mfg, step.control).states)


@pytest.mark.parametrize("name", ["twolevel", "morse", "mfg", "co"])
def test_sweep_and_trajectory_variants_agree(name, request):
    problem = request.getfixturevalue(name)
    theta = problem.default_theta
    v, X, Y, cfg = _step_inputs(problem, theta)
    trajectory = monotonic_step(problem, v, Y, theta, cfg, X_k=X)
    _, _, _, sweep_cfg = _step_inputs(problem, theta, sweep=True)
    sweep = monotonic_step(problem, v, Y, theta, sweep_cfg)
    assert np.allclose(trajectory.control.values, sweep.control.values, atol=1e-8)


def test_sweep_handles_small_theta_on_morse(morse):
    """The sweep resolves one interval at a time, so small theta stays usable."""
    theta = morse.default_theta
    assert theta == pytest.approx(1e-2) and morse.alpha == pytest.approx(1.0)
    v, X, Y, cfg = _step_inputs(morse, theta, sweep=True)
    step = monotonic_step(morse, v, Y, theta, cfg)
    assert step.picard_iters >= 1
    # v^{k+1} = ((theta - alpha) v^k - Re<P, i mu X^{k+1}>) / (theta + alpha) on every interval
    colloc = collocation_states(morse, step.states)
    adjoints = collocation_adjoints(morse, Y)
    for n in range(morse.grid.steps):
        expected = ((theta - morse.alpha) * v.values[n]) - morse.dipole_coupling(
            colloc[n], adjoints[n]
        )
        expected /= theta + morse.alpha
        assert float(step.control.values[n]) == pytest.approx(expected, abs=1e-8)


def test_sweep_states_follow_the_new_control(morse):
    theta = morse.default_theta
    v, X, Y, cfg = _step_inputs(morse, theta, sweep=True)
    step = monotonic_step(morse, v, Y, theta, cfg)
    assert np.allclose(step.states.states, propagate_forward(morse, step.control).states)


def test_critical_control_is_a_fixed_point():
    toy = LinearToyProblem()
    v = toy.minimizer()
    X = propagate_forward(toy, v)
    Y = propagate_adjoint(toy, v, X)
    step = monotonic_step(toy, v, Y, 1.0, MonotonicConfig(), X_k=X)
    assert np.allclose(step.control.values, v.values, atol=1e-12)
    assert step.picard_iters == 1


# 4. Outer loop


def test_run_stops_immediately_at_a_critical_point():
    toy = LinearToyProblem()
    record = run(toy, toy.minimizer(), MonotonicConfig(outer_max=20))
    assert record.status is RunStatus.CONVERGED
    assert record.iterations == 1
    assert record.rows[0].k == 0
    assert record.rows[0].update_norm <= 1e-8


def test_run_reaches_the_toy_minimizer():
    toy = LinearToyProblem()
    record = run(toy, toy.default_control(), MonotonicConfig(outer_max=200, stop_tol=1e-12))
    assert record.status is RunStatus.CONVERGED
    assert np.allclose(record.final_control.values, toy.minimizer().values, atol=1e-8)


@pytest.mark.parametrize("name", ["twolevel", "mfg", "co"])
def test_run_never_increases_cost(name, request):
    problem = request.getfixturevalue(name)
    record = run(
        problem,
        problem.default_control(),
        MonotonicConfig(theta_init=problem.default_theta, outer_max=8),
    )
    assert record.iterations >= 1
    _assert_nonincreasing(record)
    for row in record.rows:
        assert row.descent_residual <= 1e-9 * (1.0 + abs(row.cost))


@pytest.mark.parametrize("name", ["twolevel", "co"])
def test_fifty_iterations_satisfy_the_descent_bound(name, request):
    problem = request.getfixturevalue(name)
    record = run(
        problem,
        problem.default_control(),
        MonotonicConfig(theta_init=problem.default_theta, outer_max=50),
    )
    assert record.status is not RunStatus.THETA_OVERFLOW
    _assert_nonincreasing(record)
    for row in record.rows:
        assert row.descent_residual <= 1e-9 * (1.0 + abs(row.cost))


def test_mfg_fifty_iterations_descend():
    problem = build_mfg()
    record = run(
        problem,
        problem.default_control(),
        MonotonicConfig(theta_init=problem.default_theta, outer_max=50),
    )
    _assert_nonincreasing(record)
    assert record.final_cost < record.rows[0].cost
    for row in record.rows:
        assert row.descent_residual <= 1e-9 * (1.0 + abs(row.cost))


def test_run_records_consistent_final_cost(twolevel):
    cfg = MonotonicConfig(theta_init=10.0, outer_max=5)
    record = run(twolevel, twolevel.default_control(), cfg)
    X = propagate_forward(twolevel, record.final_control)
    assert record.final_cost == pytest.approx(cost(twolevel, record.final_control, X), rel=1e-12)
    assert record.final_theta >= 10.0


def test_criticality_residual_vanishes_at_convergence(twolevel):
    cfg = MonotonicConfig(theta_init=twolevel.default_theta, outer_max=2000, stop_tol=1e-8)
    record = run(twolevel, twolevel.default_control(), cfg)
    assert record.status is RunStatus.CONVERGED
    residual = criticality_residual(twolevel, record.final_control)
    assert residual <= 10.0 * record.final_theta * cfg.stop_tol


def test_criticality_residual_matches_toy_gradient():
    toy = LinearToyProblem()
    assert criticality_residual(toy, toy.minimizer()) <= 1e-12
    assert criticality_residual(toy, ControlTrajectory.constant(toy.grid, 0.0)) > 0.1


def test_criticality_residual_vanishes_without_control_dependence():
    toy = LinearToyProblem(gain=0.0, alpha=0.0)
    v = ControlTrajectory(toy.grid, np.cos(toy.grid.midpoints()))
    assert criticality_residual(toy, v) == 0.0


def test_criticality_residual_matches_finite_difference_gradient(rng):
    problem = build_twolevel(steps=16)
    v = problem.random_control(rng)
    dt, eps = problem.grid.dt, 1e-6

    def J(values):
        trial = v.replace(values)
        return cost(problem, trial, propagate_forward(problem, trial))

    partials = []
    for n in range(problem.grid.steps):
        bump = np.zeros(problem.grid.steps)
        bump[n] = eps
        partials.append((J(v.values + bump) - J(v.values - bump)) / (2 * eps))
    # dJ/dv_n = dt g_n under the discrete pairing
    numeric = np.sqrt(np.sum(np.square(partials)) / dt)
    assert criticality_residual(problem, v) == pytest.approx(numeric, rel=1e-5)


def test_theta_overflow_is_reported():
    toy = LinearToyProblem(alpha=1.0)
    cfg = MonotonicConfig(theta_init=1e-3, theta_ceiling_factor=4.0, outer_max=10)
    v0 = toy.default_control()
    record = run(toy, v0, cfg)
    assert record.status is RunStatus.THETA_OVERFLOW
    assert record.iterations == 0
    assert record.final_theta > cfg.theta_ceiling
    assert np.array_equal(record.final_control.values, v0.values)


@pytest.mark.slow
def test_co_runs_without_theta_growth():
    problem = build_co(steps=2000)
    record = run(
        problem,
        problem.default_control(),
        MonotonicConfig(theta_init=problem.default_theta, outer_max=10),
    )
    assert record.iterations == 10
    assert {row.theta for row in record.rows} == {problem.default_theta}
    _assert_nonincreasing(record)


@pytest.mark.slow
def test_morse_fifty_iterations_descend():
    problem = build_morse(MorseParams(horizon=5000.0), grid_points=128, steps=1000)
    cfg = MonotonicConfig(theta_init=problem.default_theta, outer_max=50, time_local_sweep=True)
    record = run(problem, problem.default_control(), cfg)
    _assert_nonincreasing(record)
    assert record.final_cost < record.rows[0].cost


@pytest.mark.slow
def test_co_reduced_basis_descends():
    problem = build_co(CoParams(basis_size=8, periods=4.0), steps=400)
    record = run(
        problem,
        problem.default_control(),
        MonotonicConfig(theta_init=problem.default_theta, outer_max=30),
    )
    _assert_nonincreasing(record)
