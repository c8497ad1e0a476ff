"""
Monotonic solver: the implicit update Delta(v', v) = -theta (v' - v), the
coupled state/control solve it induces, theta adaptation and the outer loop.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray

from monocontrol.core import (
    AdjointTrajectory,
    ControlTrajectory,
    ProblemDefinition,
    StateTrajectory,
    collocation_adjoints,
    collocation_states,
    cost,
    increment_field,
    l2_norm,
    l2_pairing,
)
from monocontrol.errors import ConfigError, NumericError, ThetaOverflow, ThetaTooSmall
from monocontrol.propagators import forward_step, propagate_adjoint, propagate_forward

logger = logging.getLogger(__name__)

# Consecutive growing Picard increments treated as divergence
NON_CONTRACTION_STREAK = 5


# <~~CONFIGURATION & RECORDS~~>
@dataclass
class MonotonicConfig:
    theta_init: float = 1.0
    theta_growth: float = 2.0
    picard_tol: float = 1e-10
    picard_max: int = 200
    outer_max: int = 100
    stop_tol: float = 1e-8
    monotonicity_slack: float = 1e-9
    time_local_sweep: bool = False
    theta_ceiling_factor: float = 1e12

    def __post_init__(self):
        for name in ("theta_init", "picard_tol", "stop_tol", "monotonicity_slack"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be positive, got {value}")
        if not self.theta_growth > 1:
            raise ConfigError(f"theta_growth must exceed 1, got {self.theta_growth}")
        if self.picard_max < 1 or self.outer_max < 1:
            raise ConfigError("picard_max and outer_max must be positive")
        if not self.theta_ceiling_factor >= 1:
            raise ConfigError("theta_ceiling_factor must be at least 1")

    @property
    def theta_ceiling(self) -> float:
        return self.theta_init * self.theta_ceiling_factor


class RunStatus(str, enum.Enum):
    CONVERGED = "converged"
    ITERATION_CAP = "iteration-cap"
    THETA_OVERFLOW = "theta-overflow"
    BRACKET_FAILURE = "bracket-failure"


@dataclass
class IterationRow:
    """One accepted outer iteration. Columns a solver does not produce stay None."""

    k: int
    cost: float
    update_norm: float
    theta: float | None = None
    picard_iters: int | None = None
    descent_residual: float | None = None


@dataclass
class RunRecord:
    solver: str
    rows: list[IterationRow] = field(default_factory=list)
    status: RunStatus = RunStatus.ITERATION_CAP
    final_control: ControlTrajectory | None = None
    final_cost: float = math.nan
    final_theta: float | None = None
    cost_evaluations: int = 0

    @property
    def iterations(self) -> int:
        return len(self.rows)

    def cost_history(self) -> list[float]:
        """J(v^0), ..., J(v^K): row costs followed by the final cost."""
        return [row.cost for row in self.rows] + [self.final_cost]


class MonotonicStep(NamedTuple):
    control: ControlTrajectory
    states: StateTrajectory
    picard_iters: int


# <~~POINTWISE UPDATE~~>
def _picard_vtheta(problem, t, v, X, Y, theta, cfg) -> NDArray:
    v = np.asarray(v, dtype=np.float64)
    h = np.zeros_like(v)
    previous = math.inf
    streak = 0
    for m in range(1, cfg.picard_max + 1):
        h_next = -np.asarray(problem.delta(t, v + h, v, X, Y)) / theta
        step = problem.control_norm(h_next - h, X)
        h = h_next
        if not math.isfinite(step):
            raise ThetaTooSmall(theta, f"non-finite Picard increment at t={t:.4g}")
        if step <= cfg.picard_tol:
            logger.debug("pointwise Picard converged in %d iterations at t=%.4g", m, t)
            return v + h
        streak = streak + 1 if step > previous else 0
        if streak >= NON_CONTRACTION_STREAK:
            raise ThetaTooSmall(theta, f"Picard increments growing at t={t:.4g}")
        previous = step
    raise ThetaTooSmall(theta, f"pointwise Picard exceeded {cfg.picard_max} iterations")


def solve_vtheta(
    problem: ProblemDefinition,
    t: float,
    v,
    X: NDArray,
    Y: NDArray,
    theta: float,
    cfg: MonotonicConfig | None = None,
    use_closed_form: bool = True,
) -> NDArray:
    """Solve Delta(v', v; t, X, Y) = -theta (v' - v) for v'."""
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")
    if use_closed_form:
        closed = problem.closed_form_vtheta(t, v, X, Y, theta)
        if closed is not None:
            return np.asarray(closed, dtype=np.float64)
    return _picard_vtheta(problem, t, v, X, Y, theta, cfg or MonotonicConfig(theta_init=theta))


# <~~COUPLED STEP~~>
def _update_controls(problem, v_k, colloc, adjoints, theta, cfg) -> NDArray:
    grid = problem.grid
    out = np.empty_like(v_k.values)
    for n in range(grid.steps):
        out[n] = solve_vtheta(
            problem, grid.midpoint(n), v_k.values[n], colloc[n], adjoints[n], theta, cfg
        )
    return out


def _trajectory_step(problem, v_k, X_k, adjoints, theta, cfg) -> MonotonicStep:
    u, X = v_k, X_k
    scale = 1.0 + l2_norm(problem, v_k.values, collocation_states(problem, X_k))
    previous = math.inf
    streak = 0
    for sweep in range(1, cfg.picard_max + 1):
        colloc = collocation_states(problem, X)
        values = _update_controls(problem, v_k, colloc, adjoints, theta, cfg)
        change = l2_norm(problem, values - u.values, colloc)
        if not math.isfinite(change):
            raise ThetaTooSmall(theta, "non-finite trajectory update")
        u = v_k.replace(values)
        X = propagate_forward(problem, u)
        if change <= cfg.picard_tol * scale:
            logger.debug("trajectory Picard converged in %d sweeps", sweep)
            return MonotonicStep(u, X, sweep)
        streak = streak + 1 if change > previous else 0
        if streak >= NON_CONTRACTION_STREAK:
            raise ThetaTooSmall(theta, "trajectory Picard increments growing")
        previous = change
    raise ThetaTooSmall(theta, f"trajectory Picard exceeded {cfg.picard_max} sweeps")


def _sweep_step(problem, v_k, adjoints, theta, cfg) -> MonotonicStep:
    """Resolve each interval against the state built so far during one forward march."""
    grid = problem.grid
    w = problem.scheme.collocation_weight
    states = np.empty((grid.steps + 1, problem.state_dim), dtype=problem.dtype)
    states[0] = problem.initial_state()
    values = np.empty_like(v_k.values)
    worst = 0
    for n in range(grid.steps):
        t = grid.midpoint(n)
        previous_value = v_k.values[n]
        u = previous_value
        for it in range(1, cfg.picard_max + 1):
            nxt = forward_step(problem, n, u, states[n])
            colloc = (1.0 - w) * states[n] + w * nxt
            u_new = solve_vtheta(problem, t, previous_value, colloc, adjoints[n], theta, cfg)
            change = problem.control_norm(u_new - u, colloc)
            u = u_new
            if not math.isfinite(change):
                raise ThetaTooSmall(theta, f"non-finite sweep update on interval {n}")
            if change <= cfg.picard_tol * (1.0 + problem.control_norm(previous_value, colloc)):
                break
        else:
            raise ThetaTooSmall(theta, f"sweep did not settle on interval {n}")
        values[n] = u
        states[n + 1] = forward_step(problem, n, u, states[n])
        worst = max(worst, it)
    return MonotonicStep(v_k.replace(values), StateTrajectory(grid, states), worst)


def monotonic_step(
    problem: ProblemDefinition,
    v_k: ControlTrajectory,
    Y_k: AdjointTrajectory,
    theta: float,
    cfg: MonotonicConfig,
    X_k: StateTrajectory | None = None,
) -> MonotonicStep:
    """
    Solve the coupled system v'(t) = V_theta(t, v_k(t), X_{v'}(t), Y_k(t)).\n
    The trajectory variant iterates whole forward solves; the sweep variant
    settles each interval before marching on.
    """
    adjoints = collocation_adjoints(problem, Y_k)
    if cfg.time_local_sweep:
        return _sweep_step(problem, v_k, adjoints, theta, cfg)
    if X_k is None:
        X_k = propagate_forward(problem, v_k)
    return _trajectory_step(problem, v_k, X_k, adjoints, theta, cfg)


# <~~OUTER LOOP~~>
@dataclass
class _Accepted:
    step: MonotonicStep
    cost: float
    theta: float
    update_norm: float
    descent_residual: float


def _accept_step(problem, v, X, J, Y, theta, cfg, record) -> _Accepted:
    """Grow theta until a step passes the monotonicity and descent checks."""
    adjoints = collocation_adjoints(problem, Y)
    tolerance = cfg.monotonicity_slack * (1.0 + abs(J))
    while True:
        if theta > cfg.theta_ceiling:
            raise ThetaOverflow(theta)
        try:
            step = monotonic_step(problem, v, Y, theta, cfg, X_k=X)
        except ThetaTooSmall as e:
            logger.warning("%s; growing theta to %.3e", e, theta * cfg.theta_growth)
            theta *= cfg.theta_growth
            continue
        J_next = cost(problem, step.control, step.states)
        record.cost_evaluations += 1
        colloc = collocation_states(problem, step.states)
        dv = step.control.values - v.values
        dv_sq = l2_pairing(problem, dv, dv, colloc)
        increments = increment_field(problem, step.control.values, v.values, colloc, adjoints)
        monotonicity = l2_pairing(problem, increments, dv, colloc)
        residual = J_next - J + theta * dv_sq
        if monotonicity <= tolerance and residual <= tolerance:
            return _Accepted(step, J_next, theta, math.sqrt(max(dv_sq, 0.0)), residual)
        logger.warning(
            "descent check failed (monotonicity %.3e, residual %.3e); growing theta to %.3e",
            monotonicity,
            residual,
            theta * cfg.theta_growth,
        )
        theta *= cfg.theta_growth


def run(problem: ProblemDefinition, v0: ControlTrajectory, cfg: MonotonicConfig) -> RunRecord:
    """Iterate monotonic steps from v0 until the update norm drops below stop_tol."""
    record = RunRecord(solver="monotonic")
    theta = cfg.theta_init
    v = v0
    X = propagate_forward(problem, v)
    J = cost(problem, v, X)
    record.cost_evaluations += 1

    for k in range(cfg.outer_max):
        Y = propagate_adjoint(problem, v, X)
        try:
            accepted = _accept_step(problem, v, X, J, Y, theta, cfg, record)
        except ThetaOverflow as e:
            logger.warning("%s at iteration %d; stopping", e, k)
            record.status = RunStatus.THETA_OVERFLOW
            theta = e.theta
            break
        theta = accepted.theta
        record.rows.append(
            IterationRow(
                k,
                J,
                accepted.update_norm,
                theta,
                accepted.step.picard_iters,
                accepted.descent_residual,
            )
        )
        logger.info(
            "monotonic k=%d J=%.10e |dv|=%.3e theta=%.3e", k, J, accepted.update_norm, theta
        )
        v, X, J = accepted.step.control, accepted.step.states, accepted.cost
        if accepted.update_norm <= cfg.stop_tol:
            record.status = RunStatus.CONVERGED
            break
    else:
        record.status = RunStatus.ITERATION_CAP

    record.final_control = v
    record.final_cost = J
    record.final_theta = theta
    return record


def criticality_residual(problem: ProblemDefinition, v: ControlTrajectory) -> float:
    """L2 norm of Delta(v, v), the gradient of J under the discrete pairing."""
    X = propagate_forward(problem, v)
    Y = propagate_adjoint(problem, v, X)
    colloc = collocation_states(problem, X)
    gradient = increment_field(
        problem, v.values, v.values, colloc, collocation_adjoints(problem, Y)
    )
    value = l2_norm(problem, gradient, colloc)
    if not math.isfinite(value):
        raise NumericError("non-finite criticality residual")
    return value
