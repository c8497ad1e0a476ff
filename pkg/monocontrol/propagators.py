"""Forward and adjoint time stepping, plus a dense exponential oracle for small systems."""

import logging

import numpy as np
import scipy.linalg
import scipy.sparse as sparse
from numpy.typing import NDArray
from scipy.sparse.linalg import splu

from monocontrol.core import (
    AdjointTrajectory,
    ControlTrajectory,
    ProblemDefinition,
    SchemeTag,
    StateTrajectory,
    check_compatible,
)
from monocontrol.errors import PropagationError

logger = logging.getLogger(__name__)


# <~~STEP SYSTEMS~~>
def _step_matrices(problem: ProblemDefinition, n: int, v_n, adjoint: bool):
    """(I + w dt A, I - (1 - w) dt A) for interval n, A conjugate-transposed if adjoint."""
    dt = problem.grid.dt
    w = problem.scheme.collocation_weight
    A = sparse.csr_matrix(problem.operator(problem.grid.midpoint(n), v_n))
    if adjoint:
        A = A.conj().T.tocsr()
    identity = sparse.identity(problem.state_dim, dtype=problem.dtype, format="csr")
    left = (identity + (w * dt) * A).tocsc()
    right = identity - ((1.0 - w) * dt) * A
    return left, right


def _solve(left, rhs: NDArray, n: int) -> NDArray:
    try:
        out = splu(left).solve(np.ascontiguousarray(rhs))
    except RuntimeError as e:
        # splu raises RuntimeError on an exactly singular factor
        raise PropagationError(n, f"singular step matrix ({e})") from e
    if not np.all(np.isfinite(out)):
        raise PropagationError(n, "non-finite state")
    return out


def _exponential_step(problem: ProblemDefinition, n: int, v_n, X_n: NDArray) -> NDArray:
    """Exact affine step: X_{n+1} = e^{-dt A} X_n + int_0^dt e^{-s A} B ds."""
    dt = problem.grid.dt
    t = problem.grid.midpoint(n)
    A = sparse.csr_matrix(problem.operator(t, v_n)).toarray().astype(problem.dtype)
    if not problem.has_source:
        out = scipy.linalg.expm(-dt * A) @ X_n
    else:
        dim = problem.state_dim
        augmented = np.zeros((dim + 1, dim + 1), dtype=problem.dtype)
        augmented[:dim, :dim] = -A
        augmented[:dim, dim] = problem.eval_B(t, v_n)
        flow = scipy.linalg.expm(dt * augmented)
        out = flow[:dim, :dim] @ X_n + flow[:dim, dim]
    if not np.all(np.isfinite(out)):
        raise PropagationError(n, "non-finite state")
    return out


# <~~FORWARD~~>
def forward_step(problem: ProblemDefinition, n: int, v_n, X_n: NDArray) -> NDArray:
    """Advance X_n across interval n with control value v_n."""
    if problem.scheme is SchemeTag.DENSE_EXPONENTIAL_ORACLE:
        return _exponential_step(problem, n, v_n, X_n)
    left, right = _step_matrices(problem, n, v_n, adjoint=False)
    rhs = right @ X_n
    if problem.has_source:
        rhs = rhs + problem.grid.dt * problem.eval_B(problem.grid.midpoint(n), v_n)
    return _solve(left, rhs, n)


def propagate_forward(problem: ProblemDefinition, v: ControlTrajectory) -> StateTrajectory:
    """Solve the state equation from the problem's initial state under control v."""
    check_compatible(problem, v)
    problem.validate_control(v)
    grid = problem.grid
    logger.debug("forward solve: %s, %d steps of %.3e", problem.name, grid.steps, grid.dt)
    states = np.empty((grid.steps + 1, problem.state_dim), dtype=problem.dtype)
    states[0] = problem.initial_state()
    for n in range(grid.steps):
        states[n + 1] = forward_step(problem, n, v.values[n], states[n])
    return StateTrajectory(grid, states)


def dense_exponential_oracle(problem: ProblemDefinition, v: ControlTrajectory) -> StateTrajectory:
    """Forward solve with exact matrix exponentials on each interval. Small systems only."""
    check_compatible(problem, v)
    grid = problem.grid
    states = np.empty((grid.steps + 1, problem.state_dim), dtype=problem.dtype)
    states[0] = problem.initial_state()
    for n in range(grid.steps):
        states[n + 1] = _exponential_step(problem, n, v.values[n], states[n])
    return StateTrajectory(grid, states)


# <~~ADJOINT~~>
def propagate_adjoint(
    problem: ProblemDefinition, v: ControlTrajectory, X: StateTrajectory
) -> AdjointTrajectory:
    """
    Backward solve of the discrete adjoint of the forward scheme.\n
    Y_N = grad G(X_N) and, per interval,
    (I + w dt A*) Y_n = (I - (1 - w) dt A*) Y_{n+1} + dt grad_X F(t_{n+1/2}, v_n, X^c_n).
    """
    check_compatible(problem, v, X)
    grid = problem.grid
    dt = grid.dt
    w = problem.scheme.collocation_weight
    adjoints = np.empty((grid.steps + 1, problem.state_dim), dtype=problem.dtype)
    adjoints[-1] = problem.grad_X_G(X.final)
    for n in reversed(range(grid.steps)):
        t = grid.midpoint(n)
        colloc = (1.0 - w) * X.states[n] + w * X.states[n + 1]
        source = dt * np.asarray(problem.grad_X_F(t, v.values[n], colloc))
        if problem.scheme is SchemeTag.DENSE_EXPONENTIAL_ORACLE:
            A = sparse.csr_matrix(problem.operator(t, v.values[n])).toarray()
            flow = scipy.linalg.expm(-dt * A.conj().T)
            adjoints[n] = flow @ adjoints[n + 1] + source
            continue
        left, right = _step_matrices(problem, n, v.values[n], adjoint=True)
        adjoints[n] = _solve(left, right @ adjoints[n + 1] + source, n)
    return AdjointTrajectory(grid, adjoints)
