"""Shared fixtures: reduced problems and a linear-quadratic toy problem with a known minimizer."""

import numpy as np
import pytest
import scipy.sparse as sparse

from monocontrol.core import ControlKind, ControlTrajectory, ProblemDefinition, SchemeTag, TimeGrid
from monocontrol.problems import (
    CoParams,
    MorseParams,
    build_co,
    build_mfg,
    build_morse,
    build_twolevel,
)


class LinearToyProblem(ProblemDefinition):
    """
    dX/dt = g v on a scalar state, F = alpha v^2 + q(t) X, G = c X, backward Euler.\n
    J is quadratic in v with minimizer v_m = -g (c + dt sum_{n>=m} q_n) / (2 alpha).
    """

    name = "toy"
    scheme = SchemeTag.IMPLICIT_PARABOLIC
    control_kind = ControlKind.SCALAR

    def __init__(
        self,
        steps: int = 16,
        horizon: float = 1.0,
        alpha: float = 0.5,
        terminal_weight: float = 0.3,
        gain: float = 1.0,
        running_weight: float = 1.0,
        x0: float = 0.2,
    ):
        super().__init__(TimeGrid(horizon, steps), 1, is_complex=False)
        self.alpha = alpha
        self.terminal_weight = terminal_weight
        self.gain = gain
        self.running_weight = running_weight
        self.x0 = x0

    def rate(self, t: float) -> float:
        return self.running_weight * (1.0 + t)

    def operator(self, t, v):
        return sparse.csr_matrix((1, 1))

    @property
    def has_source(self):
        return self.gain != 0

    def eval_B(self, t, v):
        return np.array([self.gain * float(v)])

    def running_cost(self, t, v, X):
        return self.alpha * float(v) ** 2 + self.rate(t) * float(X[0])

    def grad_X_F(self, t, v, X):
        return np.array([self.rate(t)])

    def terminal_cost(self, X):
        return self.terminal_weight * float(X[0])

    def grad_X_G(self, X):
        return np.array([self.terminal_weight])

    def initial_state(self):
        return np.array([self.x0])

    def grad_v_Xi(self, t, v, X, Y):
        return np.asarray(self.gain * float(Y[0]) + 2.0 * self.alpha * float(v))

    def minimizer(self) -> ControlTrajectory:
        grid = self.grid
        rates = np.array([self.rate(t) for t in grid.midpoints()])
        tail = np.cumsum(rates[::-1])[::-1] * grid.dt
        return ControlTrajectory(
            grid, -self.gain * (self.terminal_weight + tail) / (2.0 * self.alpha)
        )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy():
    return LinearToyProblem()


@pytest.fixture
def twolevel():
    return build_twolevel(steps=64)


@pytest.fixture
def morse():
    return build_morse(MorseParams(horizon=2000.0), grid_points=64, steps=200)


@pytest.fixture
def mfg():
    return build_mfg(grid_points=32, steps=40)


@pytest.fixture
def co():
    return build_co(CoParams(basis_size=8, periods=2.0), steps=200)


@pytest.fixture(params=["twolevel", "morse", "mfg", "co"])
def problem(request):
    """Every shipped problem at a reduced size."""
    return request.getfixturevalue(request.param)


@pytest.fixture
def log_dir(tmp_path, monkeypatch):
    """Keep CLI logs out of the user data directory."""
    import monocontrol.cli as cli
    from monocontrol.globals import init_logger

    target = tmp_path / "logs"
    monkeypatch.setattr(
        cli, "init_logger", lambda verbose=False: init_logger(verbose, log_dir=str(target))
    )
    return target
