"""Fixed-step explicit integrators and forward sensitivity propagation.

`integrate_with_sensitivity` steps the augmented pair (x, S) with the same
method and the same stage states, so S is the exact derivative of the
discrete trajectory with respect to the parameters: differentiating an
explicit Runge-Kutta step is the same step applied to the variational
dynamics dS/dt = (df/dx) S + df/dw evaluated at the stage values.

Integrators are pure; independent trajectories may run on parallel workers
against shared read-only systems. One trajectory's sensitivity recursion is
inherently serial.
"""

from __future__ import annotations

import csv
import inspect
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import IntegrationError, StructuralError
from .network import OdeSystem

__all__ = [
    "Trajectory",
    "SensitivityTrace",
    "step",
    "integrate",
    "integrate_with_sensitivity",
    "order_estimate",
    "zoh_input",
    "write_trajectory_csv",
    "read_trajectory_csv",
]

_STAGE_OFFSETS = {
    "midpoint": (0.0, 0.5),
    "rk4": (0.0, 0.5, 0.5, 1.0),
}
RHS_EVALS_PER_STEP = {"midpoint": 2, "rk4": 4}


# --------------------------------------------------------------------------
# data containers
# --------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Uniformly sampled time grid with states, inputs and outputs."""

    times: np.ndarray                 # (T+1,)
    states: np.ndarray                # (T+1, n)
    inputs: np.ndarray                # (T+1, k)
    outputs: np.ndarray               # (T+1, p)
    rhs_evals: int = 0

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.outputs = np.atleast_2d(np.asarray(self.outputs, dtype=float))
        T = self.times.size
        for name, arr in (("states", self.states), ("inputs", self.inputs),
                          ("outputs", self.outputs)):
            if arr.shape[0] != T:
                raise StructuralError(f"{name} rows ({arr.shape[0]}) != times ({T})")
        if T >= 2:
            dt = np.diff(self.times)
            if np.any(dt <= 0):
                raise StructuralError("times must be strictly increasing")

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0]) if self.times.size > 1 else 0.0

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


@dataclass
class SensitivityTrace:
    """d(state)/d(params) along a trajectory, shape (T+1, n, m)."""

    matrices: np.ndarray

    def __post_init__(self):
        self.matrices = np.asarray(self.matrices, dtype=float)
        if self.matrices.ndim != 3:
            raise StructuralError("sensitivity trace must be (T+1, n, m)")

    def __getitem__(self, i) -> np.ndarray:
        return self.matrices[i]

    @property
    def shape(self):
        return self.matrices.shape


# --------------------------------------------------------------------------
# stepping
# --------------------------------------------------------------------------

def _check_finite(x, t):
    if not np.all(np.isfinite(x)):
        raise IntegrationError(t)


def step(method: str, rhs: Callable, x: np.ndarray, u, t: float, h: float):
    """One explicit step x(t) -> x(t+h).

    `u` supplies the input at the stage times: a callable of t, a sequence
    with one entry per stage, a fixed vector, or None. `rhs(x, u, t)` must
    return the state derivative; midpoint spends exactly 2 evaluations and
    rk4 exactly 4.
    """
    if h <= 0:
        raise StructuralError("step size must be positive")
    if method not in _STAGE_OFFSETS:
        raise StructuralError(f"unknown method {method!r}")
    offsets = _STAGE_OFFSETS[method]

    def u_at(stage: int):
        if u is None:
            return None
        if callable(u):
            return u(t + offsets[stage] * h)
        if isinstance(u, (list, tuple)):
            return u[stage]
        return u

    x = np.asarray(x, dtype=float)
    if method == "midpoint":
        k1 = np.asarray(rhs(x, u_at(0), t))
        _check_finite(k1, t)
        k2 = np.asarray(rhs(x + 0.5 * h * k1, u_at(1), t + 0.5 * h))
        _check_finite(k2, t + 0.5 * h)
        x_next = x + h * k2
    else:
        k1 = np.asarray(rhs(x, u_at(0), t))
        _check_finite(k1, t)
        k2 = np.asarray(rhs(x + 0.5 * h * k1, u_at(1), t + 0.5 * h))
        _check_finite(k2, t + 0.5 * h)
        k3 = np.asarray(rhs(x + 0.5 * h * k2, u_at(2), t + 0.5 * h))
        _check_finite(k3, t + 0.5 * h)
        k4 = np.asarray(rhs(x + h * k3, u_at(3), t + h))
        _check_finite(k4, t + h)
        x_next = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    _check_finite(x_next, t + h)
    return x_next


def _grid(t_end: float, h: float) -> int:
    if t_end <= 0 or h <= 0:
        raise StructuralError("t_end and h must be positive")
    n_steps = int(round(t_end / h))
    if n_steps < 1 or abs(n_steps * h - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise StructuralError(f"step {h} does not divide horizon {t_end}")
    return n_steps


def _input_fn(sys: OdeSystem, input_signal):
    """Normalize the input source to (callable (t, x) -> vector, state-dep?).

    A one-argument signal is a pure time signal (evaluated exactly at stage
    times, which realizes zero-order hold for data-defined interpolators);
    a two-argument signal is state feedback and is evaluated at stage states.
    """
    sig = input_signal if input_signal is not None else sys.default_input
    if sig is None:
        fixed = np.zeros(sys.input_dim)
        return (lambda t, x: fixed), False
    try:
        n_args = len(inspect.signature(sig).parameters)
    except (TypeError, ValueError):
        n_args = 1
    if n_args >= 2:
        return (lambda t, x: np.atleast_1d(np.asarray(sig(t, x), dtype=float))), True
    return (lambda t, x: np.atleast_1d(np.asarray(sig(t), dtype=float))), False


def zoh_input(times: np.ndarray, values: np.ndarray):
    """Zero-order-hold interpolator for data-defined input signals."""
    times = np.asarray(times, dtype=float)
    values = np.atleast_2d(np.asarray(values, dtype=float))

    def u(t, x=None):
        i = int(np.searchsorted(times, t + 1e-12, side="right") - 1)
        i = min(max(i, 0), times.size - 1)
        return values[i]

    return u


def integrate(
    sys: OdeSystem,
    x0: np.ndarray,
    input_signal=None,
    t_end: float = 1.0,
    h: float = 0.01,
    method: str = "midpoint",
    w: Optional[np.ndarray] = None,
) -> Trajectory:
    """Simulate on the uniform grid, recording states, inputs and outputs."""
    n_steps = _grid(t_end, h)
    w = sys.params.values if w is None else np.asarray(w, dtype=float)
    u_fn, state_dep = _input_fn(sys, input_signal)

    counter = [0]

    if state_dep:
        # fold the feedback into the rhs so stages see stage states
        def rhs(x, u, t):
            counter[0] += 1
            return sys.rhs(x, u_fn(t, x), t, w)

        def u_for_step(t):
            return None
    else:
        def rhs(x, u, t):
            counter[0] += 1
            return sys.rhs(x, u, t, w)

        def u_for_step(t):
            return lambda ts: u_fn(ts, None)

    x = np.asarray(x0, dtype=float).copy()
    if x.size != sys.state_dim:
        raise StructuralError(f"x0 has {x.size} entries, expected {sys.state_dim}")
    times = np.linspace(0.0, n_steps * h, n_steps + 1)
    states = np.empty((n_steps + 1, sys.state_dim))
    inputs = np.empty((n_steps + 1, sys.input_dim))
    outputs = np.empty((n_steps + 1, sys.output_dim))

    for i, t in enumerate(times):
        states[i] = x
        u_now = u_fn(t, x)
        inputs[i] = u_now
        outputs[i] = sys.output(x, u_now, w)
        if i < n_steps:
            x = step(method, rhs, x, u_for_step(t), t, h)
    return Trajectory(times, states, inputs, outputs, rhs_evals=counter[0])


def integrate_with_sensitivity(
    sys: OdeSystem,
    x0: np.ndarray,
    input_signal=None,
    t_end: float = 1.0,
    h: float = 0.01,
    method: str = "midpoint",
    w: Optional[np.ndarray] = None,
) -> tuple[Trajectory, SensitivityTrace]:
    """Trajectory plus S(t) = dx(t)/dw for a parameter-independent x0.

    The pair (x, S) advances with the chosen method; stage jacobians use the
    stage states, making S the exact derivative of the discrete flow.
    """
    if sys.rhs_partials is None:
        raise StructuralError("system provides no partials")
    if method not in _STAGE_OFFSETS:
        raise StructuralError(f"unknown method {method!r}")
    n_steps = _grid(t_end, h)
    w = sys.params.values if w is None else np.asarray(w, dtype=float)
    u_fn, state_dep = _input_fn(sys, input_signal)
    if state_dep:
        raise StructuralError(
            "sensitivity propagation requires an input independent of the state"
        )
    n, m = sys.state_dim, sys.param_dim

    counter = [0]

    def kfun(x, S, t):
        counter[0] += 1
        f, A, B = sys.rhs_partials(x, u_fn(t, None), t, w)
        return f, A @ S + B

    x = np.asarray(x0, dtype=float).copy()
    S = np.zeros((n, m))
    times = np.linspace(0.0, n_steps * h, n_steps + 1)
    states = np.empty((n_steps + 1, n))
    inputs = np.empty((n_steps + 1, sys.input_dim))
    outputs = np.empty((n_steps + 1, sys.output_dim))
    sens = np.empty((n_steps + 1, n, m))

    for i, t in enumerate(times):
        states[i] = x
        sens[i] = S
        u_now = u_fn(t, None)
        inputs[i] = u_now
        outputs[i] = sys.output(x, u_now, w)
        if i == n_steps:
            break
        if method == "midpoint":
            f1, G1 = kfun(x, S, t)
            f2, G2 = kfun(x + 0.5 * h * f1, S + 0.5 * h * G1, t + 0.5 * h)
            x = x + h * f2
            S = S + h * G2
        else:
            f1, G1 = kfun(x, S, t)
            f2, G2 = kfun(x + 0.5 * h * f1, S + 0.5 * h * G1, t + 0.5 * h)
            f3, G3 = kfun(x + 0.5 * h * f2, S + 0.5 * h * G2, t + 0.5 * h)
            f4, G4 = kfun(x + h * f3, S + h * G3, t + h)
            x = x + (h / 6.0) * (f1 + 2 * f2 + 2 * f3 + f4)
            S = S + (h / 6.0) * (G1 + 2 * G2 + 2 * G3 + G4)
        _check_finite(x, t + h)

    traj = Trajectory(times, states, inputs, outputs, rhs_evals=counter[0])
    return traj, SensitivityTrace(sens)


def order_estimate(
    method: str,
    rhs: Callable,
    exact: Callable,
    x0,
    t_end: float = 1.0,
    hs: Sequence[float] = (0.1, 0.05, 0.025, 0.0125),
) -> float:
    """Empirical convergence order from a log-log error fit.

    Integrates the scalar/vector problem `rhs(x, u, t)` against the closed
    form `exact(t)` on successively halved steps. An identically zero error
    is reported as exact (infinite order).
    """
    errs = []
    for h in hs:
        x = np.atleast_1d(np.asarray(x0, dtype=float))
        n_steps = _grid(t_end, h)
        for i in range(n_steps):
            x = step(method, rhs, x, None, i * h, h)
        errs.append(np.max(np.abs(x - np.atleast_1d(exact(t_end)))))
    errs = np.asarray(errs)
    if np.all(errs < 1e-14):
        return float("inf")
    slope, _ = np.polyfit(np.log(np.asarray(hs)), np.log(errs), 1)
    return float(slope)


# --------------------------------------------------------------------------
# csv round trip
# --------------------------------------------------------------------------

def write_trajectory_csv(path, traj: Trajectory) -> None:
    """Header `t, x_1..x_n, u_1..u_k, y_1..y_p`; 17 significant digits."""
    n = traj.states.shape[1]
    k = traj.inputs.shape[1]
    p = traj.outputs.shape[1]
    header = (["t"]
              + [f"x_{i + 1}" for i in range(n)]
              + [f"u_{i + 1}" for i in range(k)]
              + [f"y_{i + 1}" for i in range(p)])
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for i in range(traj.times.size):
            row = np.concatenate(
                ([traj.times[i]], traj.states[i], traj.inputs[i], traj.outputs[i])
            )
            wr.writerow([f"{v:.17g}" for v in row])


def read_trajectory_csv(path) -> Trajectory:
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        rows = np.array([[float(v) for v in row] for row in rd])
    n = sum(1 for h in header if h.startswith("x_"))
    k = sum(1 for h in header if h.startswith("u_"))
    p = sum(1 for h in header if h.startswith("y_"))
    if rows.size == 0:
        raise StructuralError(f"empty trajectory file {path}")
    return Trajectory(
        rows[:, 0],
        rows[:, 1:1 + n],
        rows[:, 1 + n:1 + n + k].reshape(rows.shape[0], k),
        rows[:, 1 + n + k:].reshape(rows.shape[0], p),
    )
