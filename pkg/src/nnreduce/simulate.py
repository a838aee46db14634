"""Sampled-data simulation with a tight-tolerance Runge-Kutta integrator.

This is an oracle for refuting enclosures, not a certificate: the integrator
runs in plain floating point with adaptive error control (DOP853), so a
trajectory outside a tube proves the tube wrong, but trajectories inside it
prove nothing.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .closed_loop import SampledNNCS
from .errors import PreconditionError, SimulationError
from .network import evaluate
from .ode import Dynamics, ReachTube
from .sets import IntervalBox

RTOL = 1e-10
ATOL = 1e-10

ORACLE_NOTE = ("non-validated floating-point simulation (DOP853, rtol/atol 1e-10): "
               "can refute an enclosure, never certify one")


@dataclass
class Trajectory:
    """One sampled-data run.

    ``states[i]`` is the state at ``times[i]``; ``controls[k]`` is the
    controller output held on sampling interval ``k``.
    """

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float).reshape(len(self.times), -1)
        self.controls = np.asarray(self.controls, dtype=float)
        if self.controls.ndim == 1:
            self.controls = self.controls[:, None]
        if np.any(np.diff(self.times) <= 0):
            raise PreconditionError("trajectory times must be strictly increasing")

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def control_at(self, i: int) -> np.ndarray:
        """Control active at sample ``i`` (the last interval's for the final time)."""
        k = min(int(np.searchsorted(self._interval_starts, self.times[i], side="right")) - 1,
                len(self.controls) - 1)
        return self.controls[max(k, 0)]

    @property
    def _interval_starts(self) -> np.ndarray:
        n = len(self.controls)
        return self.times[0] + (self.times[-1] - self.times[0]) * np.arange(n) / n

    def to_csv(self, path, state_names: Optional[Sequence[str]] = None,
               control_names: Optional[Sequence[str]] = None) -> None:
        n, m = self.states.shape[1], self.controls.shape[1]
        xs = list(state_names) if state_names is not None else [f"x{i}" for i in range(n)]
        us = list(control_names) if control_names is not None else [f"u{i}" for i in range(m)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + xs + us)
            for i, t in enumerate(self.times):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in self.states[i]]
                           + [repr(float(v)) for v in self.control_at(i)])


def _steps(horizon: float, period: float) -> int:
    steps = int(round(horizon / period))
    if steps < 1 or abs(steps * period - horizon) > 1e-9 * max(horizon, 1.0):
        raise PreconditionError(f"horizon {horizon} is not a whole number of sampling periods {period}")
    return steps


def _integrate(dyn: Dynamics, x: np.ndarray, u: np.ndarray, t0: float, t1: float,
               t_eval: np.ndarray, rtol: float, atol: float) -> np.ndarray:
    """States of the batch ``x`` (``(N, n)``) under constant inputs ``u`` at ``t_eval``.

    Returns shape ``(len(t_eval), N, n)``; ``t_eval`` must end at ``t1``.
    """
    shape = x.shape

    def rhs(_t, flat):
        return np.asarray(dyn.f(flat.reshape(shape), u), dtype=float).ravel()

    sol = solve_ivp(rhs, (t0, t1), x.ravel(), method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol)
    if sol.status != 0 or not np.all(np.isfinite(sol.y)):
        raise SimulationError(f"integration failed on [{t0:g}, {t1:g}]: {sol.message}")
    return sol.y.T.reshape(len(t_eval), *shape)


def simulate_batch(sys: SampledNNCS, x0s, rs, horizon: float, use_reduced: bool = False, *,
                   w=None, samples_per_interval: int = 4, rtol: float = RTOL,
                   atol: float = ATOL) -> list[Trajectory]:
    """Closed-loop runs from every row of ``x0s`` with the matching reference row of ``rs``.

    At each sampling instant the controller (or the reduced one) is evaluated
    on ``(y(t_k), r)`` and its output held until the next instant.  The batch
    is integrated as one stacked system, so every trajectory is sampled at
    the same ``samples_per_interval`` points per interval plus the final time.
    """
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    n_traj = len(x0s)
    if n_traj < 1:
        raise PreconditionError("need at least one initial state")
    if x0s.shape[1] != sys.plant.state_dim:
        raise PreconditionError(f"initial states have {x0s.shape[1]} components, plant has {sys.plant.state_dim}")
    rs = np.broadcast_to(np.atleast_2d(np.asarray(rs, dtype=float)), (n_traj, sys.reference_box.dim))
    if samples_per_interval < 1:
        raise PreconditionError("samples_per_interval must be at least 1")
    if use_reduced and sys.reduced_controller is None:
        raise PreconditionError("use_reduced requested but the system has no reduced controller")
    net = sys.reduced_controller if use_reduced else sys.controller
    period = sys.sampling_period
    steps = _steps(horizon, period)
    m = samples_per_interval

    times = np.empty(steps * m + 1)
    states = np.empty((steps * m + 1, n_traj, sys.plant.state_dim))
    controls = np.empty((steps, n_traj, net.output_dim))
    x = x0s.copy()
    for k in range(steps):
        t_k, t_next = k * period, (k + 1) * period
        tau = sys.controller_input(sys.plant.h(x), rs)
        u = evaluate(net, tau).reshape(n_traj, -1)
        controls[k] = u
        t_eval = t_k + (period / m) * np.arange(1, m + 1)
        t_eval[-1] = t_next
        path = _integrate(sys.plant, x, sys.plant_input(u, w), t_k, t_next, t_eval, rtol, atol)
        times[k * m] = t_k
        states[k * m] = x
        times[k * m + 1 : (k + 1) * m + 1] = t_eval
        states[k * m + 1 : (k + 1) * m + 1] = path
        x = path[-1]
    return [Trajectory(times.copy(), states[:, i, :], controls[:, i, :]) for i in range(n_traj)]


def simulate(sys: SampledNNCS, x0, r, horizon: float, use_reduced: bool = False, **kwargs) -> Trajectory:
    """Single closed-loop run; see :func:`simulate_batch` for the keywords."""
    return simulate_batch(sys, np.atleast_2d(x0), np.atleast_2d(r), horizon, use_reduced, **kwargs)[0]


def sample_inputs(sys: SampledNNCS, x0_box: IntervalBox, n: int, seed: int = 0):
    """``n`` uniform initial states in ``x0_box`` and constant references in the reference box."""
    if n < 1:
        raise PreconditionError("n must be at least 1")
    rng = np.random.default_rng(seed)
    return x0_box.sample(n, rng), sys.reference_box.sample(n, rng)


def simulate_open_loop(dyn: Dynamics, x0s, us, horizon: float, samples: int = 20, *,
                       rtol: float = RTOL, atol: float = ATOL) -> tuple[np.ndarray, np.ndarray]:
    """Plant runs under constant inputs; returns ``times`` (``samples + 1``) and
    states of shape ``(N, samples + 1, n)``."""
    x0s = np.atleast_2d(np.asarray(x0s, dtype=float))
    us = np.broadcast_to(np.atleast_2d(np.asarray(us, dtype=float)), (len(x0s), dyn.input_dim))
    times = horizon * np.arange(samples + 1) / samples
    path = _integrate(dyn, x0s, us, 0.0, horizon, times[1:], rtol, atol)
    states = np.concatenate([x0s[None], path], axis=0)
    return times, np.transpose(states, (1, 0, 2))


# -- containment ---------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    trajectory: int
    time: float
    component: int
    margin: float


@dataclass
class AuditReport:
    """Outcome of checking sampled states against a tube.

    ``margin`` of a violation is how far the component lies outside the box
    of the best covering segment.
    """

    violations: list[Violation] = field(default_factory=list)
    checked_points: int = 0
    trajectories: int = 0
    note: str = ORACLE_NOTE

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_dict(self) -> dict:
        return {
            "note": self.note,
            "trajectories": self.trajectories,
            "checked_points": self.checked_points,
            "violation_count": len(self.violations),
            "violations": [vars(v) for v in self.violations],
        }


def containment_audit(trajs: Sequence[Trajectory], tube: ReachTube, tol: float = 0.0) -> AuditReport:
    """Check every sampled state against the tube segments covering its time.

    A state passes when it lies (up to ``tol``) in at least one covering
    segment.  A sample time outside the tube's time span counts as a
    violation of every component with infinite margin.
    """
    report = AuditReport(trajectories=len(trajs))
    for tid, tr in enumerate(trajs):
        if tr.states.shape[1] != tube.dim:
            raise PreconditionError(f"trajectory {tid} has dimension {tr.states.shape[1]}, tube has {tube.dim}")
        # first and last segment whose closed time span holds each sample
        first = np.searchsorted(tube.times[:, 1], tr.times, side="left")
        last = np.searchsorted(tube.times[:, 0], tr.times, side="right") - 1
        for i, t in enumerate(tr.times):
            report.checked_points += 1
            a, b = first[i], last[i]
            if a >= len(tube) or b < a:
                for c in range(tube.dim):
                    report.violations.append(Violation(tid, float(t), c, float("inf")))
                continue
            x = tr.states[i]
            excess = np.maximum(tube.lowers[a : b + 1] - x, x - tube.uppers[a : b + 1])
            worst = excess.max(axis=1)
            j = int(np.argmin(worst))
            if worst[j] <= tol:
                continue
            for c in np.flatnonzero(excess[j] > tol):
                report.violations.append(Violation(tid, float(t), int(c), float(excess[j, c])))
    return report
