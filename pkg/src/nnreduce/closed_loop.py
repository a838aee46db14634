"""Reachability and safety checking for sampled-data neural-network control loops.

At every sampling instant the controller reads ``tau = (y, r)`` built from
the plant output and a reference, and its output is held constant until the
next instant.  :func:`reach_nncs` alternates output-set evaluation,
controller reachability (optionally through a reduced network padded by its
precision) and validated integration of the plant.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import PrecisionDomainError, PreconditionError
from .network import Network
from .ode import Dynamics, ReachTube, StepConfig, reach_ode_x, reach_ode_y
from .reach import PartitionConfig, reach_nn
from .reduction import InflationMode, Precision, inflate
from .sets import IntervalBox, hull


def _parse_layout(layout, allowed):
    out = []
    for item in layout:
        src, idx = item
        if src not in allowed:
            raise PreconditionError(f"layout source {src!r} not in {allowed}")
        out.append((src, int(idx)))
    return tuple(out)


def _assemble(layout, sources: dict) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([sources[s][0][i] for s, i in layout], dtype=float)
    hi = np.array([sources[s][1][i] for s, i in layout], dtype=float)
    return lo, hi


@dataclass
class SampledNNCS:
    """Plant, controller and sampling data of a closed loop.

    ``controller_input_layout`` lists where each controller input comes from,
    as ``("y", i)`` for plant output ``i`` or ``("r", j)`` for reference ``j``.
    ``plant_input_layout`` does the same for plant inputs, with ``("u", i)``
    for controller output ``i`` and ``("w", j)`` for component ``j`` of the
    fixed exogenous input box.  By default the plant input is the controller
    output.
    """

    plant: Dynamics
    controller: Network
    sampling_period: float
    reference_box: IntervalBox
    controller_input_layout: Sequence[tuple[str, int]]
    plant_input_layout: Optional[Sequence[tuple[str, int]]] = None
    exogenous_input: Optional[IntervalBox] = None
    reduced_controller: Optional[Network] = None
    precision: Optional[Precision] = None
    state_names: Optional[Sequence[str]] = None

    def __post_init__(self):
        self.controller.check()
        if not self.sampling_period > 0:
            raise PreconditionError("sampling_period must be positive")
        self.controller_input_layout = _parse_layout(self.controller_input_layout, ("y", "r"))
        if len(self.controller_input_layout) != self.controller.input_dim:
            raise PreconditionError(
                f"controller takes {self.controller.input_dim} inputs, layout names "
                f"{len(self.controller_input_layout)}"
            )
        for src, i in self.controller_input_layout:
            limit = self.plant.output_dim if src == "y" else self.reference_box.dim
            if not 0 <= i < limit:
                raise PreconditionError(f"controller input ({src!r}, {i}) out of range")
        if self.plant_input_layout is None:
            self.plant_input_layout = [("u", i) for i in range(self.controller.output_dim)]
        self.plant_input_layout = _parse_layout(self.plant_input_layout, ("u", "w"))
        if len(self.plant_input_layout) != self.plant.input_dim:
            raise PreconditionError(
                f"plant takes {self.plant.input_dim} inputs, layout names {len(self.plant_input_layout)}"
            )
        for src, i in self.plant_input_layout:
            if src == "w" and (self.exogenous_input is None or not 0 <= i < self.exogenous_input.dim):
                raise PreconditionError(f"plant input ('w', {i}) has no exogenous component")
            if src == "u" and not 0 <= i < self.controller.output_dim:
                raise PreconditionError(f"plant input ('u', {i}) out of range")
        if self.reduced_controller is not None:
            self.reduced_controller.check()
            if self.precision is None:
                raise PreconditionError("a reduced controller needs a precision")
            if (self.reduced_controller.input_dim != self.controller.input_dim
                    or self.reduced_controller.output_dim != self.controller.output_dim):
                raise PreconditionError("reduced controller must match the controller's input/output sizes")

    def controller_input_box(self, y: IntervalBox) -> IntervalBox:
        r = self.reference_box
        lo, hi = _assemble(self.controller_input_layout, {"y": (y.lower, y.upper), "r": (r.lower, r.upper)})
        return IntervalBox(lo, hi)

    def controller_input(self, y, r) -> np.ndarray:
        """Point version; ``y`` and ``r`` may be row-stacked batches (broadcast against each other)."""
        y, r = np.asarray(y, dtype=float), np.asarray(r, dtype=float)
        lead = np.broadcast_shapes(y.shape[:-1], r.shape[:-1])
        y = np.broadcast_to(y, lead + y.shape[-1:])
        r = np.broadcast_to(r, lead + r.shape[-1:])
        cols = [y[..., i] if s == "y" else r[..., i] for s, i in self.controller_input_layout]
        return np.stack(cols, axis=-1)

    def plant_input_box(self, u: IntervalBox) -> IntervalBox:
        w = self.exogenous_input
        sources = {"u": (u.lower, u.upper)}
        if w is not None:
            sources["w"] = (w.lower, w.upper)
        lo, hi = _assemble(self.plant_input_layout, sources)
        return IntervalBox(lo, hi)

    def plant_input(self, u, w=None) -> np.ndarray:
        """Point version; ``w`` defaults to the centre of the exogenous box."""
        u = np.asarray(u, dtype=float)
        if w is None:
            w = self.exogenous_input.center if self.exogenous_input is not None else np.zeros(0)
        w = np.broadcast_to(np.asarray(w, dtype=float), u.shape[:-1] + np.shape(w)[-1:])
        cols = [u[..., i] if s == "u" else w[..., i] for s, i in self.plant_input_layout]
        return np.stack(cols, axis=-1)

    def with_reduced(self, reduced: Optional[Network], precision: Optional[Precision]) -> "SampledNNCS":
        return SampledNNCS(self.plant, self.controller, self.sampling_period, self.reference_box,
                           self.controller_input_layout, self.plant_input_layout, self.exogenous_input,
                           reduced, precision, self.state_names)


@dataclass(frozen=True)
class ReachConfig:
    """Knobs of a closed-loop reachability run."""

    partition: PartitionConfig = field(default_factory=PartitionConfig)
    step: StepConfig = field(default_factory=StepConfig)
    inflation: InflationMode = InflationMode.SOUND_FULL_RHO
    use_reduced: bool = False


def reach_nncs(sys: SampledNNCS, x0: IntervalBox, horizon: float,
               cfg: ReachConfig | None = None) -> ReachTube:
    """Closed-loop reach tube over ``[0, horizon]``.

    Per sampling interval: output box of the current state box, controller
    input box, controller output boxes (reduced network padded by the
    inflation radius when ``cfg.use_reduced``), then plant integration under
    the hull of those boxes.  The tube's ``stats`` separate controller and
    integration wall time; ``stats["control_lowers"/"control_uppers"]`` hold
    the control box of every interval.
    """
    cfg = cfg or ReachConfig()
    period = sys.sampling_period
    steps = int(round(horizon / period))
    if steps < 1 or abs(steps * period - horizon) > 1e-9 * max(horizon, 1.0):
        raise PreconditionError(f"horizon {horizon} is not a whole number of sampling periods {period}")
    if cfg.use_reduced:
        if sys.reduced_controller is None:
            raise PreconditionError("use_reduced requested but the system has no reduced controller")
        net, prec = sys.reduced_controller, sys.precision
        radius = cfg.inflation.radius(prec.rho)
    else:
        net, prec, radius = sys.controller, None, 0.0

    start = time.perf_counter()
    nn_time = ode_time = 0.0
    cells = 0
    state = x0
    pieces, slices = [], [(0.0, x0)]
    u_lo = np.empty((steps, net.output_dim))
    u_hi = np.empty_like(u_lo)
    for k in range(steps):
        t_k, t_next = k * period, (k + 1) * period
        y_box = reach_ode_y(sys.plant, state)
        tau = sys.controller_input_box(y_box)
        tick = time.perf_counter()
        if prec is not None and not prec.covers(tau):
            raise PrecisionDomainError(
                f"controller inputs at t={t_k:g} reach {tau}, outside the precision domain "
                f"{prec.input_set}; recompute the precision over a larger box"
            )
        out = reach_nn(net, tau, cfg.partition)
        if prec is not None:
            out = inflate(out, prec, cfg.inflation)
        u_box = hull(out)
        nn_time += time.perf_counter() - tick
        cells += len(out)
        u_lo[k], u_hi[k] = u_box.lower, u_box.upper
        tick = time.perf_counter()
        piece = reach_ode_x(sys.plant, sys.plant_input_box(u_box), state, period, cfg.step,
                            t0=t_k, t1=t_next)
        ode_time += time.perf_counter() - tick
        pieces.append(piece)
        state = piece.final
        slices.append((t_next, state))
    stats = {
        "controller": "reduced" if cfg.use_reduced else "original",
        "inflation": cfg.inflation.value if cfg.use_reduced else None,
        "inflation_radius": radius,
        "intervals": steps,
        "cells": cells,
        "controller_reach_time": nn_time,
        "ode_reach_time": ode_time,
        "total_time": time.perf_counter() - start,
        "control_lowers": u_lo,
        "control_uppers": u_hi,
    }
    return ReachTube.concatenate(pieces, slices=slices, stats=stats)


# -- safety -------------------------------------------------------------------


@dataclass(frozen=True)
class Halfspace:
    """``coeffs . x <= bound`` over the plant state."""

    coeffs: tuple
    bound: float
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))
        object.__setattr__(self, "bound", float(self.bound))


@dataclass
class SafetySpec:
    """Unsafe region as a union of conjunctions of half-spaces."""

    unsafe: list[list[Halfspace]]
    descriptions: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.unsafe or any(len(c) == 0 for c in self.unsafe):
            raise PreconditionError("every unsafe conjunction needs at least one inequality")
        dims = {len(h.coeffs) for conj in self.unsafe for h in conj}
        if len(dims) != 1:
            raise PreconditionError("all inequalities must have the same number of coefficients")

    @property
    def dim(self) -> int:
        return len(self.unsafe[0][0].coeffs)

    def holds_at(self, x) -> np.ndarray:
        """True where a point (or row of a batch) is outside every unsafe region."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        bad = np.zeros(len(x), dtype=bool)
        for conj in self.unsafe:
            inside = np.ones(len(x), dtype=bool)
            for h in conj:
                inside &= x @ np.asarray(h.coeffs) <= h.bound
            bad |= inside
        return ~bad


@dataclass
class VerificationResult:
    verdict: str
    tube: ReachTube
    first_violation: Optional[dict]
    stats: dict

    @property
    def safe(self) -> bool:
        return self.verdict == "safe"

    def summary(self) -> dict:
        scalars = {k: v for k, v in self.stats.items() if isinstance(v, (int, float, str, type(None)))}
        return {"verdict": self.verdict, "first_violation": self.first_violation, "stats": scalars}


def verify(tube: ReachTube, spec: SafetySpec) -> VerificationResult:
    """``safe`` when no tube segment can meet any unsafe conjunction, else ``unknown``.

    A conjunction is taken to meet a box when each of its inequalities holds
    at that inequality's most favourable corner of the box.
    """
    if spec.dim != tube.dim:
        raise PreconditionError(f"spec has {spec.dim} coefficients, tube has {tube.dim} states")
    hit = np.zeros(len(tube), dtype=bool)
    which = np.full(len(tube), -1)
    margin = np.inf
    for j, conj in enumerate(spec.unsafe):
        meets = np.ones(len(tube), dtype=bool)
        for h in conj:
            a = np.asarray(h.coeffs)
            best = tube.lowers @ np.maximum(a, 0.0) + tube.uppers @ np.minimum(a, 0.0)
            meets &= best <= h.bound
            margin = min(margin, float(np.min(best - h.bound)))
        which = np.where(meets & ~hit, j, which)
        hit |= meets
    first = None
    if hit.any():
        i = int(np.argmax(hit))
        j = int(which[i])
        first = {
            "segment": i,
            "time_interval": [float(tube.times[i, 0]), float(tube.times[i, 1])],
            "constraint": j,
            "description": spec.descriptions[j] if j < len(spec.descriptions) else "",
        }
    stats = dict(tube.stats)
    stats["min_margin"] = margin
    return VerificationResult("unknown" if hit.any() else "safe", tube, first, stats)
