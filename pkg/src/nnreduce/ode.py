"""Validated first-order enclosures for ``x' = f(x, u)`` with a constant box input.

Each substep of length ``dt`` does two things:

1. Finds an a-priori enclosure ``B`` of every solution over ``[0, dt]``: a box
   with ``X + [0, dt] * f(B, U)`` inside ``B`` (Picard containment), grown
   geometrically from a first guess until the check passes.
2. Bounds the state at ``dt``.  The naive image ``X + dt * f(B, U)`` is always
   valid.  When the dynamics supply interval Jacobians, the mean-value form of
   the Euler map plus the Lagrange remainder ``dt**2 / 2 * J(B) f(B)`` is also
   valid and does not lose the contraction of stable modes; the two are
   intersected.

Arithmetic is ordinary floating point without directed rounding.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import EnclosureError, InputShapeError, PreconditionError
from .sets import IntervalBox

BoxFn = Callable[..., tuple]


# -- interval helpers ---------------------------------------------------------


def isquare(lo, hi):
    """Exact interval square (not ``x * x``, which loses the sign correlation)."""
    lo2, hi2 = lo * lo, hi * hi
    upper = np.maximum(lo2, hi2)
    lower = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(lo2, hi2))
    return lower, upper


def imatvec(m_lo, m_hi, v_lo, v_hi):
    """Interval matrix times interval vector."""
    p = np.stack([m_lo * v_lo, m_lo * v_hi, m_hi * v_lo, m_hi * v_hi])
    return p.min(axis=0).sum(axis=-1), p.max(axis=0).sum(axis=-1)


def affine_box(a, lo, hi, offset=0.0):
    """Exact box image of ``a @ x + offset`` for ``x`` in ``[lo, hi]``."""
    a = np.asarray(a, dtype=float)
    a_pos, a_neg = np.maximum(a, 0.0), np.minimum(a, 0.0)
    return a_pos @ lo + a_neg @ hi + offset, a_pos @ hi + a_neg @ lo + offset


# -- dynamics -----------------------------------------------------------------


class Dynamics:
    """Plant ``x' = f(x, u)``, ``y = h(x)`` with point and interval evaluations.

    ``f(x, u)`` and ``h(x)`` act on the last axis, so batches of row vectors
    work.  ``f_box(xlo, xhi, ulo, uhi)`` and ``h_box(xlo, xhi)`` return
    ``(lower, upper)`` enclosures and must be inclusion isotone.  The optional
    ``jac_box`` returns ``(jx_lo, jx_hi, ju_lo, ju_hi)`` enclosing the
    Jacobians of ``f`` over the given boxes.
    """

    def __init__(self, state_dim: int, input_dim: int, f: Callable, f_box: BoxFn,
                 h: Optional[Callable] = None, h_box: Optional[BoxFn] = None,
                 jac_box: Optional[BoxFn] = None, output_dim: Optional[int] = None,
                 lipschitz_hint: Optional[float] = None, name: str = "plant"):
        self.state_dim = state_dim
        self.input_dim = input_dim
        self.f = f
        self._f_box = f_box
        self.h = h if h is not None else (lambda x: np.asarray(x, dtype=float))
        self._h_box = h_box if h_box is not None else (lambda lo, hi: (lo, hi))
        self.jac_box = jac_box
        self.output_dim = state_dim if output_dim is None else output_dim
        self.lipschitz_hint = lipschitz_hint
        self.name = name

    def f_box(self, xlo, xhi, ulo, uhi):
        return self._f_box(xlo, xhi, ulo, uhi)

    def h_box(self, xlo, xhi):
        return self._h_box(xlo, xhi)

    def field_box(self, x: IntervalBox, u: IntervalBox) -> IntervalBox:
        lo, hi = self.f_box(x.lower, x.upper, u.lower, u.upper)
        return IntervalBox(lo, hi)

    def output_box(self, x: IntervalBox) -> IntervalBox:
        lo, hi = self.h_box(x.lower, x.upper)
        return IntervalBox(lo, hi)

    def __repr__(self):
        return f"Dynamics({self.name!r}, n_x={self.state_dim}, n_u={self.input_dim}, n_y={self.output_dim})"


def linear_dynamics(a, b, c=None, name: str = "linear") -> Dynamics:
    """``x' = A x + B u`` with output ``y = C x`` (identity when ``c`` is None)."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n, m = a.shape[0], b.shape[1]

    def f(x, u):
        return np.asarray(x) @ a.T + np.asarray(u) @ b.T

    def f_box(xlo, xhi, ulo, uhi):
        lo1, hi1 = affine_box(a, xlo, xhi)
        lo2, hi2 = affine_box(b, ulo, uhi)
        return lo1 + lo2, hi1 + hi2

    def jac_box(xlo, xhi, ulo, uhi):
        return a, a, b, b

    h = h_box = None
    p = n
    if c is not None:
        c = np.atleast_2d(np.asarray(c, dtype=float))
        p = c.shape[0]

        def h(x):
            return np.asarray(x) @ c.T

        def h_box(lo, hi):
            return affine_box(c, lo, hi)

    return Dynamics(n, m, f, f_box, h, h_box, jac_box, output_dim=p,
                    lipschitz_hint=float(np.linalg.norm(a, np.inf)), name=name)


# -- reach tubes --------------------------------------------------------------


class ReachTube:
    """Time-contiguous segments ``[t_a, t_b] -> box`` plus the box at the end time.

    ``slices`` holds ``(t, box)`` pairs at the instants where the tube was
    handed over (sampling instants in closed loop).  ``stats`` is free-form
    bookkeeping filled in by callers.
    """

    def __init__(self, times, lowers, uppers, final: IntervalBox, slices=None, stats=None):
        self.times = np.asarray(times, dtype=float).reshape(-1, 2)
        self.lowers = np.asarray(lowers, dtype=float).reshape(len(self.times), -1)
        self.uppers = np.asarray(uppers, dtype=float).reshape(len(self.times), -1)
        self.final = final
        self.slices = list(slices or [])
        self.stats = dict(stats or {})
        if len(self.times) and np.any(self.times[1:, 0] != self.times[:-1, 1]):
            raise PreconditionError("tube segments must be time-contiguous")

    @property
    def dim(self) -> int:
        return self.lowers.shape[1]

    @property
    def segments(self) -> list[tuple[tuple[float, float], IntervalBox]]:
        return [((float(t[0]), float(t[1])), IntervalBox(lo, hi))
                for t, lo, hi in zip(self.times, self.lowers, self.uppers)]

    def __len__(self):
        return len(self.times)

    def segment(self, i: int) -> IntervalBox:
        return IntervalBox(self.lowers[i], self.uppers[i])

    def covering(self, t: float) -> np.ndarray:
        """Indices of the closed segments containing time ``t``."""
        return np.flatnonzero((self.times[:, 0] <= t) & (t <= self.times[:, 1]))

    def hull(self) -> IntervalBox:
        return IntervalBox(self.lowers.min(axis=0), self.uppers.max(axis=0))

    def same_boxes(self, other: "ReachTube") -> bool:
        return (np.array_equal(self.times, other.times)
                and np.array_equal(self.lowers, other.lowers)
                and np.array_equal(self.uppers, other.uppers)
                and self.final == other.final)

    def to_csv(self, path, names=None) -> None:
        d = self.dim
        names = list(names) if names is not None else [f"x{i}" for i in range(d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_a", "t_b"] + [f"lower_{n}" for n in names] + [f"upper_{n}" for n in names])
            for t, lo, hi in zip(self.times.tolist(), self.lowers.tolist(), self.uppers.tolist()):
                w.writerow([repr(v) for v in t + lo + hi])

    @classmethod
    def read_csv(cls, path) -> "ReachTube":
        """Inverse of :meth:`to_csv`; the final box is the last segment's box."""
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if len(rows) < 2 or len(rows[0]) < 4 or len(rows[0]) % 2:
            raise PreconditionError(f"{path}: not a tube CSV")
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        d = (data.shape[1] - 2) // 2
        lo, hi = data[:, 2 : 2 + d], data[:, 2 + d :]
        return cls(data[:, :2], lo, hi, IntervalBox(lo[-1], hi[-1]))

    @classmethod
    def concatenate(cls, tubes, slices=None, stats=None) -> "ReachTube":
        tubes = list(tubes)
        return cls(np.vstack([t.times for t in tubes]),
                   np.vstack([t.lowers for t in tubes]),
                   np.vstack([t.uppers for t in tubes]),
                   tubes[-1].final, slices, stats)


@dataclass(frozen=True)
class StepConfig:
    """Integrator settings.  ``dt=None`` means a quarter of the horizon."""

    dt: Optional[float] = None
    enclosure_inflation: float = 1.1
    max_picard_iters: int = 50
    taylor_order: str = "order1"

    def __post_init__(self):
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.enclosure_inflation > 1:
            raise ValueError("enclosure_inflation must exceed 1")
        if self.max_picard_iters < 1:
            raise ValueError("max_picard_iters must be positive")
        if self.taylor_order != "order1":
            raise ValueError(f"unsupported taylor_order {self.taylor_order!r}")

    def substeps(self, horizon: float) -> tuple[int, float]:
        if self.dt is None:
            return 4, horizon / 4
        n = int(round(horizon / self.dt))
        if n < 1 or abs(n * self.dt - horizon) > 1e-9 * max(horizon, 1.0):
            raise PreconditionError(f"dt={self.dt} does not divide the horizon {horizon} into whole steps")
        return n, horizon / n


def _widen(lo, hi, factor):
    c = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo) * factor + 1e-12 * (1.0 + np.abs(c))
    return c - r, c + r


def enclosure(dyn: Dynamics, xlo, xhi, ulo, uhi, dt: float, cfg: StepConfig):
    """A-priori enclosure ``B`` and its field enclosure ``f(B, U)``."""
    flo, fhi = dyn.f_box(xlo, xhi, ulo, uhi)
    blo, bhi = _widen(xlo + dt * np.minimum(flo, 0.0), xhi + dt * np.maximum(fhi, 0.0),
                      cfg.enclosure_inflation)
    # a diverging candidate overflows to inf/nan, which simply fails the check
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(cfg.max_picard_iters):
            flo, fhi = dyn.f_box(blo, bhi, ulo, uhi)
            clo = xlo + dt * np.minimum(flo, 0.0)
            chi = xhi + dt * np.maximum(fhi, 0.0)
            if np.all(clo >= blo) and np.all(chi <= bhi) and np.all(np.isfinite(bhi - blo)):
                return blo, bhi, flo, fhi
            blo, bhi = _widen(np.minimum(blo, clo), np.maximum(bhi, chi), cfg.enclosure_inflation)
    raise EnclosureError(
        f"no a-priori enclosure after {cfg.max_picard_iters} Picard checks with dt={dt}; "
        "use a smaller dt"
    )


def euler_step(dyn: Dynamics, xlo, xhi, ulo, uhi, dt: float, cfg: StepConfig):
    """Returns ``(segment_lo, segment_hi, next_lo, next_hi)`` for one substep."""
    blo, bhi, flo, fhi = enclosure(dyn, xlo, xhi, ulo, uhi, dt, cfg)
    seg_lo = xlo + dt * np.minimum(flo, 0.0)
    seg_hi = xhi + dt * np.maximum(fhi, 0.0)
    nlo = xlo + dt * flo
    nhi = xhi + dt * fhi
    if dyn.jac_box is not None:
        xc, uc = 0.5 * (xlo + xhi), 0.5 * (ulo + uhi)
        xr, ur = 0.5 * (xhi - xlo), 0.5 * (uhi - ulo)
        phi_c = xc + dt * np.asarray(dyn.f(xc, uc), dtype=float)
        jx_lo, jx_hi, ju_lo, ju_hi = dyn.jac_box(xlo, xhi, ulo, uhi)
        eye = np.eye(len(xc))
        a_mag = np.maximum(np.abs(eye + dt * np.asarray(jx_lo)), np.abs(eye + dt * np.asarray(jx_hi)))
        u_mag = np.maximum(np.abs(np.asarray(ju_lo)), np.abs(np.asarray(ju_hi)))
        spread = a_mag @ xr + dt * (u_mag @ ur)
        jb_lo, jb_hi, _, _ = dyn.jac_box(blo, bhi, ulo, uhi)
        rem_lo, rem_hi = imatvec(np.asarray(jb_lo, dtype=float), np.asarray(jb_hi, dtype=float), flo, fhi)
        half = 0.5 * dt * dt
        mlo = np.maximum(nlo, phi_c - spread + half * rem_lo)
        mhi = np.minimum(nhi, phi_c + spread + half * rem_hi)
        # both enclosures are valid; rounding could in principle make them miss
        if np.all(mlo <= mhi):
            nlo, nhi = mlo, mhi
    return seg_lo, seg_hi, nlo, nhi


def reach_ode_x(dyn: Dynamics, u: IntervalBox, x0: IntervalBox, horizon: float,
                cfg: StepConfig | None = None, t0: float = 0.0,
                t1: float | None = None) -> ReachTube:
    """Tube of ``x' = f(x, u)`` over ``[t0, t0 + horizon]`` for all ``x(t0)`` in ``x0``
    and every constant input in ``u``.

    ``t1`` overrides the end time stamp (to keep consecutive tubes exactly
    contiguous when the caller keeps its own clock).
    """
    cfg = cfg or StepConfig()
    if x0.dim != dyn.state_dim:
        raise InputShapeError(f"state box has dimension {x0.dim}, plant has {dyn.state_dim} states")
    if u.dim != dyn.input_dim:
        raise InputShapeError(f"input box has dimension {u.dim}, plant has {dyn.input_dim} inputs")
    n, dt = cfg.substeps(horizon)
    xlo, xhi = x0.lower, x0.upper
    times = np.empty((n, 2))
    seg_lo = np.empty((n, dyn.state_dim))
    seg_hi = np.empty_like(seg_lo)
    for k in range(n):
        seg_lo[k], seg_hi[k], xlo, xhi = euler_step(dyn, xlo, xhi, u.lower, u.upper, dt, cfg)
        times[k] = (t0 + k * dt, t0 + (k + 1) * dt)
    t_end = t0 + horizon if t1 is None else t1
    times[-1, 1] = t_end
    final = IntervalBox(xlo, xhi)
    return ReachTube(times, seg_lo, seg_hi, final, slices=[(t0, x0), (t_end, final)])


def reach_ode_y(dyn: Dynamics, x: IntervalBox) -> IntervalBox:
    if x.dim != dyn.state_dim:
        raise InputShapeError(f"state box has dimension {x.dim}, plant has {dyn.state_dim} states")
    return dyn.output_box(x)
