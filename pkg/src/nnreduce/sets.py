"""Axis-aligned boxes and finite unions of boxes."""

from __future__ import annotations

import csv
from typing import Iterable, Sequence

import numpy as np

from .errors import PreconditionError


def _vec(a) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(-1)
    arr.setflags(write=False)
    return arr


class IntervalBox:
    """Closed box ``[lower_1, upper_1] x ... x [lower_n, upper_n]``."""

    __slots__ = ("lower", "upper")

    def __init__(self, lower, upper=None):
        lo = _vec(lower)
        hi = lo if upper is None else _vec(upper)
        if lo.shape != hi.shape:
            raise PreconditionError(f"box bounds differ in length: {lo.shape[0]} vs {hi.shape[0]}")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise PreconditionError("box bounds must be finite")
        if np.any(lo > hi):
            bad = int(np.argmax(lo > hi))
            raise PreconditionError(f"box lower > upper in component {bad}: {lo[bad]} > {hi[bad]}")
        self.lower = lo
        self.upper = hi

    @classmethod
    def point(cls, x) -> "IntervalBox":
        return cls(x, x)

    @classmethod
    def from_bounds(cls, bounds: Sequence[Sequence[float]]) -> "IntervalBox":
        """Build from ``[(lo_1, hi_1), (lo_2, hi_2), ...]``."""
        b = np.asarray(bounds, dtype=float).reshape(-1, 2)
        return cls(b[:, 0], b[:, 1])

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def radius(self) -> np.ndarray:
        return 0.5 * (self.upper - self.lower)

    def bounds(self) -> list[tuple[float, float]]:
        return list(zip(self.lower.tolist(), self.upper.tolist()))

    def contains(self, x, tol: float = 0.0):
        """Point membership; a 2-d argument gives one result per row."""
        x = np.asarray(x, dtype=float)
        inside = ((x >= self.lower - tol) & (x <= self.upper + tol)).all(axis=-1)
        return bool(inside) if x.ndim == 1 else inside

    def contains_box(self, other: "IntervalBox") -> bool:
        return bool(np.all(self.lower <= other.lower) and np.all(other.upper <= self.upper))

    def intersects(self, other: "IntervalBox") -> bool:
        return bool(np.all(self.lower <= other.upper) and np.all(other.lower <= self.upper))

    def inflate(self, radius) -> "IntervalBox":
        """Minkowski sum with the infinity-norm ball of the given radius."""
        r = np.asarray(radius, dtype=float)
        if np.any(r < 0):
            raise PreconditionError("inflation radius must be nonnegative")
        return IntervalBox(self.lower - r, self.upper + r)

    def product(self, other: "IntervalBox") -> "IntervalBox":
        """Cartesian product ``self x other``."""
        return IntervalBox(
            np.concatenate([self.lower, other.lower]), np.concatenate([self.upper, other.upper])
        )

    def select(self, indices) -> "IntervalBox":
        idx = np.asarray(indices, dtype=int)
        return IntervalBox(self.lower[idx], self.upper[idx])

    def hull(self, other: "IntervalBox") -> "IntervalBox":
        return IntervalBox(np.minimum(self.lower, other.lower), np.maximum(self.upper, other.upper))

    def sample(self, n: int, rng=None) -> np.ndarray:
        """``n`` points drawn uniformly from the box, shape ``(n, dim)``."""
        rng = np.random.default_rng(rng)
        return self.lower + rng.random((n, self.dim)) * self.width

    def corners(self) -> np.ndarray:
        """All ``2**dim`` vertices (duplicates kept for degenerate sides)."""
        grid = np.array(np.meshgrid(*zip(self.lower, self.upper), indexing="ij"))
        return grid.reshape(self.dim, -1).T

    def __eq__(self, other):
        if not isinstance(other, IntervalBox):
            return NotImplemented
        return np.array_equal(self.lower, other.lower) and np.array_equal(self.upper, other.upper)

    def __repr__(self):
        parts = ", ".join(f"[{lo:g}, {hi:g}]" for lo, hi in zip(self.lower, self.upper))
        return f"IntervalBox({parts})"


class BoxUnion:
    """A non-empty finite family of same-dimension boxes, stored row-wise.

    ``lowers[i]`` and ``uppers[i]`` are the bounds of the ``i``-th box.
    """

    __slots__ = ("lowers", "uppers")

    def __init__(self, lowers, uppers):
        lo = np.array(lowers, dtype=float, ndmin=2)
        hi = np.array(uppers, dtype=float, ndmin=2)
        if lo.shape != hi.shape or lo.ndim != 2:
            raise PreconditionError(f"box union bounds have mismatched shapes {lo.shape}, {hi.shape}")
        if lo.shape[0] == 0:
            raise PreconditionError("box union must contain at least one box")
        lo.setflags(write=False)
        hi.setflags(write=False)
        self.lowers = lo
        self.uppers = hi

    @classmethod
    def of(cls, boxes: Iterable[IntervalBox]) -> "BoxUnion":
        boxes = list(boxes)
        if not boxes:
            raise PreconditionError("box union must contain at least one box")
        if len({b.dim for b in boxes}) != 1:
            raise PreconditionError("boxes in a union must share one dimension")
        return cls([b.lower for b in boxes], [b.upper for b in boxes])

    @property
    def dim(self) -> int:
        return self.lowers.shape[1]

    def __len__(self):
        return self.lowers.shape[0]

    def __getitem__(self, i) -> IntervalBox:
        return IntervalBox(self.lowers[i], self.uppers[i])

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other):
        if not isinstance(other, BoxUnion):
            return NotImplemented
        return np.array_equal(self.lowers, other.lowers) and np.array_equal(self.uppers, other.uppers)

    def __repr__(self):
        return f"BoxUnion({len(self)} boxes, dim={self.dim})"

    def hull(self) -> IntervalBox:
        return hull(self)

    def contains(self, x) -> np.ndarray:
        """For each row of ``x``, whether some box of the union contains it."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        inside = (x[:, None, :] >= self.lowers) & (x[:, None, :] <= self.uppers)
        return inside.all(axis=2).any(axis=1)

    def to_csv(self, path) -> None:
        write_boxes_csv(self, path)


def hull(u: BoxUnion) -> IntervalBox:
    """Smallest box containing every box of the union."""
    return IntervalBox(u.lowers.min(axis=0), u.uppers.max(axis=0))


def write_boxes_csv(u: BoxUnion, path) -> None:
    """One row per box: ``cell, lower_0..lower_{n-1}, upper_0..upper_{n-1}``."""
    d = u.dim
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell"] + [f"lower_{i}" for i in range(d)] + [f"upper_{i}" for i in range(d)])
        for i in range(len(u)):
            w.writerow([i] + [repr(v) for v in u.lowers[i].tolist()] + [repr(v) for v in u.uppers[i].tolist()])


def read_boxes_csv(path) -> BoxUnion:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    d = (len(rows[0]) - 1) // 2
    data = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
    return BoxUnion(data[:, :d], data[:, d:])
