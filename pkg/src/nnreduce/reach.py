"""Interval reachability of networks over boxes, refined by input partitioning.

Every cell of the partition is pushed through the layers with interval
arithmetic.  All cells are processed together as ``(cells, width)`` arrays,
which keeps the per-layer cost proportional to the layer size.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import BudgetError, InputShapeError
from .network import Layer, Network
from .sets import BoxUnion, IntervalBox

DEFAULT_MAX_CELLS = 1_000_000


@dataclass(frozen=True)
class PartitionConfig:
    """How an input box is cut into cells before propagation.

    ``splits`` gives the number of equal pieces per dimension (an int applies
    to every dimension); ``max_cell_width`` instead picks the smallest count
    whose pieces are no wider than that.  Zero-width dimensions are never
    split.  ``bisection_depth`` then halves every cell along its widest side
    that many times.
    """

    splits: int | Sequence[int] | None = None
    max_cell_width: float | None = None
    bisection_depth: int = 0
    max_cells: int = DEFAULT_MAX_CELLS

    def __post_init__(self):
        if self.splits is not None and self.max_cell_width is not None:
            raise ValueError("give either splits or max_cell_width, not both")
        if self.splits is not None:
            s = np.atleast_1d(np.asarray(self.splits))
            if np.any(s < 1) or not np.all(s == np.round(s)):
                raise ValueError(f"splits must be positive integers, got {self.splits!r}")
            if s.size > 1:
                object.__setattr__(self, "splits", tuple(int(v) for v in s))
            else:
                object.__setattr__(self, "splits", int(s[0]))
        if self.max_cell_width is not None and not self.max_cell_width > 0:
            raise ValueError("max_cell_width must be positive")
        if self.bisection_depth < 0:
            raise ValueError("bisection_depth must be nonnegative")

    def grid_shape(self, box: IntervalBox) -> tuple[int, ...]:
        width = box.width
        if self.max_cell_width is not None:
            counts = np.ceil(width / self.max_cell_width).astype(int)
        elif self.splits is None:
            counts = np.ones(box.dim, dtype=int)
        else:
            counts = np.broadcast_to(np.asarray(self.splits), (box.dim,)).astype(int)
        counts = np.where(width > 0, np.maximum(counts, 1), 1)
        return tuple(int(c) for c in counts)

    def cell_count(self, box: IntervalBox) -> int:
        """Upper bound on the number of cells produced for ``box``."""
        return int(np.prod(self.grid_shape(box), dtype=object)) * 2**self.bisection_depth

    def refined(self, extra_depth: int = 1) -> "PartitionConfig":
        return replace(self, bisection_depth=self.bisection_depth + extra_depth)

    def to_dict(self) -> dict:
        return {
            "splits": list(self.splits) if isinstance(self.splits, tuple) else self.splits,
            "max_cell_width": self.max_cell_width,
            "bisection_depth": self.bisection_depth,
            "max_cells": self.max_cells,
        }


def partition(box: IntervalBox, cfg: PartitionConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Cell bounds ``(lowers, uppers)``, each of shape ``(cells, dim)``.

    Grid cells come in lexicographic (C) order of their grid index; bisection
    replaces each cell by its two halves in place, lower half first.
    """
    cfg = cfg or PartitionConfig()
    count = cfg.cell_count(box)
    if count > cfg.max_cells:
        raise BudgetError(f"partition needs {count} cells, cap is {cfg.max_cells}")
    shape = cfg.grid_shape(box)
    lo_axes, hi_axes = [], []
    for i, n in enumerate(shape):
        edges = box.lower[i] + box.width[i] * (np.arange(n + 1) / n)
        edges[0], edges[-1] = box.lower[i], box.upper[i]
        lo_axes.append(edges[:-1])
        hi_axes.append(edges[1:])
    # C order: the last dimension varies fastest
    lowers = np.stack(np.meshgrid(*lo_axes, indexing="ij"), axis=-1).reshape(-1, box.dim)
    uppers = np.stack(np.meshgrid(*hi_axes, indexing="ij"), axis=-1).reshape(-1, box.dim)
    for _ in range(cfg.bisection_depth):
        lowers, uppers = _bisect(lowers, uppers)
    return lowers, uppers


def _bisect(lowers: np.ndarray, uppers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    width = uppers - lowers
    axis = np.argmax(width, axis=1)
    splittable = width[np.arange(len(width)), axis] > 0
    counts = np.where(splittable, 2, 1)
    first = np.cumsum(counts) - counts
    new_lo = np.repeat(lowers, counts, axis=0)
    new_hi = np.repeat(uppers, counts, axis=0)
    rows = np.flatnonzero(splittable)
    ax = axis[rows]
    mid = 0.5 * (lowers[rows, ax] + uppers[rows, ax])
    new_hi[first[rows], ax] = mid
    new_lo[first[rows] + 1, ax] = mid
    return new_lo, new_hi


def propagate_layer(layer: Layer, lo: np.ndarray, hi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Interval image of ``act(W x + b)`` for row-stacked boxes ``[lo, hi]``."""
    w_pos, w_neg = layer.split_weights
    new_lo = lo @ w_pos + hi @ w_neg + layer.bias
    new_hi = hi @ w_pos + lo @ w_neg + layer.bias
    mask = layer.relu_mask
    if mask.all():
        return np.maximum(new_lo, 0.0), np.maximum(new_hi, 0.0)
    if mask.any():
        new_lo = np.where(mask, np.maximum(new_lo, 0.0), new_lo)
        new_hi = np.where(mask, np.maximum(new_hi, 0.0), new_hi)
    return new_lo, new_hi


def interval_layer(layer: Layer, box: IntervalBox) -> IntervalBox:
    if box.dim != layer.in_dim:
        raise InputShapeError(f"layer takes {layer.in_dim} inputs, box has dimension {box.dim}")
    lo, hi = propagate_layer(layer, box.lower[None, :], box.upper[None, :])
    return IntervalBox(lo[0], hi[0])


def propagate(net: Network, lowers: np.ndarray, uppers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = lowers, uppers
    for layer in net.layers:
        lo, hi = propagate_layer(layer, lo, hi)
    return lo, hi


def reach_nn(net: Network, box: IntervalBox, cfg: PartitionConfig | None = None) -> BoxUnion:
    """Output over-approximation: one output box per partition cell.

    For every ``x`` in a cell, ``net(x)`` lies in that cell's output box.
    """
    if box.dim != net.input_dim:
        raise InputShapeError(f"network takes {net.input_dim} inputs, box has dimension {box.dim}")
    lowers, uppers = partition(box, cfg)
    lo, hi = propagate(net, lowers, uppers)
    return BoxUnion(lo, hi)
