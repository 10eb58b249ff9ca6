"""Sampled paths and the scalar-series embedding used before signatures.

A path is a sequence of ``N + 1`` points in ``R^d`` connected linearly. The
embedding of a scalar series applies, in order, basepoint augmentation, the
lead-lag transformation and time augmentation, giving a 3-dimensional path
with ``2n + 1`` points for a series of length ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sigmort.errors import DataError


@dataclass(frozen=True)
class Path:
    """Piecewise-linear path through ``points`` (shape ``(N + 1, d)``)."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise DataError(f"path points must be a 2-d array, got shape {pts.shape}")
        if pts.shape[0] < 2:
            raise DataError("a path needs at least two points")
        if pts.shape[1] < 1:
            raise DataError("path dimension must be at least 1")
        if not np.all(np.isfinite(pts)):
            raise DataError("path points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_increments(self) -> int:
        return self.points.shape[0] - 1

    def __len__(self) -> int:
        return self.points.shape[0]

    def increments(self) -> np.ndarray:
        return np.diff(self.points, axis=0)


def from_series(values) -> Path:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size < 2:
        raise DataError(f"series needs at least 2 values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise DataError("series contains non-finite values")
    return Path(arr[:, None])


def basepoint_augment(p: Path) -> Path:
    """Prepend the origin of ``R^d``."""
    return Path(np.vstack([np.zeros((1, p.dim)), p.points]))


def lead_lag(p: Path) -> Path:
    """Lead-lag transform of a scalar path.

    Point ``2j`` is ``(x_j, x_j)`` and point ``2j + 1`` is ``(x_{j+1}, x_j)``:
    the lead coordinate moves first, then the lag catches up.
    """
    if p.dim != 1:
        raise DataError(f"lead-lag is only defined here for 1-d paths, got d={p.dim}")
    x = p.points[:, 0]
    lead = np.repeat(x, 2)[1:]
    lag = np.repeat(x, 2)[:-1]
    return Path(np.column_stack([lead, lag]))


def time_augment(p: Path) -> Path:
    """Append equidistant time ``j / N`` as the last coordinate."""
    t = np.linspace(0.0, 1.0, len(p))
    return Path(np.column_stack([p.points, t]))


def embed_series(values) -> Path:
    """Basepoint, then lead-lag, then time. Output dimension is always 3."""
    return time_augment(lead_lag(basepoint_augment(from_series(values))))


def embed_batch(series: np.ndarray) -> np.ndarray:
    """Vectorised :func:`embed_series` over the rows of ``series``.

    Returns an array of shape ``(B, 2n + 1, 3)``; row ``b`` equals
    ``embed_series(series[b]).points``.
    """
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise DataError(f"expected (batch, n >= 2) array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DataError("series contains non-finite values")
    batch, n = arr.shape
    based = np.hstack([np.zeros((batch, 1)), arr])
    doubled = np.repeat(based, 2, axis=1)
    lead = doubled[:, 1:]
    lag = doubled[:, :-1]
    t = np.broadcast_to(np.linspace(0.0, 1.0, 2 * n + 1), lead.shape)
    return np.stack([lead, lag, t], axis=-1)
