"""Truncated path signatures via segment exponentials and Chen's relation.

Coefficients are stored level-major: ``[1, level 1 (d), level 2 (d^2), ...]``
with lexicographic multi-index order inside each level, so the entry for
``(i1, i2)`` at level 2 sits at offset ``1 + d + i1 * d + i2``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sigmort.errors import DataError
from sigmort.paths import Path

_INT64_MAX = np.iinfo(np.int64).max


def sig_dim(d: int, m: int) -> int:
    """Number of coefficients ``sum_{i=0..m} d**i`` of an order-``m`` signature."""
    if d < 1 or m < 0:
        raise DataError(f"need d >= 1 and m >= 0, got d={d}, m={m}")
    total = sum(d**i for i in range(m + 1))
    if total > _INT64_MAX:
        raise OverflowError(f"signature size for d={d}, m={m} exceeds int64")
    return total


def level_slices(d: int, m: int) -> list[slice]:
    out, start = [], 0
    for i in range(m + 1):
        out.append(slice(start, start + d**i))
        start += d**i
    return out


@dataclass(frozen=True)
class TruncatedSignature:
    dim: int
    order: int
    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size != sig_dim(self.dim, self.order):
            raise DataError(
                f"expected {sig_dim(self.dim, self.order)} coefficients, got {c.size}"
            )
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    def level(self, i: int) -> np.ndarray:
        return self.coeffs[level_slices(self.dim, self.order)[i]]

    def levels(self) -> list[np.ndarray]:
        return [self.coeffs[s] for s in level_slices(self.dim, self.order)]

    def __getitem__(self, multi_index: tuple[int, ...]) -> float:
        """Coefficient for a 1-based multi-index, e.g. ``sig[(1, 2)]``."""
        if len(multi_index) == 0:
            return float(self.coeffs[0])
        offset = 0
        for i in multi_index:
            offset = offset * self.dim + (i - 1)
        return float(self.level(len(multi_index))[offset])


def unit(dim: int, order: int) -> TruncatedSignature:
    c = np.zeros(sig_dim(dim, order))
    c[0] = 1.0
    return TruncatedSignature(dim, order, c)


def _tensor(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # batched flattened outer product, a's index varies slowest
    return (a[:, :, None] * b[:, None, :]).reshape(a.shape[0], -1)


def _mul_exp(levels: list[np.ndarray], delta: np.ndarray, m: int) -> None:
    """In place: ``levels <- levels (x) exp(delta)`` truncated at order ``m``."""
    for lvl in range(m, 0, -1):
        acc = levels[0] * (delta / lvl)
        for i in range(1, lvl):
            acc = _tensor(acc + levels[i], delta / (lvl - i))
        levels[lvl] = levels[lvl] + acc


def signature_batch(points: np.ndarray, m: int) -> np.ndarray:
    """Signatures of a batch of paths.

    Parameters
    ----------
    points : ndarray, shape (B, L, d)
        ``B`` paths with ``L >= 2`` points each.
    m : int
        Truncation order (``>= 1``).

    Returns
    -------
    ndarray, shape (B, sig_dim(d, m))
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 3 or pts.shape[1] < 2:
        raise DataError(f"expected (batch, L >= 2, d) array, got shape {pts.shape}")
    if m < 1:
        raise DataError(f"truncation order must be >= 1, got {m}")
    batch, _, d = pts.shape
    sig_dim(d, m)
    levels = [np.ones((batch, 1))] + [np.zeros((batch, d**i)) for i in range(1, m + 1)]
    for delta in np.swapaxes(np.diff(pts, axis=1), 0, 1):
        _mul_exp(levels, delta, m)
    return np.hstack(levels)


def truncated_signature(p: Path, m: int) -> TruncatedSignature:
    coeffs = signature_batch(p.points[None, :, :], m)[0]
    return TruncatedSignature(p.dim, m, coeffs)


def chen_concat(a: TruncatedSignature, b: TruncatedSignature) -> TruncatedSignature:
    """Signature of the concatenated path: the truncated tensor product ``a (x) b``."""
    if a.dim != b.dim or a.order != b.order:
        raise DataError(
            f"cannot concatenate signatures with (dim, order) {(a.dim, a.order)} "
            f"and {(b.dim, b.order)}"
        )
    la = [x[None, :] for x in a.levels()]
    lb = [x[None, :] for x in b.levels()]
    out = []
    for lvl in range(a.order + 1):
        acc = np.zeros((1, a.dim**lvl))
        for i in range(lvl + 1):
            acc = acc + _tensor(la[i], lb[lvl - i])
        out.append(acc[0])
    return TruncatedSignature(a.dim, a.order, np.concatenate(out))
