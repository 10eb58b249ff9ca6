"""Randomized signatures and Johnson-Lindenstrauss utilities.

The randomized signature of a ``d``-dimensional path is the terminal state of
the Euler recursion

    Z_n = Z_{n-1} + sum_i sigma(A_i Z_{n-1} + b_i) * (X^i_n - X^i_{n-1})

driven by random ``k x k`` matrices ``A_i``, shifts ``b_i`` and start ``z0``.

Random draws come from ``numpy.random.default_rng(seed)`` (PCG64) in a fixed
order: ``A_1`` row-major, ..., ``A_d``, then ``b_1``, ..., ``b_d``, then ``z0``.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from sigmort.errors import DataError, NumericError
from sigmort.paths import Path

ACTIVATIONS = ("linear", "tanh", "identity", "constant")
DIVERGENCE_LIMIT = 1e12


@dataclass(frozen=True)
class Activation:
    """Componentwise activation.

    ``linear`` is ``x -> scale * x``; ``scale=None`` means ``1 / (d * sqrt(k))``.
    ``constant`` ignores its argument and returns ``scale`` (sensitivity variant).
    """

    kind: str = "linear"
    scale: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ACTIVATIONS:
            raise DataError(f"unknown activation {self.kind!r}; choose from {ACTIVATIONS}")

    def resolve_scale(self, d: int, k: int) -> float:
        if self.scale is not None:
            return float(self.scale)
        return 1.0 / (d * math.sqrt(k))

    def tag(self) -> str:
        return self.kind if self.scale is None else f"{self.kind}({self.scale!r})"


@dataclass(frozen=True)
class RandSigParams:
    k: int
    d: int
    seed: int
    activation: Activation
    A: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    z0: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        for name, shape in (("A", (self.d, self.k, self.k)), ("b", (self.d, self.k)), ("z0", (self.k,))):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DataError(f"{name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"{name} has non-finite entries")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def slope(self) -> float:
        return self.activation.resolve_scale(self.d, self.k)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(f"{self.k}|{self.d}|{self.seed}|{self.activation.tag()}".encode())
        for arr in (self.A, self.b, self.z0):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()[:16]

    def sigma(self, x: np.ndarray) -> np.ndarray:
        kind = self.activation.kind
        if kind == "linear":
            return self.slope * x
        if kind == "tanh":
            return np.tanh(x)
        if kind == "identity":
            return x
        return np.full_like(x, self.slope)


@dataclass(frozen=True)
class RandomizedSignature:
    state: np.ndarray
    params_fingerprint: str
    trajectory: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return self.state.size


def sample_params(
    d: int,
    k: int,
    seed: int,
    activation: Activation | str = "linear",
    zero_start: bool = False,
) -> RandSigParams:
    if d < 1 or k < 1:
        raise DataError(f"need d >= 1 and k >= 1, got d={d}, k={k}")
    if isinstance(activation, str):
        activation = Activation(activation)
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((d, k, k))
    b = rng.standard_normal((d, k))
    z0 = rng.standard_normal(k)
    if zero_start:
        z0 = np.zeros(k)
    return RandSigParams(k=k, d=d, seed=seed, activation=activation, A=A, b=b, z0=z0)


def randomized_signature_batch(
    points: np.ndarray, params: RandSigParams, keep_trajectory: bool = False
):
    """Run the recursion for a batch of paths of shape ``(B, L, d)``.

    Returns the terminal states ``(B, k)``, or ``(states, trajectory)`` with
    trajectory of shape ``(B, L, k)`` when ``keep_trajectory`` is set.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 3 or pts.shape[1] < 2:
        raise DataError(f"expected (batch, L >= 2, d) array, got shape {pts.shape}")
    if pts.shape[2] != params.d:
        raise DataError(f"path dimension {pts.shape[2]} != params dimension {params.d}")
    batch = pts.shape[0]
    dx = np.diff(pts, axis=1)
    z = np.tile(params.z0, (batch, 1))
    traj = [z.copy()] if keep_trajectory else None
    # (d, k, k) -> (k_in, d*k_out) so one matmul covers every A_i
    A_stack = params.A.transpose(2, 0, 1).reshape(params.k, params.d * params.k)
    b_stack = params.b.reshape(-1)
    for n in range(dx.shape[1]):
        pre = (z @ A_stack + b_stack).reshape(batch, params.d, params.k)
        z = z + np.einsum("bik,bi->bk", params.sigma(pre), dx[:, n, :])
        if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > DIVERGENCE_LIMIT:
            raise NumericError(
                f"randomized signature diverged at step {n + 1} "
                f"(|Z| > {DIVERGENCE_LIMIT:g}); reduce the activation scale"
            )
        if keep_trajectory:
            traj.append(z.copy())
    if keep_trajectory:
        return z, np.stack(traj, axis=1)
    return z


def randomized_signature(
    p: Path, params: RandSigParams, keep_trajectory: bool = False
) -> RandomizedSignature:
    out = randomized_signature_batch(p.points[None], params, keep_trajectory)
    if keep_trajectory:
        z, traj = out
        return RandomizedSignature(z[0], params.fingerprint(), traj[0])
    return RandomizedSignature(out[0], params.fingerprint())


def jl_min_dimension(n_points: int, eps: float) -> int:
    """Smallest ``k`` with ``k > 4 ln(N) / (3 eps^2 - 2 eps^3)``."""
    if not 0.0 < eps < 1.0:
        raise DataError(f"eps must lie in (0, 1), got {eps}")
    if n_points < 2:
        raise DataError(f"need at least 2 points, got {n_points}")
    bound = 4.0 * math.log(n_points) / (3.0 * eps**2 - 2.0 * eps**3)
    return math.floor(bound) + 1


def gaussian_projection(dim_in: int, k: int, seed: int) -> np.ndarray:
    """``(dim_in, k)`` matrix with N(0, 1/k) entries; ``x @ P`` projects rows."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((dim_in, k)) / math.sqrt(k)
