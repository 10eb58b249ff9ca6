"""Mean adjustment, signature feature matrices and basis decompositions.

Both decomposition routes express the centred surface as

    f*_t(x) = sum_k beta_{t,k} Z_k(x) + e_t(x)

with orthonormal age profiles ``Z_k``. The PCR route takes ``Z_k`` from the
principal components of per-age signature features; the FPCA route takes them
from the (optionally year-weighted) covariance of the curves themselves.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from sigmort.errors import DataError
from sigmort.paths import embed_batch
from sigmort.randsig import Activation, randomized_signature_batch, sample_params
from sigmort.signature import signature_batch

ZERO_SD_TOL = 1e-12
RANK_TOL = 1e-10


def mean_function(smoothed: np.ndarray, weights: np.ndarray | None = None) -> np.ndarray:
    """Pointwise (optionally weighted) mean over years of a years x ages array."""
    arr = np.asarray(smoothed, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise DataError(f"need a years x ages array with >= 2 years, got shape {arr.shape}")
    if weights is None:
        return arr.mean(axis=0)
    w = _normalised_weights(weights, arr.shape[0])
    return w @ arr


def center(smoothed: np.ndarray, mu: np.ndarray) -> np.ndarray:
    arr = np.asarray(smoothed, dtype=float)
    mu = np.asarray(mu, dtype=float)
    if arr.ndim != 2 or mu.shape != (arr.shape[1],):
        raise DataError(f"age grid mismatch: surface {arr.shape}, mean {mu.shape}")
    return arr - mu


def geometric_weights(n: int, kappa: float) -> np.ndarray:
    """Year weights ``w_t ~ (1 - kappa)^(n - t)``, summing to one (most recent year largest)."""
    if not 0.0 <= kappa < 1.0:
        raise DataError(f"kappa must lie in [0, 1), got {kappa}")
    w = (1.0 - kappa) ** np.arange(n - 1, -1, -1, dtype=float)
    return w / w.sum()


def _normalised_weights(weights, n):
    w = np.asarray(weights, dtype=float).reshape(-1)
    if w.size != n:
        raise DataError(f"expected {n} year weights, got {w.size}")
    if np.any(w <= 0) or not np.all(np.isfinite(w)):
        raise DataError("year weights must be positive and finite")
    return w / w.sum()


# --------------------------------------------------------------------------- features


@dataclass(frozen=True)
class TruncatedFeaturizer:
    order: int = 3

    @property
    def tag(self) -> str:
        return f"truncated(m={self.order})"

    def __call__(self, paths: np.ndarray) -> np.ndarray:
        return signature_batch(paths, self.order)[:, 1:]


@dataclass(frozen=True)
class RandomizedFeaturizer:
    k: int = 100
    seed: int = 0
    activation: Activation = field(default_factory=Activation)
    zero_start: bool = False

    @property
    def tag(self) -> str:
        return f"randomized(k={self.k}, seed={self.seed}, activation={self.activation.tag()})"

    def __call__(self, paths: np.ndarray) -> np.ndarray:
        params = sample_params(paths.shape[2], self.k, self.seed, self.activation, self.zero_start)
        return randomized_signature_batch(paths, params)


@dataclass(frozen=True)
class FeatureMatrix:
    """Standardised per-age signature features (ages x retained columns)."""

    values: np.ndarray
    column_means: np.ndarray
    column_sds: np.ndarray
    kept_columns: np.ndarray
    dropped_columns: np.ndarray
    featurizer_tag: str
    raw: np.ndarray | None = field(default=None, repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def standardise(raw: np.ndarray, tag: str = "custom") -> FeatureMatrix:
    raw = np.asarray(raw, dtype=float)
    means = raw.mean(axis=0)
    sds = raw.std(axis=0)
    scale = np.maximum(np.abs(means), 1.0)
    keep = sds > ZERO_SD_TOL * scale
    if not np.any(keep):
        warnings.warn("every feature column is constant across ages; no feature components available")
    values = (raw[:, keep] - means[keep]) / sds[keep]
    return FeatureMatrix(
        values=values,
        column_means=means[keep],
        column_sds=sds[keep],
        kept_columns=np.flatnonzero(keep),
        dropped_columns=np.flatnonzero(~keep),
        featurizer_tag=tag,
        raw=raw,
    )


def feature_matrix(fstar: np.ndarray, featurizer) -> FeatureMatrix:
    """Row ``i`` is the signature of the embedded series ``fstar[:, i]``, constant term dropped."""
    fstar = np.asarray(fstar, dtype=float)
    if fstar.ndim != 2 or fstar.shape[0] < 3:
        raise DataError(f"need a years x ages array with >= 3 years, got shape {fstar.shape}")
    paths = embed_batch(fstar.T)
    return standardise(featurizer(paths), featurizer.tag)


# --------------------------------------------------------------------------- decompositions


@dataclass(frozen=True)
class Decomposition:
    mu: np.ndarray
    basis: np.ndarray  # ages x K, orthonormal columns
    scores: np.ndarray  # years x K
    residuals: np.ndarray  # years x ages
    variance_explained: np.ndarray
    ages: np.ndarray | None = None
    years: np.ndarray | None = None
    method: str = ""
    info: dict = field(default_factory=dict, compare=False)

    @property
    def n_components(self) -> int:
        return self.basis.shape[1]

    def fitted(self) -> np.ndarray:
        return self.mu + self.scores @ self.basis.T

    def reconstruct(self) -> np.ndarray:
        return self.fitted() + self.residuals

    def basis_at(self, x) -> np.ndarray:
        """Basis functions linearly interpolated at ages ``x`` (shape ``len(x) x K``)."""
        if self.ages is None:
            raise DataError("decomposition has no age grid")
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.column_stack([np.interp(x, self.ages, z) for z in self.basis.T]) if self.n_components else np.zeros((x.size, 0))

    def write_bundle(self, out_dir, age_labels=None, header_lines=()) -> list[FsPath]:
        """Write ``mu.csv``, ``basis.csv`` and ``scores.csv``."""
        out = FsPath(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        labels = list(age_labels) if age_labels is not None else [repr(float(a)) for a in self.ages]
        years = self.years if self.years is not None else np.arange(self.scores.shape[0])
        comps = [f"Z{k + 1}" for k in range(self.n_components)]
        written = []

        def dump(name, head, rows):
            path = out / name
            with path.open("w", encoding="utf-8", newline="") as fh:
                for h in header_lines:
                    fh.write(f"# {h}\n")
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(head)
                w.writerows(rows)
            written.append(path)

        dump("mu.csv", ["age", "mu"], [[a, repr(float(m))] for a, m in zip(labels, self.mu)])
        dump("basis.csv", ["age"] + comps,
             [[a] + [repr(float(v)) for v in row] for a, row in zip(labels, self.basis)])
        dump("scores.csv", ["year"] + [f"beta{k + 1}" for k in range(self.n_components)],
             [[int(y)] + [repr(float(v)) for v in row] for y, row in zip(years, self.scores)])
        return written


def _sign_fix(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so each one's largest-magnitude entry is positive."""
    if vectors.shape[1] == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _effective_rank(singular_values: np.ndarray) -> int:
    if singular_values.size == 0 or singular_values[0] == 0:
        return 0
    return int(np.sum(singular_values > RANK_TOL * singular_values[0]))


def pcr_decompose(
    fstar: np.ndarray,
    features: FeatureMatrix,
    K: int,
    mu=None,
    ages=None,
    years=None,
    intercept: bool = True,
) -> Decomposition:
    """Principal component regression of the centred curves on per-age features.

    Leading principal-component score vectors of the feature matrix
    (ages as observations) become basis functions ``Z_k``; year scores are the
    least-squares coefficients of each curve on the basis. Feature PCs are
    centred over ages, so with ``intercept`` the first basis function is the
    constant age profile ``1 / sqrt(p)`` (a level shift common to all ages)
    and the remaining ``K - 1`` come from the features.
    Components are reported in order of the response variance they explain.
    """
    fstar = np.asarray(fstar, dtype=float)
    n, p = fstar.shape
    F = features.values
    if F.shape[0] != p:
        raise DataError(f"feature matrix has {F.shape[0]} rows but the surface has {p} ages")
    if K < 0 or K > min(p, n):
        raise DataError(f"K={K} must lie in [0, min(ages={p}, years={n})]")
    if F.shape[1] == 0:
        U, s = np.zeros((p, 0)), np.zeros(0)
    else:
        U, s, _ = np.linalg.svd(F - F.mean(axis=0), full_matrices=False)
    rank = _effective_rank(s)
    use_intercept = intercept and K > 0
    n_pcs = K - 1 if use_intercept else K
    if n_pcs > rank:
        warnings.warn(f"feature matrix has rank {rank}; using {rank} feature components instead of {n_pcs}")
        n_pcs = rank
    Z = _sign_fix(U[:, :n_pcs])
    if use_intercept:
        Z = np.column_stack([np.full(p, 1.0 / np.sqrt(p)), Z])
    scores = fstar @ Z
    total = float(np.sum(fstar**2))
    explained = np.sum(scores**2, axis=0) / total if total > 0 else np.zeros(Z.shape[1])
    order = np.argsort(-explained, kind="stable")
    Z, scores, explained = Z[:, order], scores[:, order], explained[order]
    residuals = fstar - scores @ Z.T
    return Decomposition(
        mu=np.zeros(p) if mu is None else np.asarray(mu, dtype=float),
        basis=Z,
        scores=scores,
        residuals=residuals,
        variance_explained=explained,
        ages=ages,
        years=years,
        method="pcr",
        info={
            "featurizer": features.featurizer_tag,
            "feature_pc_order": order.tolist(),
            "feature_singular_values": s[:n_pcs].tolist(),
            "dropped_feature_columns": features.dropped_columns.tolist(),
        },
    )


def fpca_decompose(fstar: np.ndarray, K: int, weights=None, mu=None, ages=None, years=None) -> Decomposition:
    """Eigen-decomposition of the (year-weighted) covariance of the centred curves."""
    fstar = np.asarray(fstar, dtype=float)
    n, p = fstar.shape
    if K < 0 or K > min(n, p):
        raise DataError(f"K={K} exceeds min(years={n}, ages={p})")
    w = np.full(n, 1.0 / n) if weights is None else _normalised_weights(weights, n)
    _, s, Vt = np.linalg.svd(np.sqrt(w)[:, None] * fstar, full_matrices=False)
    rank = _effective_rank(s)
    if K > rank:
        warnings.warn(f"curve matrix has rank {rank}; reducing K from {K} to {rank}")
        K = rank
    Z = _sign_fix(Vt[:K].T)
    scores = fstar @ Z
    total = float(np.sum(s**2))
    explained = s[:K] ** 2 / total if total > 0 else np.zeros(K)
    residuals = fstar - scores @ Z.T
    return Decomposition(
        mu=np.zeros(p) if mu is None else np.asarray(mu, dtype=float),
        basis=Z,
        scores=scores,
        residuals=residuals,
        variance_explained=explained,
        ages=ages,
        years=years,
        method="fpca" if weights is None else "weighted-fpca",
        info={"eigenvalues": (s[:K] ** 2).tolist()},
    )
