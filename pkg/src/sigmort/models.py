"""End-to-end model configurations: smoothing, decomposition and score forecasting.

``hurs`` and ``huts`` build the age basis from randomized / truncated signature
features of each age's centred time series; ``hu`` uses FPCA of the curves and
``whu`` the same with geometrically decaying year weights. ``naive`` repeats
the last observed curve and serves as a benchmark.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from sigmort.decompose import (
    Decomposition,
    RandomizedFeaturizer,
    TruncatedFeaturizer,
    center,
    feature_matrix,
    fpca_decompose,
    geometric_weights,
    mean_function,
    pcr_decompose,
)
from sigmort.errors import UsageError
from sigmort.forecast import forecast_surface
from sigmort.io import MortalitySurface
from sigmort.randsig import Activation
from sigmort.smoothing import SmoothingConfig, smooth_surface

MODELS = ("hurs", "huts", "hu", "whu", "naive")


@dataclass(frozen=True)
class ModelConfig:
    model: str = "hurs"
    components: int = 6
    k: int = 100
    order: int = 3
    activation: str = "linear"
    activation_scale: float | None = None
    zero_start: bool = False
    kappa: float = 0.1
    seed: int = 0
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    label: str | None = None

    def __post_init__(self) -> None:
        if self.model not in MODELS:
            raise UsageError(f"unknown model {self.model!r}; choose from {', '.join(MODELS)}")
        if self.components < 0:
            raise UsageError("components must be >= 0")
        if self.k < 1:
            raise UsageError("k must be >= 1")
        if self.order < 1:
            raise UsageError("truncation order must be >= 1")
        if not 0.0 <= self.kappa < 1.0:
            raise UsageError("kappa must lie in [0, 1)")

    @property
    def name(self) -> str:
        return self.label or self.model

    def featurizer(self, seed: int | None = None):
        if self.model == "hurs":
            act = Activation(self.activation, self.activation_scale)
            return RandomizedFeaturizer(self.k, self.seed if seed is None else seed, act, self.zero_start)
        if self.model == "huts":
            return TruncatedFeaturizer(self.order)
        return None

    def as_dict(self) -> dict:
        d = asdict(self)
        d["smoothing"] = asdict(self.smoothing)
        return d

    def fit(self, smoothed: MortalitySurface, seed: int | None = None) -> Decomposition:
        """Decompose an already smoothed surface."""
        values = smoothed.values
        ages = smoothed.age_grid
        years = smoothed.years
        K = min(self.components, values.shape[0], values.shape[1])
        if self.model == "whu":
            w = geometric_weights(values.shape[0], self.kappa)
            mu = mean_function(values, w)
            return fpca_decompose(center(values, mu), K, w, mu=mu, ages=ages, years=years)
        mu = mean_function(values)
        fstar = center(values, mu)
        if self.model == "hu":
            return fpca_decompose(fstar, K, mu=mu, ages=ages, years=years)
        features = feature_matrix(fstar, self.featurizer(seed))
        return pcr_decompose(fstar, features, K, mu=mu, ages=ages, years=years)

    def forecast(self, observed: MortalitySurface, h: int, seed: int | None = None,
                 smoothed: MortalitySurface | None = None) -> np.ndarray:
        """Forecast log rates ``h`` years past the end of ``observed`` (``h x ages``)."""
        if self.model == "naive":
            return np.tile(observed.values[-1], (h, 1))
        if smoothed is None:
            smoothed = smooth_surface(observed, cfg=self.smoothing)
        return forecast_surface(self.fit(smoothed, seed), h)
