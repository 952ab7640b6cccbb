"""Scikit-learn style wrapper around the fitting pipeline.

``SirenSDF`` treats an oriented point cloud as the training set of an
estimator whose learned function is the signed field of a sine network.
``fit`` takes an ``(n, 6)`` array of positions and unit normals,
``predict``/``transform`` evaluate the learned field at query positions,
and ``extract`` pulls a uniform iso-point sampling of the learned zero
set.  Hyperparameters mirror :class:`isopoints.config.FitConfig` one to
one so ``get_params``/``set_params`` and grid-search tooling work
unmodified.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .config import FitConfig, SamplerConfig
from .extraction import IsoPointSet, extract_iso_points
from .fitting import fit as _fit

__all__ = ["SirenSDF"]


class SirenSDF(TransformerMixin, BaseEstimator):
    """Signed-field estimator backed by a sine network.

    Parameters are the training hyperparameters; see
    :class:`isopoints.config.FitConfig` for semantics.  After ``fit``:

    - ``network_`` is the trained :class:`~isopoints.siren.SirenNetwork`;
    - ``log_`` is the :class:`~isopoints.fitting.FitLog`;
    - ``predict(X)`` returns the signed field value at each query row
      (first three columns are used, so training-shaped input works);
    - ``transform(X)`` returns the same values as an ``(n, 1)`` column.
    """

    def __init__(
        self,
        gamma_on: float = 1000.0,
        gamma_normal: float = 100.0,
        gamma_off: float = 50.0,
        gamma_eik: float = 100.0,
        alpha_off: float = 100.0,
        sigma_n: float = 60.0,
        warmup_iters: int = 300,
        iso_update_period: int = 2000,
        iso_init_subsample: float = 0.125,
        iters: int = 5000,
        batch_size: int = 2048,
        learning_rate: float = 1e-4,
        seed: int = 0,
        outlier_weighting: bool = True,
        iso_losses: bool = True,
        psi_literal: bool = False,
        width: int = 256,
        hidden_layers: int = 3,
        omega: float = 30.0,
    ) -> None:
        self.gamma_on = gamma_on
        self.gamma_normal = gamma_normal
        self.gamma_off = gamma_off
        self.gamma_eik = gamma_eik
        self.alpha_off = alpha_off
        self.sigma_n = sigma_n
        self.warmup_iters = warmup_iters
        self.iso_update_period = iso_update_period
        self.iso_init_subsample = iso_init_subsample
        self.iters = iters
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.seed = seed
        self.outlier_weighting = outlier_weighting
        self.iso_losses = iso_losses
        self.psi_literal = psi_literal
        self.width = width
        self.hidden_layers = hidden_layers
        self.omega = omega

    def _config(self) -> FitConfig:
        return FitConfig(**self.get_params())

    def fit(self, X, y=None, sampler: SamplerConfig | None = None):
        """Train on an ``(n, 6)`` array of positions and unit normals."""
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 6:
            raise ValueError(
                f"expected (n, 6) positions+normals, got {X.shape[1]} columns"
            )
        self.network_, self.log_ = _fit(
            X[:, :3], X[:, 3:6], self._config(), sampler=sampler
        )
        self.n_features_in_ = 6
        return self

    def _positions(self, X) -> np.ndarray:
        X = check_array(X, dtype=np.float64)
        if X.shape[1] not in (3, 6):
            raise ValueError(
                f"expected (n, 3) positions or (n, 6) rows, got {X.shape[1]} columns"
            )
        return X[:, :3]

    def predict(self, X) -> np.ndarray:
        """Signed field value at each query position, shape ``(n,)``."""
        check_is_fitted(self, "network_")
        return self.network_.values(self._positions(X))

    def transform(self, X) -> np.ndarray:
        """Signed field values as an ``(n, 1)`` feature column."""
        return self.predict(X).reshape(-1, 1)

    def extract(
        self,
        n: int,
        sampler: SamplerConfig | None = None,
        seed: int | None = None,
        eps: float | None = None,
    ) -> IsoPointSet:
        """Uniform iso-point sampling of the learned zero set."""
        check_is_fitted(self, "network_")
        cfg = sampler or SamplerConfig()
        return extract_iso_points(
            self.network_,
            None,
            n_target=n,
            cfg=cfg,
            seed=self.seed if seed is None else seed,
            eps=eps if eps is not None else cfg.eps_end,
        )
