"""Scikit-learn style estimator facade over the functional training pipeline.

FarconVAE treats every input column as continuous. For schema-aware tabular
data (mixed continuous/one-hot columns, CSV ingestion) use the data module
and training pipeline directly, or the CLI.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .data import Dataset, build_counterfactual_pairs, fit_standardizer, split
from .evaluation import encode_dataset
from .losses import LossWeights
from .model import predict_logits
from .training import FarconConfig, predict_aux, train_aux_classifier, train_farcon
from .validation import check_binary, check_consistent_length, check_matrix

__all__ = ["FarconVAE"]


class FarconVAE(BaseEstimator, TransformerMixin):
    """Fair representation learner with a fit/transform/predict interface.

    fit(X, y, sensitive=s) trains the paired VAE; transform returns the
    sensitive-free task representation z_x; predict returns labels from the
    built-in predictor head. The sensitive attribute is part of the encoder
    input, so transform and predict need it too.
    """

    def __init__(
        self,
        zx_dim: int = 8,
        zs_dim: int | None = None,
        hidden_dim: int = 64,
        alpha: float = 1.0,
        beta: float = 0.2,
        gamma: float = 1.0,
        kernel: str = "gaussian",
        lr: float = 1e-3,
        weight_decay: float = 1e-4,
        epochs: int = 100,
        batch_size: int = 64,
        beta_anneal_fraction: float = 0.1,
        pairing: str = "matched_neighbor",
        y_input_mode: str = "label",
        early_stop_patience: int = 30,
        validation_fraction: float = 0.1,
        random_state: int = 0,
    ):
        self.zx_dim = zx_dim
        self.zs_dim = zs_dim
        self.hidden_dim = hidden_dim
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.kernel = kernel
        self.lr = lr
        self.weight_decay = weight_decay
        self.epochs = epochs
        self.batch_size = batch_size
        self.beta_anneal_fraction = beta_anneal_fraction
        self.pairing = pairing
        self.y_input_mode = y_input_mode
        self.early_stop_patience = early_stop_patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _config(self) -> FarconConfig:
        return FarconConfig(
            zx_dim=self.zx_dim,
            zs_dim=self.zs_dim,
            hidden_dim=self.hidden_dim,
            weights=LossWeights(alpha=self.alpha, beta=self.beta, gamma=self.gamma, kernel=self.kernel),
            lr=self.lr,
            weight_decay=self.weight_decay,
            epochs=self.epochs,
            batch_size=self.batch_size,
            beta_anneal_fraction=self.beta_anneal_fraction,
            seed=self.random_state,
            pairing=self.pairing,
            y_input_mode=self.y_input_mode,
            early_stop_patience=self.early_stop_patience,
        )

    def fit(self, X, y, sensitive=None):
        if sensitive is None:
            raise ValueError("fit requires the sensitive attribute: fit(X, y, sensitive=s)")
        X = check_matrix(X)
        y = check_binary(y, "y")
        s = check_binary(sensitive, "sensitive")
        check_consistent_length(X=X, y=y, sensitive=s)
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")

        config = self._config()
        dataset = Dataset(
            X=X,
            S=s.reshape(-1, 1),
            Y=y.astype(np.int64),
            feature_names=[f"x{i}" for i in range(X.shape[1])],
            x_cont_dim=X.shape[1],
        )
        vf = self.validation_fraction
        train, valid, _ = split(dataset, (1.0 - vf, vf, 0.0), seed=[config.seed, 2])
        self.standardizer_ = fit_standardizer(train)
        train = self.standardizer_.apply(train)
        valid = self.standardizer_.apply(valid)
        self.aux_ = None
        if config.y_input_mode == "label":
            self.aux_, _ = train_aux_classifier(config, train, valid if valid.n else None)
        paired = build_counterfactual_pairs(train, strategy=config.pairing, seed=config.seed)
        self.model_, self.history_ = train_farcon(config, paired, valid if valid.n else None)
        self.n_features_in_ = X.shape[1]
        self.config_ = config
        return self

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise NotFittedError("this FarconVAE instance is not fitted yet; call fit first")

    def _prepare(self, X, sensitive):
        self._check_fitted()
        if sensitive is None:
            raise ValueError("the sensitive attribute is required: pass sensitive=s")
        X = check_matrix(X)
        s = check_binary(sensitive, "sensitive")
        check_consistent_length(X=X, sensitive=s)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        Xs = X.copy()
        c = len(self.standardizer_.mean)
        Xs[:, :c] = (Xs[:, :c] - self.standardizer_.mean) / self.standardizer_.std
        return Xs, s.reshape(-1, 1)

    def _y_input(self, X: np.ndarray) -> np.ndarray:
        if self.config_.y_input_mode == "constant":
            return np.full((X.shape[0], 1), 0.5)
        return predict_aux(self.aux_, X)

    def transform(self, X, sensitive=None) -> np.ndarray:
        """Posterior-mean task representation z_x, shape [n, zx_dim]."""
        Xs, s = self._prepare(X, sensitive)
        dataset = Dataset(
            X=Xs, S=s, Y=np.zeros(len(Xs), dtype=np.int64),
            feature_names=[f"x{i}" for i in range(Xs.shape[1])], x_cont_dim=Xs.shape[1],
        )
        y_source = "constant" if self.config_.y_input_mode == "constant" else "aux_classifier"
        return encode_dataset(self.model_, dataset, y_source=y_source, aux=self.aux_)

    def decision_function(self, X, sensitive=None) -> np.ndarray:
        Xs, s = self._prepare(X, sensitive)
        return predict_logits(self.model_, Xs, s, self._y_input(Xs))

    def predict(self, X, sensitive=None) -> np.ndarray:
        return (self.decision_function(X, sensitive) > 0.0).astype(np.int64)

    def predict_proba(self, X, sensitive=None) -> np.ndarray:
        logits = self.decision_function(X, sensitive)
        p1 = 1.0 / (1.0 + np.exp(-logits))
        return np.column_stack([1.0 - p1, p1])

    def score(self, X, y, sensitive=None) -> float:
        """Label accuracy in [0, 1]."""
        y = check_binary(y, "y")
        return float((self.predict(X, sensitive) == y.astype(np.int64)).mean())
