"""Scikit-learn style front end.

Wraps the trainer in an estimator with ``fit`` / ``score`` / ``get_params``
so the model composes with the wider ecosystem (grid search, cloning,
pipelines that pass estimators around).  Event data is either an
EventSequence or a plain (N, 2) array of [time, mark] rows.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .core import EventSequence, HawkesParams, RegConfig, validate_sequence
from .likelihood import log_likelihood
from .simulator import SimConfig, simulate_thinning
from .trainer import TrainConfig, default_init_params, fit as _fit


def as_event_sequence(X, horizon=None, num_nodes=None) -> EventSequence:
    """Coerce estimator input into a validated EventSequence."""
    if isinstance(X, EventSequence):
        return X
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("X must be an EventSequence or an (N, 2) [time, mark] array")
    times = arr[:, 0]
    marks = arr[:, 1].astype(np.int64)
    if num_nodes is None:
        num_nodes = int(marks.max()) + 1 if marks.size else 1
    if horizon is None:
        horizon = float(times[-1]) if times.size else 0.0
    return validate_sequence(times, marks, horizon, num_nodes)


class HawkesMLE(BaseEstimator):
    """Exact maximum-likelihood multivariate exponential Hawkes estimator.

    Parameters mirror the training configuration; fitted values follow the
    sklearn trailing-underscore convention (mu_, alpha_, gamma_, report_).

    >>> est = HawkesMLE(n_kernels=1, epochs=200).fit(X)   # doctest: +SKIP
    >>> est.score(X)                                      # doctest: +SKIP
    """

    def __init__(
        self,
        n_kernels: int = 1,
        epochs: int = 1000,
        learning_rate: float = 0.05,
        lambda1: float = 0.1,
        hinge: float = 0.05,
        batch_size: int | None = None,
        backend: str = "scan",
        workers: int | None = None,
        seed: int = 0,
    ):
        self.n_kernels = n_kernels
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.lambda1 = lambda1
        self.hinge = hinge
        self.batch_size = batch_size
        self.backend = backend
        self.workers = workers
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            reg=RegConfig(lambda1=self.lambda1, hinge=self.hinge),
            backend=self.backend,
            workers=self.workers,
            seed=self.seed,
        )

    def fit(self, X, y=None, horizon=None, num_nodes=None, init_params=None):
        seq = as_event_sequence(X, horizon, num_nodes)
        if init_params is None:
            init_params = default_init_params(seq, self.n_kernels)
        report = _fit(seq, init_params, self._config())
        self.n_nodes_ = seq.num_nodes
        self.mu_ = report.params.mu
        self.alpha_ = report.params.alpha
        self.gamma_ = report.params.gamma
        self.report_ = report
        return self

    def _fitted_params(self) -> HawkesParams:
        if not hasattr(self, "mu_"):
            raise NotFittedError("HawkesMLE instance is not fitted yet")
        return HawkesParams(mu=self.mu_, alpha=self.alpha_, gamma=self.gamma_)

    def score(self, X, y=None, horizon=None) -> float:
        """Per-event log-likelihood of X under the fitted parameters
        (higher is better)."""
        params = self._fitted_params()
        seq = as_event_sequence(X, horizon, self.n_nodes_)
        return log_likelihood(seq, params, backend=self.backend, workers=self.workers) / max(
            1, len(seq)
        )

    def sample(self, horizon: float, seed: int = 0) -> EventSequence:
        """Simulate a sequence from the fitted parameters via thinning."""
        return simulate_thinning(
            SimConfig(params=self._fitted_params(), horizon=horizon, seed=seed)
        )
