"""Estimator-style wrappers around the decomposition drivers.

Both estimators follow the scikit-learn parameter protocol (constructor
keyword arguments mirrored by ``get_params``/``set_params``, fitted state
in trailing-underscore attributes) so they compose with ``sklearn.base.clone``
and pipeline tooling without this package depending on scikit-learn.

``fit`` accepts a ``CooTensor``, an ``AltoTensor``, or a dense array.
"""

from __future__ import annotations

import inspect

import numpy as np

from .cpd import (
    CpAlsConfig,
    CpAprConfig,
    cp_als,
    cp_apr_mu,
    poisson_loglik,
)
from .kernels import DEFAULT_TEMP_BUDGET_BYTES
from .cpd.apr import DEFAULT_FAST_MEMORY_BYTES
from .tensor import AltoTensor, CooTensor


def as_alto_tensor(data) -> AltoTensor:
    """Coerce estimator input into the linearized kernel format."""
    if isinstance(data, AltoTensor):
        return data
    if isinstance(data, CooTensor):
        return AltoTensor.from_coo(data)
    arr = np.asarray(data)
    if arr.dtype == object or arr.ndim < 1:
        raise TypeError(f"cannot interpret {type(data).__name__} as a sparse tensor")
    return AltoTensor.from_coo(CooTensor.from_dense(arr))


class _BaseEstimator:
    """Minimal scikit-learn compatible parameter handling."""

    @classmethod
    def _param_names(cls):
        sig = inspect.signature(cls.__init__)
        return [p for p in sig.parameters if p != "self"]

    def get_params(self, deep: bool = True) -> dict:
        return {name: getattr(self, name) for name in self._param_names()}

    def set_params(self, **params):
        valid = set(self._param_names())
        for name, value in params.items():
            if name not in valid:
                raise ValueError(
                    f"invalid parameter {name!r} for {type(self).__name__}"
                )
            setattr(self, name, value)
        return self

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.get_params().items())
        return f"{type(self).__name__}({args})"


class CpAls(_BaseEstimator):
    """Least-squares Kruskal decomposition estimator.

    Parameters mirror ``CpAlsConfig``. After ``fit``: ``weights_``,
    ``factors_``, ``model_``, ``fit_trace_``, ``n_iters_``, ``converged_``.
    """

    def __init__(
        self,
        rank: int = 16,
        max_iters: int = 50,
        fit_tol: float = 1e-5,
        seed: int = 0,
        workers: int = 1,
        num_segments: int | None = None,
        strategy: str = "auto",
        temp_budget_bytes: int = DEFAULT_TEMP_BUDGET_BYTES,
    ):
        self.rank = rank
        self.max_iters = max_iters
        self.fit_tol = fit_tol
        self.seed = seed
        self.workers = workers
        self.num_segments = num_segments
        self.strategy = strategy
        self.temp_budget_bytes = temp_budget_bytes

    def _config(self) -> CpAlsConfig:
        return CpAlsConfig(**self.get_params())

    def fit(self, X, y=None):
        result = cp_als(as_alto_tensor(X), self._config())
        self.model_ = result.model
        self.weights_ = result.model.weights
        self.factors_ = result.model.factors
        self.fit_trace_ = result.fit_trace
        self.objective_trace_ = result.objective_trace
        self.n_iters_ = result.n_iters
        self.converged_ = result.converged
        self.strategies_ = result.strategies
        self.result_ = result
        return self

    def score(self, X=None, y=None) -> float:
        """Final fit ``1 - |X - model|_F / |X|_F`` from the training run."""
        self._check_fitted()
        return self.fit_trace_[-1]

    def predict(self, coords) -> np.ndarray:
        """Model values at zero-based (M, N) coordinates."""
        self._check_fitted()
        return self.model_.values_at(np.asarray(coords))

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")


class CpApr(_BaseEstimator):
    """Poisson (count-data) Kruskal decomposition estimator.

    Parameters mirror ``CpAprConfig``. After ``fit``: ``weights_``,
    ``factors_``, ``model_``, ``kkt_trace_``, ``loglik_trace_``,
    ``n_outer_``, ``converged_``, ``memory_mode_``.
    """

    def __init__(
        self,
        rank: int = 16,
        max_outer: int = 200,
        max_inner: int = 10,
        tau: float = 1e-4,
        kappa: float = 1e-2,
        kappa_tol: float = 1e-10,
        eps: float = 1e-10,
        memory_mode: str = "auto",
        fast_memory_bytes: int = DEFAULT_FAST_MEMORY_BYTES,
        seed: int = 0,
        workers: int = 1,
        num_segments: int | None = None,
        strategy: str = "auto",
        temp_budget_bytes: int = DEFAULT_TEMP_BUDGET_BYTES,
    ):
        self.rank = rank
        self.max_outer = max_outer
        self.max_inner = max_inner
        self.tau = tau
        self.kappa = kappa
        self.kappa_tol = kappa_tol
        self.eps = eps
        self.memory_mode = memory_mode
        self.fast_memory_bytes = fast_memory_bytes
        self.seed = seed
        self.workers = workers
        self.num_segments = num_segments
        self.strategy = strategy
        self.temp_budget_bytes = temp_budget_bytes

    def _config(self) -> CpAprConfig:
        return CpAprConfig(**self.get_params())

    def fit(self, X, y=None):
        tensor = as_alto_tensor(X)
        result = cp_apr_mu(tensor, self._config())
        self.model_ = result.model
        self.weights_ = result.model.weights
        self.factors_ = result.model.factors
        self.kkt_trace_ = result.kkt_trace
        self.inner_iters_ = result.inner_iters
        self.loglik_trace_ = result.loglik_trace
        self.n_outer_ = result.n_outer
        self.converged_ = result.converged
        self.memory_mode_ = result.memory_mode
        self.strategies_ = result.strategies
        self.result_ = result
        return self

    def score(self, X, y=None) -> float:
        """Poisson log-likelihood of the fitted model on ``X``."""
        self._check_fitted()
        return poisson_loglik(as_alto_tensor(X), self.model_)

    def predict(self, coords) -> np.ndarray:
        self._check_fitted()
        return self.model_.values_at(np.asarray(coords))

    def _check_fitted(self):
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")
