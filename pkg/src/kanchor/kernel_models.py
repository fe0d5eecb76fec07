"""Kernel anchor regression and its kernel baselines as scikit-learn estimators.

All estimators take the anchor as a third ``fit`` argument::

    KernelAnchorRegression(gamma=2.0, random_state=0).fit(X, y, Z).predict(X_grid)

Every fit randomly partitions the sample into a projection part and a
regression part.  The outcome is centered by the mean of the regression
subset (``intercept_``) and that mean is added back at prediction time.
Predictions evaluate the fitted operator on the canonical feature
``k_X(x, .)``:

    f(x) = c + sum_l beta_l [k_X(x_l, x) + (sqrt(gamma) - 1) w_l . k_X(X_1, x)]
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import InvalidInputError
from .kernels import KernelSpec, gram, median_heuristic, ridge_solve
from .projection import (
    ProjectionOperatorX,
    ProjectionOperatorY,
    fit_projection_x,
    fit_projection_y,
    fit_projections_joint,
    transformed_gram,
)
from .splitting import proportional_sizes, random_split

GAMMA_CAP = 1e6
# N=700 split as 250/250/200 (three-stage) and 500/200 (two-stage)
DEFAULT_SPLIT_3 = (250, 250, 200)
DEFAULT_SPLIT_2 = (500, 200)
NO_SPLIT = "none"


def _validate(est, X, y, Z):
    X, y = check_X_y(X, y, y_numeric=True)
    Z = check_array(np.asarray(Z, dtype=float).reshape(len(y), -1))
    est.n_features_in_ = X.shape[1]
    return X, y, Z


def _resolve_sizes(split, n: int, default) -> tuple[int, ...]:
    if split is None:
        return proportional_sizes(n, default)
    sizes = tuple(int(s) for s in split)
    if len(sizes) != len(default):
        raise InvalidInputError(f"expected {len(default)} split sizes, got {sizes}")
    if sum(sizes) != n:
        raise InvalidInputError(f"split sizes {sizes} sum to {sum(sizes)}, data has {n} rows")
    if min(sizes) < 1:
        raise InvalidInputError(f"split sizes must be positive, got {sizes}")
    return sizes


def _kernel(family: str, bandwidth, points) -> KernelSpec:
    if family == "linear":
        return KernelSpec("linear")
    return KernelSpec("gaussian", float(bandwidth) if bandwidth is not None else median_heuristic(points))


def _clip_gamma(gamma: float) -> float:
    if gamma < 0 or not np.isfinite(gamma):
        raise InvalidInputError(f"gamma must be finite and nonnegative, got {gamma}")
    if gamma > GAMMA_CAP:
        warnings.warn(f"gamma={gamma:g} capped at {GAMMA_CAP:g}; use KernelIV for the IV limit")
        return GAMMA_CAP
    return float(gamma)


def _reg(explicit, const: float, size: int) -> float:
    value = float(explicit) if explicit is not None else const * size**-0.5
    if not (np.isfinite(value) and value > 0):
        raise InvalidInputError(f"regularizer must be positive, got {value}")
    return value


@dataclass(frozen=True)
class StageSizes:
    projection_x: int
    projection_y: int
    regression: int


class _KernelRegressionStage(RegressorMixin, BaseEstimator):
    """Shared regression stage over transformed samples."""

    def _solve_stage3(self, X3, y3c, weights, gamma, proj_x, proj_y_values, xi):
        s = np.sqrt(gamma) - 1.0
        y_hat = y3c + s * proj_y_values
        K = transformed_gram(X3, weights, gamma, proj_x)
        m = X3.shape[0]
        beta = ridge_solve(K, m * xi, y_hat)
        self.gamma_ = gamma
        self.transformed_outputs_ = y_hat
        self.transformed_gram_ = K
        self.dual_coef_ = beta
        self.weights_ = weights
        self.X_fit_ = X3
        self.projection_x_ = proj_x
        self.kernel_x_ = proj_x.kernel_x
        self.xi_ = xi
        # sum_l beta_l (sqrt(gamma)-1) w_l, the coefficient on k_X(X_1, x)
        self.projected_coef_ = s * (weights @ beta) if s != 0.0 else None
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "dual_coef_")
        X = check_array(X)
        out = gram(self.kernel_x_, X, self.X_fit_) @ self.dual_coef_
        if self.projected_coef_ is not None:
            out = out + gram(self.kernel_x_, X, self.projection_x_.inputs) @ self.projected_coef_
        return out + self.intercept_


class KernelAnchorRegression(_KernelRegressionStage):
    """Three-stage kernel anchor regression (disjoint projection samples).

    Parameters
    ----------
    gamma : float
        Anchor strength. ``0`` is partialling out, ``1`` is plain kernel ridge.
    split : (n1, n2, m) or None
        Sizes of the treatment-projection, outcome-projection and regression
        subsets; ``None`` scales 250/250/200 to the sample size.  ``"none"``
        reuses every sample in all three stages (for oracle tests only).
    alpha1, alpha2, xi : float or None
        Ridge parameters; ``None`` means ``const * size ** -0.5``.
    kernel : {"gaussian", "linear"}
    bandwidth_x, bandwidth_z : float or None
        ``None`` applies the median heuristic: anchors of the treatment
        projection subset for ``k_Z``, treatments of the treatment-projection
        and regression subsets for ``k_X``.
    """

    def __init__(self, gamma=2.0, split=None, alpha1=None, alpha2=None, xi=None,
                 alpha_const=1.5, xi_const=1.5, kernel="gaussian",
                 bandwidth_x=None, bandwidth_z=None, random_state=None):
        self.gamma = gamma
        self.split = split
        self.alpha1 = alpha1
        self.alpha2 = alpha2
        self.xi = xi
        self.alpha_const = alpha_const
        self.xi_const = xi_const
        self.kernel = kernel
        self.bandwidth_x = bandwidth_x
        self.bandwidth_z = bandwidth_z
        self.random_state = random_state

    def _gamma(self) -> float:
        return _clip_gamma(self.gamma)

    def _partition(self, n):
        if isinstance(self.split, str):
            if self.split != NO_SPLIT:
                raise InvalidInputError(f"unknown split mode {self.split!r}")
            every = np.arange(n)
            return every, every, every
        return random_split(n, _resolve_sizes(self.split, n, DEFAULT_SPLIT_3), self.random_state)

    def fit(self, X, y, Z):
        X, y, Z = _validate(self, X, y, Z)
        gamma = self._gamma()
        i1, i2, i3 = self._partition(len(y))
        kz = _kernel(self.kernel, self.bandwidth_z, Z[i1])
        kx = _kernel(self.kernel, self.bandwidth_x, np.vstack([X[i1], X[i3]]))
        alpha1 = _reg(self.alpha1, self.alpha_const, len(i1))
        alpha2 = _reg(self.alpha2, self.alpha_const, len(i2))
        xi = _reg(self.xi, self.xi_const, len(i3))

        self.intercept_ = float(np.mean(y[i3]))
        self.split_indices_ = (i1, i2, i3)
        self.stage_sizes_ = StageSizes(len(i1), len(i2), len(i3))
        self.alpha1_, self.alpha2_ = alpha1, alpha2

        proj_x = fit_projection_x(X[i1], Z[i1], alpha1, kx, kz)
        proj_y = fit_projection_y(y[i2] - self.intercept_, Z[i2], alpha2, kz)
        self.projection_y_ = proj_y
        weights = proj_x.weights(Z[i3])
        return self._solve_stage3(X[i3], y[i3] - self.intercept_, weights, gamma,
                                  proj_x, proj_y.predict(Z[i3]), xi)


class KernelPartiallingOut(KernelAnchorRegression):
    """Kernel anchor regression with ``gamma = 0``."""

    def __init__(self, split=None, alpha1=None, alpha2=None, xi=None, alpha_const=1.5,
                 xi_const=1.5, kernel="gaussian", bandwidth_x=None, bandwidth_z=None,
                 random_state=None):
        super().__init__(0.0, split, alpha1, alpha2, xi, alpha_const, xi_const, kernel,
                         bandwidth_x, bandwidth_z, random_state)

    def _gamma(self) -> float:
        return 0.0


class KernelRidgeBaseline(KernelAnchorRegression):
    """Kernel ridge regression of ``y`` on ``x`` over the regression subset.

    Uses the same partition and bandwidth rule as the three-stage estimator,
    so it coincides with ``gamma = 1``; the projection subsets only inform
    the ``k_X`` bandwidth.
    """

    def __init__(self, split=None, xi=None, xi_const=1.5, kernel="gaussian",
                 bandwidth_x=None, random_state=None):
        self.split = split
        self.xi = xi
        self.xi_const = xi_const
        self.kernel = kernel
        self.bandwidth_x = bandwidth_x
        self.random_state = random_state

    def fit(self, X, y, Z):
        X, y, Z = _validate(self, X, y, Z)
        i1, i2, i3 = self._partition(len(y))
        kx = _kernel(self.kernel, self.bandwidth_x, np.vstack([X[i1], X[i3]]))
        xi = _reg(self.xi, self.xi_const, len(i3))
        self.intercept_ = float(np.mean(y[i3]))
        self.split_indices_ = (i1, i2, i3)
        self.stage_sizes_ = StageSizes(len(i1), len(i2), len(i3))
        self.kernel_x_ = kx
        self.X_fit_ = X[i3]
        self.xi_ = xi
        self.gamma_ = 1.0
        self.dual_coef_ = ridge_solve(gram(kx, X[i3], X[i3]), len(i3) * xi, y[i3] - self.intercept_)
        self.projected_coef_ = None
        return self


class TwoStageKernelAnchorRegression(_KernelRegressionStage):
    """Kernel anchor regression with both projections on one shared subset.

    ``split`` is ``(n, m)``; ``None`` scales 500/200 to the sample size.
    """

    def __init__(self, gamma=2.0, split=None, alpha=None, xi=None, alpha_const=1.5,
                 xi_const=1.5, kernel="gaussian", bandwidth_x=None, bandwidth_z=None,
                 random_state=None):
        self.gamma = gamma
        self.split = split
        self.alpha = alpha
        self.xi = xi
        self.alpha_const = alpha_const
        self.xi_const = xi_const
        self.kernel = kernel
        self.bandwidth_x = bandwidth_x
        self.bandwidth_z = bandwidth_z
        self.random_state = random_state

    def _partition(self, n):
        if isinstance(self.split, str):
            if self.split != NO_SPLIT:
                raise InvalidInputError(f"unknown split mode {self.split!r}")
            every = np.arange(n)
            return every, every
        return random_split(n, _resolve_sizes(self.split, n, DEFAULT_SPLIT_2), self.random_state)

    def fit(self, X, y, Z):
        X, y, Z = _validate(self, X, y, Z)
        gamma = _clip_gamma(self.gamma)
        i1, i3 = self._partition(len(y))
        kz = _kernel(self.kernel, self.bandwidth_z, Z[i1])
        kx = _kernel(self.kernel, self.bandwidth_x, np.vstack([X[i1], X[i3]]))
        alpha = _reg(self.alpha, self.alpha_const, len(i1))
        xi = _reg(self.xi, self.xi_const, len(i3))

        self.intercept_ = float(np.mean(y[i3]))
        self.split_indices_ = (i1, i3)
        self.stage_sizes_ = StageSizes(len(i1), len(i1), len(i3))
        self.alpha_ = alpha
        proj_x, proj_y = fit_projections_joint(X[i1], y[i1] - self.intercept_, Z[i1], alpha, kx, kz)
        self.projection_y_ = proj_y
        weights = proj_x.weights(Z[i3])
        return self._solve_stage3(X[i3], y[i3] - self.intercept_, weights, gamma,
                                  proj_x, proj_y.predict(Z[i3]), xi)


class KernelIV(RegressorMixin, BaseEstimator):
    """Kernel instrumental variable regression.

    Stage 1 estimates ``mu(z) = E[psi(X) | Z = z]``; stage 2 is a kernel ridge
    regression of ``y`` on ``mu(z_l)`` in the treatment RKHS.
    ``split`` is ``(n1, m)``; ``None`` scales 500/200 to the sample size.
    """

    def __init__(self, split=None, alpha1=None, xi=None, alpha_const=1.5, xi_const=1.5,
                 kernel="gaussian", bandwidth_x=None, bandwidth_z=None, random_state=None):
        self.split = split
        self.alpha1 = alpha1
        self.xi = xi
        self.alpha_const = alpha_const
        self.xi_const = xi_const
        self.kernel = kernel
        self.bandwidth_x = bandwidth_x
        self.bandwidth_z = bandwidth_z
        self.random_state = random_state

    def fit(self, X, y, Z):
        X, y, Z = _validate(self, X, y, Z)
        i1, i3 = random_split(len(y), _resolve_sizes(self.split, len(y), DEFAULT_SPLIT_2),
                              self.random_state)
        kz = _kernel(self.kernel, self.bandwidth_z, Z[i1])
        kx = _kernel(self.kernel, self.bandwidth_x, np.vstack([X[i1], X[i3]]))
        alpha1 = _reg(self.alpha1, self.alpha_const, len(i1))
        xi = _reg(self.xi, self.xi_const, len(i3))

        self.intercept_ = float(np.mean(y[i3]))
        self.split_indices_ = (i1, i3)
        proj_x = fit_projection_x(X[i1], Z[i1], alpha1, kx, kz)
        W = proj_x.weights(Z[i3])
        K_mu = W.T @ proj_x.gram_xx @ W
        K_mu = 0.5 * (K_mu + K_mu.T)
        beta = ridge_solve(K_mu, len(i3) * xi, y[i3] - self.intercept_)
        self.projection_x_ = proj_x
        self.kernel_x_ = kx
        self.weights_ = W
        self.dual_coef_ = beta
        self.alpha1_, self.xi_ = alpha1, xi
        self.projected_coef_ = W @ beta
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "dual_coef_")
        X = check_array(X)
        return gram(self.kernel_x_, X, self.projection_x_.inputs) @ self.projected_coef_ + self.intercept_


# functional entry points over Dataset --------------------------------------


def fit_kar(data, split=None, gamma=2.0, alpha1=None, alpha2=None, xi=None, kernel="gaussian",
            seed=None, **kw) -> KernelAnchorRegression:
    return KernelAnchorRegression(gamma, split, alpha1, alpha2, xi, kernel=kernel,
                                  random_state=seed, **kw).fit(data.x, data.y, data.z)


def fit_kar2(data, split=None, gamma=2.0, alpha=None, xi=None, kernel="gaussian",
             seed=None, **kw) -> TwoStageKernelAnchorRegression:
    return TwoStageKernelAnchorRegression(gamma, split, alpha, xi, kernel=kernel,
                                          random_state=seed, **kw).fit(data.x, data.y, data.z)


def fit_kpa(data, split=None, alpha1=None, alpha2=None, xi=None, kernel="gaussian",
            seed=None, **kw) -> KernelPartiallingOut:
    return KernelPartiallingOut(split, alpha1, alpha2, xi, kernel=kernel,
                                random_state=seed, **kw).fit(data.x, data.y, data.z)


def fit_kreg(data, split=None, xi=None, kernel="gaussian", seed=None, **kw) -> KernelRidgeBaseline:
    return KernelRidgeBaseline(split, xi, kernel=kernel, random_state=seed, **kw).fit(
        data.x, data.y, data.z)


def fit_kiv(data, split=None, alpha1=None, xi=None, kernel="gaussian", seed=None, **kw) -> KernelIV:
    return KernelIV(split, alpha1, xi, kernel=kernel, random_state=seed, **kw).fit(
        data.x, data.y, data.z)


def predict(model, x) -> np.ndarray:
    """Evaluate a fitted model; a 1-D ``x`` is a batch of scalar points when the
    model was fitted on scalar treatments and a single point otherwise."""
    x = np.asarray(x, dtype=float)
    if x.ndim < 2:
        x = x.reshape(-1, 1) if model.n_features_in_ == 1 else x.reshape(1, -1)
    return model.predict(x)


__all__ = [
    "KernelAnchorRegression",
    "TwoStageKernelAnchorRegression",
    "KernelPartiallingOut",
    "KernelRidgeBaseline",
    "KernelIV",
    "ProjectionOperatorX",
    "ProjectionOperatorY",
    "fit_kar",
    "fit_kar2",
    "fit_kpa",
    "fit_kreg",
    "fit_kiv",
    "predict",
]
