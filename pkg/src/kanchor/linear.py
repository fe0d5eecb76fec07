"""Linear anchor regression family: OLS, 2SLS, partialling out and anchor(gamma)."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import IllConditionedError, InvalidInputError

METHODS = ("ols", "iv_2sls", "pa", "anchor")


def _lstsq(A: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    coef, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < A.shape[1]:
        raise IllConditionedError(f"{what} is rank deficient (rank {rank} < {A.shape[1]})")
    return coef


def anchor_basis(Z: np.ndarray) -> np.ndarray:
    """Orthonormal basis ``Q`` of the centered anchors, so that ``P v = Q (Q' v)``."""
    Zc = Z - Z.mean(axis=0)
    Q, R = np.linalg.qr(Zc)
    if np.linalg.matrix_rank(R) < Zc.shape[1]:
        raise IllConditionedError("anchor matrix is rank deficient")
    return Q


class LinearAnchorRegression(RegressorMixin, BaseEstimator):
    """Linear regression of ``y`` on ``X`` with anchors ``Z``; always fits an intercept.

    ``method="anchor"`` minimizes ``|(I - P)(y - Xb)|^2 + gamma |P(y - Xb)|^2``
    with ``P`` the projection onto the (intercept-augmented) anchors, by OLS
    on ``(I - P) v + sqrt(gamma) P v`` applied to ``X`` and ``y``.
    ``"ols"`` is ``gamma = 1`` and ``"pa"`` is ``gamma = 0``; ``"iv_2sls"`` is
    classical two-stage least squares with ``Z`` as instruments.
    """

    def __init__(self, method="anchor", gamma=2.0):
        self.method = method
        self.gamma = gamma

    def _effective_gamma(self) -> float:
        if self.method == "ols":
            return 1.0
        if self.method == "pa":
            return 0.0
        if self.gamma < 0:
            raise InvalidInputError(f"gamma must be nonnegative, got {self.gamma}")
        return float(self.gamma)

    def fit(self, X, y, Z=None):
        if self.method not in METHODS:
            raise InvalidInputError(f"unknown method {self.method!r}; expected one of {METHODS}")
        X, y = check_X_y(X, y, y_numeric=True)
        self.n_features_in_ = X.shape[1]
        if X.shape[0] <= X.shape[1] + 1:
            raise InvalidInputError(f"need more than {X.shape[1] + 1} samples, got {X.shape[0]}")
        if self.method == "ols":
            A = np.column_stack([np.ones(len(y)), X])
            coef = _lstsq(A, y, "regressor matrix")
            self.intercept_, self.coef_ = float(coef[0]), coef[1:]
            return self
        if Z is None:
            raise InvalidInputError(f"method {self.method!r} needs anchors")
        Z = check_array(np.asarray(Z, dtype=float).reshape(len(y), -1))

        if self.method == "iv_2sls":
            ones = np.ones((len(y), 1))
            A = np.hstack([ones, X])
            B = np.hstack([ones, Z])
            first = _lstsq(B, A, "instrument matrix")
            A_hat = B @ first
            # A_hat' A_hat = A_hat' A, so this is the 2SLS estimator
            coef = _lstsq(A_hat, y, "first-stage fitted regressors")
            self.intercept_, self.coef_ = float(coef[0]), coef[1:]
            return self

        gamma = self._effective_gamma()
        Q = anchor_basis(Z)
        x_mean, y_mean = X.mean(axis=0), y.mean()
        Xc, yc = X - x_mean, y - y_mean
        s = np.sqrt(gamma) - 1.0
        Xt = Xc + s * (Q @ (Q.T @ Xc))
        yt = yc + s * (Q @ (Q.T @ yc))
        self.coef_ = _lstsq(Xt, yt, "transformed regressor matrix")
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        return self

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_ + self.intercept_


def fit_linear(data, method="anchor", gamma=2.0) -> LinearAnchorRegression:
    return LinearAnchorRegression(method, gamma).fit(data.x, data.y, data.z)
