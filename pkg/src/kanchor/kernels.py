"""Kernels, bandwidth selection, Gram matrices and the shared regularized solve.

Every estimator in the package reduces to Gram matrices of two kernels
(one on treatments, one on anchors) and symmetric ridge systems of the form
``(K + s I) S = B``.  Those two primitives live here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from .exceptions import DegenerateBandwidthError, IllConditionedError, InvalidInputError

JITTER_BASE = 1e-10
JITTER_ESCALATIONS = 3

# above this many 1-D points the exact sorted-order median is used instead of pdist
_PDIST_LIMIT = 3000


def as_points(a) -> np.ndarray:
    """Coerce scalars, 1-D sequences or 2-D arrays to an ``(n, d)`` float array."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr[:, None]
    if arr.ndim != 2:
        raise InvalidInputError(f"points must be at most 2-D, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus bandwidth.

    The Gaussian convention is ``exp(-|x - x'|^2 / (2 sigma^2))``; the
    bandwidth is ignored by the linear (dot product) kernel.
    """

    family: Literal["gaussian", "linear"] = "gaussian"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.family not in ("gaussian", "linear"):
            raise InvalidInputError(f"unknown kernel family {self.family!r}")
        if self.family == "gaussian" and not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InvalidInputError(f"gaussian bandwidth must be positive, got {self.bandwidth}")

    def __call__(self, a, b=None) -> np.ndarray:
        return gram(self, a, a if b is None else b)


def kernel_eval(spec: KernelSpec, x, x_prime) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    if x.shape != x_prime.shape or x.ndim != 1:
        raise InvalidInputError(f"point dimensions differ: {x.shape} vs {x_prime.shape}")
    if spec.family == "linear":
        return float(x @ x_prime)
    sq = float(np.sum((x - x_prime) ** 2))
    return math.exp(-sq / (2.0 * spec.bandwidth**2))


def gram(spec: KernelSpec, a, b) -> np.ndarray:
    """Matrix of ``kernel_eval(spec, a_i, b_j)``."""
    a = as_points(a)
    b = as_points(b)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise InvalidInputError("gram needs nonempty point sets")
    if a.shape[1] != b.shape[1]:
        raise InvalidInputError(f"point dimensions differ: {a.shape[1]} vs {b.shape[1]}")
    if spec.family == "linear":
        return a @ b.T
    if a is b or (a.shape == b.shape and np.array_equal(a, b)):
        sq = cdist(a, a, "sqeuclidean")
        # exact symmetry regardless of cdist rounding
        sq = 0.5 * (sq + sq.T)
    else:
        sq = cdist(a, b, "sqeuclidean")
    return np.exp(-sq / (2.0 * spec.bandwidth**2))


def _median_pairwise_1d(x: np.ndarray) -> float:
    """Lower median of ``|x_i - x_j|`` over i < j without materializing the pairs."""
    x = np.sort(x)
    n = x.size
    total = n * (n - 1) // 2
    k = (total + 1) // 2  # rank of the lower median, 1-based

    def count_le(d: float) -> int:
        # pairs (i, j), i < j, with x_j - x_i <= d
        j = np.searchsorted(x, x + d, side="right")
        return int(np.sum(j - np.arange(n) - 1))

    lo, hi = 0.0, float(x[-1] - x[0])
    if count_le(lo) >= k:
        return 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if count_le(mid) >= k:
            hi = mid
        else:
            lo = mid
    # answer is the smallest pairwise distance strictly above lo
    j = np.searchsorted(x, x + lo, side="right")
    valid = j < n
    return float(np.min(x[j[valid]] - x[valid]))


def median_heuristic(points) -> float:
    """Median pairwise Euclidean distance over distinct unordered pairs.

    For an even number of pairs the lower of the two middle values is used.
    """
    pts = as_points(points)
    if pts.shape[0] < 2:
        raise InvalidInputError("median heuristic needs at least 2 points")
    if pts.shape[1] == 1 and pts.shape[0] > _PDIST_LIMIT:
        sigma = _median_pairwise_1d(pts[:, 0])
        if sigma == 0.0 and np.ptp(pts[:, 0]) == 0.0:
            raise DegenerateBandwidthError("all points are identical")
    else:
        d = np.sort(pdist(pts))
        if d[-1] == 0.0:
            raise DegenerateBandwidthError("all points are identical")
        sigma = float(d[(d.size - 1) // 2])
    if sigma <= 0.0:
        raise DegenerateBandwidthError("median pairwise distance is zero")
    return sigma


def ridge_solve(K: np.ndarray, scale: float, rhs: np.ndarray) -> np.ndarray:
    """Solve ``(K + scale I) S = rhs`` by Cholesky.

    A failed factorization is retried with extra diagonal jitter starting at
    ``1e-10 * trace(K) / n`` and growing tenfold, at most three times.
    """
    K = np.asarray(K, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise InvalidInputError(f"K must be square, got {K.shape}")
    if scale < 0 or not np.isfinite(scale):
        raise InvalidInputError(f"scale must be a finite nonnegative number, got {scale}")
    n = K.shape[0]
    if rhs.shape[0] != n:
        raise InvalidInputError(f"rhs has {rhs.shape[0]} rows, K has {n}")

    jitter = JITTER_BASE * abs(np.trace(K)) / n
    extra = 0.0
    for attempt in range(JITTER_ESCALATIONS + 1):
        A = K + (scale + extra) * np.eye(n)
        try:
            factor = linalg.cho_factor(A, lower=True, check_finite=True)
        except linalg.LinAlgError:
            if jitter == 0.0:
                break
            extra = jitter * 10.0**attempt
            continue
        return linalg.cho_solve(factor, rhs)
    raise IllConditionedError(
        f"system of size {n} not positive definite after {JITTER_ESCALATIONS} jitter escalations"
    )


class TaylorGaussianRidge:
    """Exact Gaussian kernel ridge regression for large 1-D samples.

    Uses the expansion ``k(u, u') = e^{-u^2/2s^2} e^{-u'^2/2s^2} sum_k (uu'/s^2)^k / k!``
    (``u`` centered on the sample midrange) truncated where the remainder is
    below double precision, so ``K = F F^T`` with a thin ``F`` and the ridge
    system is solved in feature space via the push-through identity.
    """

    def __init__(self, bandwidth: float, scale: float, tol: float = 1e-16, max_terms: int = 200):
        self.bandwidth = bandwidth
        self.scale = scale
        self.tol = tol
        self.max_terms = max_terms

    def _features(self, x: np.ndarray) -> np.ndarray:
        t = (np.asarray(x, dtype=float).ravel() - self.center_) / self.bandwidth
        k = np.arange(self.n_terms_)
        log_fact = np.array([math.lgamma(i + 1) for i in k])
        with np.errstate(divide="ignore", invalid="ignore"):
            logabs = k[None, :] * np.log(np.abs(t))[:, None] - 0.5 * log_fact[None, :]
        powers = np.where(k[None, :] == 0, 1.0, np.sign(t)[:, None] ** k[None, :] * np.exp(logabs))
        return np.exp(-0.5 * t**2)[:, None] * powers

    def fit(self, x, y):
        x = np.asarray(x, dtype=float).ravel()
        y = np.asarray(y, dtype=float).ravel()
        self.center_ = 0.5 * (x.min() + x.max())
        # one bandwidth of margin so predictions just outside the sample stay exact
        tmax = (0.5 * np.ptp(x) / self.bandwidth + 1.0) ** 2
        terms = 1
        # remainder of exp(t) after `terms` terms, bounded by t^K/K! * e^t
        while terms < self.max_terms:
            log_rem = terms * math.log(max(tmax, 1e-300)) - math.lgamma(terms + 1) + tmax
            if log_rem < math.log(self.tol):
                break
            terms += 1
        self.n_terms_ = terms
        F = self._features(x)
        coef = ridge_solve(F.T @ F, self.scale, F.T @ y)
        self.coef_ = coef
        return self

    def predict(self, x) -> np.ndarray:
        return self._features(x) @ self.coef_
