"""Projection-stage operators: conditional mean embeddings of treatment and outcome given the anchor.

``ProjectionOperatorX`` is the ridge estimate of ``z -> E[psi(X) | Z = z]``;
its value at ``z`` is represented by a weight vector ``w(z)`` over the
stage-1 treatment samples, ``sum_i w(z)_i k_X(x_i, .)``.
``ProjectionOperatorY`` is a plain kernel ridge regression of ``y`` on ``z``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError
from .kernels import KernelSpec, as_points, gram, ridge_solve


def _check_reg(name: str, value: float) -> None:
    if not (np.isfinite(value) and value > 0):
        raise InvalidInputError(f"{name} must be positive, got {value}")


@dataclass(frozen=True, eq=False)
class ProjectionOperatorX:
    anchors: np.ndarray
    inputs: np.ndarray
    solve_matrix: np.ndarray  # (K_ZZ + n alpha I)^{-1}
    kernel_z: KernelSpec
    kernel_x: KernelSpec
    alpha: float
    gram_xx: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.anchors.shape[0]

    def weights(self, z) -> np.ndarray:
        """Coefficient matrix ``(n, m)``: column ``l`` is ``w(z_l)``."""
        return self.solve_matrix @ gram(self.kernel_z, self.anchors, z)


@dataclass(frozen=True, eq=False)
class ProjectionOperatorY:
    anchors: np.ndarray
    outputs: np.ndarray
    dual_weights: np.ndarray
    kernel_z: KernelSpec
    alpha: float
    solve_matrix: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.anchors.shape[0]

    def predict(self, z) -> np.ndarray:
        return gram(self.kernel_z, z, self.anchors) @ self.dual_weights


def fit_projection_x(x, z, alpha: float, kernel_x: KernelSpec, kernel_z: KernelSpec) -> ProjectionOperatorX:
    x = as_points(x)
    z = as_points(z)
    if x.shape[0] != z.shape[0]:
        raise InvalidInputError(f"x has {x.shape[0]} rows, z has {z.shape[0]}")
    _check_reg("alpha", alpha)
    n = z.shape[0]
    K_zz = gram(kernel_z, z, z)
    W = ridge_solve(K_zz, n * alpha, np.eye(n))
    W = 0.5 * (W + W.T)
    return ProjectionOperatorX(z, x, W, kernel_z, kernel_x, alpha, gram(kernel_x, x, x))


def project_x(op: ProjectionOperatorX, z) -> np.ndarray:
    """``w(z)`` for a single anchor point (length ``n``)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("anchor point must be finite")
    return op.weights(z[None, :])[:, 0]


def fit_projection_y(y, z, alpha: float, kernel_z: KernelSpec) -> ProjectionOperatorY:
    z = as_points(z)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != z.shape[0]:
        raise InvalidInputError(f"y has {y.shape[0]} rows, z has {z.shape[0]}")
    _check_reg("alpha", alpha)
    n = z.shape[0]
    beta = ridge_solve(gram(kernel_z, z, z), n * alpha, y)
    return ProjectionOperatorY(z, y, beta, kernel_z, alpha)


def fit_projections_joint(x, y, z, alpha: float, kernel_x: KernelSpec, kernel_z: KernelSpec):
    """Both projections over one anchor set, sharing a single ridge solve."""
    proj_x = fit_projection_x(x, z, alpha, kernel_x, kernel_z)
    y = np.asarray(y, dtype=float).ravel()
    if y.shape[0] != proj_x.n:
        raise InvalidInputError(f"y has {y.shape[0]} rows, z has {proj_x.n}")
    proj_y = ProjectionOperatorY(
        proj_x.anchors, y, proj_x.solve_matrix @ y, kernel_z, alpha, solve_matrix=proj_x.solve_matrix
    )
    return proj_x, proj_y


def transformed_gram(x3, weights: np.ndarray, gamma: float, proj_x: ProjectionOperatorX) -> np.ndarray:
    """Gram matrix of ``psi(x_l) + (sqrt(gamma) - 1) E_X phi(z_l)``.

    ``weights`` is ``(n1, m)`` with column ``l`` equal to ``w(z_l)``.
    """
    x3 = as_points(x3)
    weights = np.asarray(weights, dtype=float)
    if weights.ndim != 2 or weights.shape != (proj_x.n, x3.shape[0]):
        raise InvalidInputError(f"weights must be ({proj_x.n}, {x3.shape[0]}), got {weights.shape}")
    K33 = gram(proj_x.kernel_x, x3, x3)
    s = np.sqrt(gamma) - 1.0
    if s == 0.0:
        return K33
    cross = weights.T @ gram(proj_x.kernel_x, proj_x.inputs, x3)  # (l, l') = w_l . k_X(X1, x_l')
    K = K33 + s * (cross + cross.T) + s * s * (weights.T @ proj_x.gram_xx @ weights)
    return 0.5 * (K + K.T)
