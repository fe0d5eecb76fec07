"""Synthetic structural-equation laboratories.

Two kinds of generator live here:

* the nonlinear benchmark designs (``main``, ``kiv``, ``variant``) driven by a
  correlated Gaussian triple ``(C, V, W)``, with their interventional truth
  ``E[Y | do(x)]``;
* finite-dimensional linear SEMs (``SemSpec``) in which every operator is a
  matrix, so the population anchor-regression target and its bias have
  closed forms.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.stats import norm

from .data import Dataset
from .exceptions import IllConditionedError, InvalidInputError, SemSpecParseError


def structural_effect(x) -> np.ndarray:
    """``ln(|16x - 8| + 1) * sgn(x - 0.5)``, with ``sgn(0) = 0``."""
    x = np.asarray(x, dtype=float)
    return np.log(np.abs(16.0 * x - 8.0) + 1.0) * np.sign(x - 0.5)


@dataclass(frozen=True)
class GeneratorDesign:
    tag: Literal["main", "kiv", "variant"]
    noise_cov: tuple
    coef_c: float
    coef_z: float

    def __post_init__(self):
        cov = np.asarray(self.noise_cov, dtype=float)
        if cov.shape != (3, 3) or not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() <= 0:
            raise InvalidInputError("noise covariance of (C, V, W) must be a 3x3 SPD matrix")

    @property
    def anchor_mean(self) -> float:
        """``E[Z]`` under the design, used by the do-truth."""
        if self.tag == "main":
            return 0.0
        if self.tag == "variant":
            # F(|W|) is uniform on [0.5, 1]
            return 0.25
        return 0.5


MAIN = GeneratorDesign("main", ((1.0, 0.3, 0.2), (0.3, 1.0, 0.0), (0.2, 0.0, 1.0)), 0.75, -0.25)
KIV = GeneratorDesign("kiv", ((1.0, 0.5, 0.0), (0.5, 1.0, 0.0), (0.0, 0.0, 1.0)), 1.0, 0.0)
VARIANT = GeneratorDesign("variant", MAIN.noise_cov, 0.75, -0.25)
DESIGNS = {"main": MAIN, "kiv": KIV, "variant": VARIANT}


def get_design(design) -> GeneratorDesign:
    if isinstance(design, GeneratorDesign):
        return design
    try:
        return DESIGNS[design]
    except KeyError:
        raise InvalidInputError(f"unknown design {design!r}; expected one of {sorted(DESIGNS)}") from None


def generate(design, n: int, seed) -> Dataset:
    design = get_design(design)
    if n < 1:
        raise InvalidInputError(f"n must be positive, got {n}")
    rng = np.random.default_rng(seed)
    cvw = rng.multivariate_normal(np.zeros(3), np.asarray(design.noise_cov), size=n, method="cholesky")
    c, v, w = cvw.T
    if design.tag == "variant":
        x = norm.cdf((np.abs(w) + v) / np.sqrt(2.0))
        z = norm.cdf(np.abs(w)) - 0.5
    else:
        x = norm.cdf((w + v) / np.sqrt(2.0))
        z = norm.cdf(w) - (0.5 if design.tag == "main" else 0.0)
    y = design.coef_c * c + design.coef_z * z + structural_effect(x)
    return Dataset(x, y, z, latent=c, meta={"design": design.tag, "seed": seed})


def true_do(design, x) -> np.ndarray:
    """``E[Y | do(X = x)]`` with the anchor and confounder at their observational means."""
    design = get_design(design)
    return structural_effect(x) + design.coef_z * design.anchor_mean


# linear SEMs -----------------------------------------------------------------

_B_FIELDS = ("B_CZ", "B_XZ", "B_XC", "B_YZ", "B_YC", "B_YX")
_S_FIELDS = ("S_Z", "S_C", "S_X", "S_Y")


def _as_matrix(a) -> np.ndarray:
    return np.atleast_2d(np.asarray(a, dtype=float))


@dataclass(frozen=True, eq=False)
class SemSpec:
    """``C = B_CZ Z + e_C``, ``X = B_XZ Z + B_XC C + e_X``, ``Y = B_YZ Z + B_YC C + B_YX X + e_Y``.

    Covariances: ``S_Z`` of the anchor features, ``S_C, S_X, S_Y`` of the
    independent noises.  Dimensions are inferred from the covariances.
    """

    B_CZ: np.ndarray
    B_XZ: np.ndarray
    B_XC: np.ndarray
    B_YZ: np.ndarray
    B_YC: np.ndarray
    B_YX: np.ndarray
    S_Z: np.ndarray
    S_C: np.ndarray
    S_X: np.ndarray
    S_Y: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in _B_FIELDS + _S_FIELDS:
            value = getattr(self, name)
            if name == "S_Y" and value is None:
                value = np.eye(_as_matrix(self.B_YX).shape[0])
            object.__setattr__(self, name, _as_matrix(value))
        dz, dc, dx, dy = (self.S_Z.shape[0], self.S_C.shape[0], self.S_X.shape[0], self.S_Y.shape[0])
        expected = {
            "B_CZ": (dc, dz), "B_XZ": (dx, dz), "B_XC": (dx, dc),
            "B_YZ": (dy, dz), "B_YC": (dy, dc), "B_YX": (dy, dx),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise InvalidInputError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")
        for name in _S_FIELDS:
            S = getattr(self, name)
            if S.shape[0] != S.shape[1] or not np.allclose(S, S.T):
                raise InvalidInputError(f"{name} must be symmetric")
            if np.linalg.eigvalsh(S).min() <= 0:
                raise InvalidInputError(f"{name} must be positive definite")

    @property
    def dims(self) -> dict:
        return {"Z": self.S_Z.shape[0], "C": self.S_C.shape[0],
                "X": self.S_X.shape[0], "Y": self.S_Y.shape[0]}

    @property
    def x_anchor_effect(self) -> np.ndarray:
        """Total effect of the anchor on the treatment, ``B_XZ + B_XC B_CZ``."""
        return self.B_XZ + self.B_XC @ self.B_CZ

    @property
    def y_anchor_direct(self) -> np.ndarray:
        """Anchor effect on the outcome bypassing the treatment, ``B_YZ + B_YC B_CZ``."""
        return self.B_YZ + self.B_YC @ self.B_CZ

    def to_dict(self) -> dict:
        return {name: getattr(self, name).tolist() for name in _B_FIELDS + _S_FIELDS}

    @classmethod
    def from_dict(cls, raw: dict, source: str = "<dict>") -> "SemSpec":
        if not isinstance(raw, dict):
            raise SemSpecParseError(f"{source}: top level must be an object")
        values = {}
        for name in _B_FIELDS + _S_FIELDS:
            if name not in raw:
                if name == "S_Y":
                    continue
                raise SemSpecParseError(f"{source}: missing field {name!r}")
            try:
                values[name] = _as_matrix(raw[name])
            except (TypeError, ValueError) as exc:
                raise SemSpecParseError(f"{source}: field {name!r} is not a numeric matrix ({exc})") from None
        try:
            return cls(**values)
        except InvalidInputError as exc:
            raise SemSpecParseError(f"{source}: {exc}") from None

    @classmethod
    def from_json(cls, path) -> "SemSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SemSpecParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        return cls.from_dict(raw, str(path))


def generate_sem(spec: SemSpec, n: int, seed) -> Dataset:
    rng = np.random.default_rng(seed)
    d = spec.dims

    def draw(S, k):
        return rng.standard_normal((n, k)) @ np.linalg.cholesky(S).T

    z = draw(spec.S_Z, d["Z"])
    c = z @ spec.B_CZ.T + draw(spec.S_C, d["C"])
    x = z @ spec.B_XZ.T + c @ spec.B_XC.T + draw(spec.S_X, d["X"])
    y = z @ spec.B_YZ.T + c @ spec.B_YC.T + x @ spec.B_YX.T + draw(spec.S_Y, d["Y"])
    if d["Y"] != 1:
        raise InvalidInputError("Dataset holds a scalar outcome; use a spec with 1-D Y")
    return Dataset(x, y[:, 0], z, latent=c, meta={"seed": seed})


def _gram_terms(spec: SemSpec, gamma: float):
    A = spec.x_anchor_effect
    # covariance of the transformed treatment
    den = spec.B_XC @ spec.S_C @ spec.B_XC.T + spec.S_X + gamma * A @ spec.S_Z @ A.T
    return A, 0.5 * (den + den.T)


def _right_solve(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    """``num @ inv(den)`` for symmetric ``den``."""
    if np.linalg.cond(den) > 1e14:
        raise IllConditionedError("transformed treatment covariance is singular")
    return np.linalg.solve(den, num.T).T


def population_h_gamma(spec: SemSpec, gamma: float) -> np.ndarray:
    """Population anchor-regression operator ``E[Y_g psi_g'] E[psi_g psi_g']^{-1}``."""
    A, den = _gram_terms(spec, gamma)
    total_c = spec.B_YC + spec.B_YX @ spec.B_XC
    total_z = spec.y_anchor_direct + spec.B_YX @ A
    num = total_c @ spec.S_C @ spec.B_XC.T + spec.B_YX @ spec.S_X + gamma * total_z @ spec.S_Z @ A.T
    return _right_solve(num, den)


def confounding_covariances(spec: SemSpec) -> tuple[np.ndarray, np.ndarray]:
    """``(residual, anchor-explained)`` parts of the outcome/treatment covariance."""
    A = spec.x_anchor_effect
    residual = spec.B_YC @ spec.S_C @ spec.B_XC.T
    along = spec.y_anchor_direct @ spec.S_Z @ A.T
    return residual, along


def bias_operator(spec: SemSpec, gamma: float) -> np.ndarray:
    """``H^gamma - B_YX`` from the residual/anchor-explained decomposition."""
    _, den = _gram_terms(spec, gamma)
    residual, along = confounding_covariances(spec)
    return _right_solve(residual + gamma * along, den)


def bias_operator_limit(spec: SemSpec) -> np.ndarray:
    """``lim_{gamma -> inf}`` of :func:`bias_operator`; needs a full-rank anchor effect on X."""
    A = spec.x_anchor_effect
    _, along = confounding_covariances(spec)
    return _right_solve(along, A @ spec.S_Z @ A.T)


def bias_norm(spec: SemSpec, gamma: float) -> float:
    """Frobenius norm of the bias; ``gamma = inf`` uses the limit."""
    B = bias_operator_limit(spec) if np.isinf(gamma) else bias_operator(spec, gamma)
    return float(np.linalg.norm(B))


# identifiability cases -----------------------------------------------------

CASES = ("thm3-i", "thm3-ii", "thm3-iii", "thm3-iv", "appendix-iv")


def _spd(rng, k: int) -> np.ndarray:
    M = rng.standard_normal((k, k))
    return M @ M.T / k + 0.5 * np.eye(k)


def random_spec(rng, dims=None, **overrides) -> SemSpec:
    """Random conforming spec; ``dims`` maps Z, C, X, Y to sizes (Y defaults to 1)."""
    dims = {"Z": 3, "C": 2, "X": 2, "Y": 1, **(dims or {})}
    dz, dc, dx, dy = dims["Z"], dims["C"], dims["X"], dims["Y"]
    parts = {
        "B_CZ": rng.standard_normal((dc, dz)),
        "B_XZ": rng.standard_normal((dx, dz)),
        "B_XC": rng.standard_normal((dx, dc)),
        "B_YZ": rng.standard_normal((dy, dz)),
        "B_YC": rng.standard_normal((dy, dc)),
        "B_YX": rng.standard_normal((dy, dx)),
        "S_Z": _spd(rng, dz),
        "S_C": _spd(rng, dc),
        "S_X": _spd(rng, dx),
        "S_Y": _spd(rng, dy),
    }
    parts.update(overrides)
    return SemSpec(**parts)


def case_spec(case: str, rng, a: float = 0.5, dims=None) -> tuple[SemSpec, float]:
    """Random spec satisfying an identifiability case, with the case's gamma.

    The anchor dimension is kept at least the treatment dimension so the
    anchor-explained treatment covariance is invertible.
    """
    base = random_spec(rng, dims)
    if case == "thm3-i":
        return SemSpec(**{**_fields(base), "B_YC": np.zeros_like(base.B_YC)}), 0.0
    if case == "thm3-ii":
        # B_YZ = -B_YC B_CZ removes every anchor path to Y that avoids X
        return SemSpec(**{**_fields(base), "B_YZ": -base.B_YC @ base.B_CZ}), 1e8
    if case == "thm3-iii":
        fields = {**_fields(base), "B_YC": np.zeros_like(base.B_YC), "B_YZ": np.zeros_like(base.B_YZ)}
        return SemSpec(**fields), float(rng.choice([0.0, 1.0, 2.0, 100.0]))
    if case in ("thm3-iv", "appendix-iv"):
        sign = -1.0 if case == "thm3-iv" else 1.0
        residual, _ = confounding_covariances(base)
        M = base.S_Z @ base.x_anchor_effect.T  # (dz, dx)
        # direct anchor effect G with G M = sign * a * residual
        G = sign * a * residual @ np.linalg.solve(M.T @ M, M.T)
        fields = {**_fields(base), "B_YZ": G - base.B_YC @ base.B_CZ}
        gamma = 1.0 / a if case == "thm3-iv" else np.inf
        return SemSpec(**fields), gamma
    raise InvalidInputError(f"unknown case {case!r}; expected one of {CASES}")


def _fields(spec: SemSpec) -> dict:
    return {name: getattr(spec, name) for name in _B_FIELDS + _S_FIELDS}
