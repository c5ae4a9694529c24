"""Quadratic Chebyshev feature basis and per-step value-function models.

The value function at each time step is represented as ``Phi(x) @ alpha``
where ``Phi`` collects all degree-<=2 products of the 1-D Chebyshev basis
``{1, z_j, 2 z_j^2 - 1}`` after normalizing each state coordinate to the
region of interest, ``z_j = (x_j - offset_j) / scale_j``.

Feature order is fixed: constant, then the n linear terms ``z_j``, then the
n square terms ``2 z_j^2 - 1``, then the n(n-1)/2 cross terms ``z_i z_j``
for i < j in lexicographic order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ChebyshevModel",
    "ValueModel",
    "num_features",
    "coefficients_from_quadratic",
]


def num_features(state_dim: int) -> int:
    """Feature count k = 1 + 2n + n(n-1)/2 of the degree-2 basis."""
    n = state_dim
    return 1 + 2 * n + n * (n - 1) // 2


def _cross_index_pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    ii, jj = np.triu_indices(n, k=1)
    return ii, jj


@dataclass
class ChebyshevModel:
    """Normalized degree-2 Chebyshev feature map for an n-dimensional state."""

    state_dim: int
    offset: np.ndarray
    scale: np.ndarray
    _pairs: tuple[np.ndarray, np.ndarray] = field(init=False, repr=False)

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=float).reshape(self.state_dim)
        self.scale = np.asarray(self.scale, dtype=float).reshape(self.state_dim)
        if not np.all(self.scale > 0):
            raise ValueError("basis scale components must be strictly positive")
        self._pairs = _cross_index_pairs(self.state_dim)

    @property
    def num_features(self) -> int:
        return num_features(self.state_dim)

    def feature_names(self) -> list[str]:
        n = self.state_dim
        names = ["1"]
        names += [f"z{j}" for j in range(n)]
        names += [f"T2(z{j})" for j in range(n)]
        names += [f"z{i}*z{j}" for i, j in zip(*self._pairs)]
        return names

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.offset) / self.scale

    def features(self, x: np.ndarray) -> np.ndarray:
        """Feature matrix Phi(x); works on a single state or a batch (..., n)."""
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input to feature map")
        z = self.normalize(x)
        ii, jj = self._pairs
        ones = np.ones(z.shape[:-1] + (1,))
        return np.concatenate(
            [ones, z, 2.0 * z * z - 1.0, z[..., ii] * z[..., jj]], axis=-1
        )

    def value(self, x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        return self.features(x) @ np.asarray(alpha, dtype=float)

    def gradient(self, x: np.ndarray, alpha: np.ndarray) -> np.ndarray:
        """Gradient of Phi(x) @ alpha w.r.t. x, through the normalization.

        For the quadratic basis the gradient in z-space is
        ``a_lin + 4 a_sq * z + C z`` with C the symmetric cross-term matrix,
        divided coordinate-wise by the scale (chain rule).
        """
        x = np.asarray(x, dtype=float)
        if not np.all(np.isfinite(x)):
            raise ValueError("non-finite input to gradient")
        alpha = np.asarray(alpha, dtype=float)
        n = self.state_dim
        z = self.normalize(x)
        a_lin = alpha[1 : 1 + n]
        a_sq = alpha[1 + n : 1 + 2 * n]
        ii, jj = self._pairs
        cross = np.zeros((n, n))
        cross[ii, jj] = alpha[1 + 2 * n :]
        cross += cross.T
        gz = a_lin + 4.0 * a_sq * z + z @ cross.T
        return gz / self.scale


@dataclass
class ValueModel:
    """Per-time-step basis coefficients alpha_1..alpha_N over one basis.

    Row i of ``coefficients`` holds alpha_i; row 0 exists but is never fitted
    (the time-0 state is a single point, and the policy at step 0 reads
    alpha_1). ``defined`` marks which rows hold fitted coefficients.
    """

    basis: ChebyshevModel
    num_steps: int
    coefficients: np.ndarray = field(init=False)
    defined: np.ndarray = field(init=False)

    def __post_init__(self):
        k = self.basis.num_features
        self.coefficients = np.zeros((self.num_steps + 1, k))
        self.defined = np.zeros(self.num_steps + 1, dtype=bool)

    def set_coefficients(self, i: int, alpha: np.ndarray) -> None:
        alpha = np.asarray(alpha, dtype=float)
        if alpha.shape != (self.basis.num_features,):
            raise ValueError(f"alpha_{i} must have length {self.basis.num_features}")
        if not np.all(np.isfinite(alpha)):
            raise ValueError(f"non-finite coefficients for time index {i}")
        self.coefficients[i] = alpha
        self.defined[i] = True

    def _check_defined(self, i: int) -> None:
        if not (0 <= i <= self.num_steps) or not self.defined[i]:
            raise IndexError(f"value model has no coefficients at time index {i}")

    def value(self, i: int, x: np.ndarray) -> np.ndarray:
        self._check_defined(i)
        return self.basis.value(x, self.coefficients[i])

    def gradient(self, i: int, x: np.ndarray) -> np.ndarray:
        self._check_defined(i)
        return self.basis.gradient(x, self.coefficients[i])

    def copy(self) -> "ValueModel":
        out = ValueModel(self.basis, self.num_steps)
        out.coefficients = self.coefficients.copy()
        out.defined = self.defined.copy()
        return out

    def to_csv(self, path) -> None:
        """One row per time index, one column per named feature."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_index", "defined"] + self.basis.feature_names())
            for i in range(self.num_steps + 1):
                row = [i, int(self.defined[i])]
                row += [format(c, ".17g") for c in self.coefficients[i]]
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path, basis: ChebyshevModel) -> "ValueModel":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        model = cls(basis, num_steps=len(rows) - 2)
        for row in rows[1:]:
            i = int(row[0])
            if int(row[1]):
                model.set_coefficients(i, np.array([float(v) for v in row[2:]]))
        return model


def coefficients_from_quadratic(
    basis: ChebyshevModel, quad: np.ndarray, lin: np.ndarray, const: float
) -> np.ndarray:
    """Basis coefficients that reproduce x^T A x + b^T x + c exactly.

    Any quadratic lies in the span of the degree-2 basis; this converts the
    (A, b, c) form through the ROI normalization x = offset + scale * z and
    the identity z^2 = (T2(z) + 1) / 2.
    """
    n = basis.state_dim
    A = np.asarray(quad, dtype=float).reshape(n, n)
    A = 0.5 * (A + A.T)
    b = np.asarray(lin, dtype=float).reshape(n)
    o, s = basis.offset, basis.scale

    # x^T A x + b^T x + c with x = o + s*z expands to z^T As z + bs^T z + cs
    As = A * np.outer(s, s)
    bs = s * (2.0 * A @ o + b)
    cs = float(o @ A @ o + b @ o + const)

    alpha = np.zeros(basis.num_features)
    alpha[0] = cs + 0.5 * np.trace(As)
    alpha[1 : 1 + n] = bs
    alpha[1 + n : 1 + 2 * n] = 0.5 * np.diag(As)
    ii, jj = np.triu_indices(n, k=1)
    alpha[1 + 2 * n :] = 2.0 * As[ii, jj]
    return alpha
