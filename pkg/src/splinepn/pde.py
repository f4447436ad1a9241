"""Tensor-product B-spline prior for space-time fields ``u(x, t)``.

Coefficients form a ``J_x x J_t`` matrix ``C`` and
``u(x, t) = b_x(x)^T C b_t(t)``. Flattened design rows are x-major:
coefficient ``(j1, j2)`` sits at position ``j1 * J_t + j2``, which is the
layout of ``np.kron(b_x, b_t)``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .bspline import KnotVector, derivative_matrix, design_matrix
from .errors import DimensionError, ValidationError
from .gaussian import GaussianVector

__all__ = [
    "TensorBasis",
    "TensorCoefficients",
    "MixedPartialOperator",
    "tensor_eval",
    "mixed_partial_operator",
    "field_design",
    "joint_field_gaussian",
]


@dataclass(frozen=True, eq=False)
class TensorBasis:
    kx: KnotVector
    kt: KnotVector

    @property
    def shape(self) -> tuple[int, int]:
        return self.kx.n_basis, self.kt.n_basis


@dataclass(frozen=True, eq=False)
class TensorCoefficients:
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise DimensionError(f"tensor coefficients must be a matrix, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def _coeff_matrix(tb: TensorBasis, c) -> np.ndarray:
    v = c.values if isinstance(c, TensorCoefficients) else np.asarray(c, dtype=float)
    if v.shape != tb.shape:
        raise DimensionError(f"coefficients have shape {v.shape}, basis needs {tb.shape}")
    return v


def tensor_eval(tb: TensorBasis, c, x: float, t: float) -> float:
    bx = design_matrix(tb.kx, [x])[0]
    bt = design_matrix(tb.kt, [t])[0]
    return float(bx @ _coeff_matrix(tb, c) @ bt)


@dataclass(frozen=True, eq=False)
class MixedPartialOperator:
    """``C -> Dx C Dt^T``; the result is a coefficient matrix on ``basis``."""

    x_matrix: np.ndarray
    t_matrix: np.ndarray
    basis: TensorBasis

    def __call__(self, c) -> TensorCoefficients:
        v = c.values if isinstance(c, TensorCoefficients) else np.asarray(c, dtype=float)
        if v.shape != (self.x_matrix.shape[1], self.t_matrix.shape[1]):
            raise DimensionError(f"coefficients have shape {v.shape}")
        return TensorCoefficients(self.x_matrix @ v @ self.t_matrix.T)


def mixed_partial_operator(tb: TensorBasis, rx: int, rt: int) -> MixedPartialOperator:
    """Coefficient map for ``d^(rx+rt) u / dx^rx dt^rt``."""
    Dx, kx = derivative_matrix(tb.kx, rx)
    Dt, kt = derivative_matrix(tb.kt, rt)
    return MixedPartialOperator(Dx, Dt, TensorBasis(kx, kt))


def field_design(tb: TensorBasis, points, derivative_orders=None) -> np.ndarray:
    """Rows mapping flattened coefficients to the requested values or partials."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != 2:
        raise DimensionError("points must be (x, t) pairs")
    orders = [(0, 0)] * len(pts) if derivative_orders is None else list(derivative_orders)
    if len(orders) != len(pts):
        raise DimensionError("one derivative order pair is needed per point")
    rows = np.empty((len(pts), tb.kx.n_basis * tb.kt.n_basis))
    cache: dict[tuple[int, int], MixedPartialOperator] = {}
    for i, ((x, t), (rx, rt)) in enumerate(zip(pts, orders)):
        op = cache.get((rx, rt))
        if op is None:
            op = cache[(rx, rt)] = mixed_partial_operator(tb, int(rx), int(rt))
        bx = design_matrix(op.basis.kx, [x])[0] @ op.x_matrix
        bt = design_matrix(op.basis.kt, [t])[0] @ op.t_matrix
        rows[i] = np.kron(bx, bt)
    return rows


def joint_field_gaussian(
    tb: TensorBasis,
    prior_scale: float,
    points: Sequence[tuple[float, float]],
    derivative_orders: Sequence[tuple[int, int]] | None = None,
) -> GaussianVector:
    """Zero-mean law of field values/partials under iid ``N(0, prior_scale)`` coefficients."""
    if not prior_scale > 0:
        raise ValidationError(f"prior_scale must be positive, got {prior_scale}")
    R = field_design(tb, points, derivative_orders)
    cov = prior_scale * (R @ R.T)
    return GaussianVector(np.zeros(R.shape[0]), 0.5 * (cov + cov.T))
