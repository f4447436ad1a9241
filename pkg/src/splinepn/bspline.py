"""Clamped B-spline bases on ``[0, L]``.

Order ``q`` means degree ``q - 1``. A basis of ``J`` functions lives on a knot
sequence of length ``J + q`` whose first ``q`` knots are 0 and last ``q`` knots
are ``L``. Evaluation uses the local triangular form of the Cox-de Boor
recursion, so only the ``q`` functions that are nonzero on a knot span are
computed; dense design matrices are assembled from those.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DerivativeUndefinedError,
    DimensionError,
    InvalidBasisError,
    InvalidDomainError,
    OutOfDomainError,
)

__all__ = [
    "KnotVector",
    "DerivativeOperator",
    "Spline",
    "make_clamped_knots",
    "find_span",
    "basis_values",
    "design_matrix",
    "eval_basis",
    "eval_spline",
    "derivative_operator",
    "derivative_matrix",
]


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class KnotVector:
    """Clamped, non-decreasing knot sequence for a basis of order ``order``.

    ``strict=False`` relaxes the interior multiplicity check; it is used for
    the reduced-order knot vectors produced by differentiation, where an
    interior knot may reach multiplicity equal to the new order.
    """

    order: int
    knots: np.ndarray
    domain_length: float
    strict: bool = field(default=True, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "knots", _readonly(self.knots))
        object.__setattr__(self, "domain_length", float(self.domain_length))
        q, tau, L = int(self.order), self.knots, self.domain_length
        object.__setattr__(self, "order", q)
        if q < 1:
            raise InvalidBasisError(f"order must be >= 1, got {q}")
        if not L > 0 or not np.isfinite(L):
            raise InvalidDomainError(f"domain_length must be positive, got {L}")
        if tau.ndim != 1 or len(tau) < 2 * q:
            raise InvalidBasisError(f"need at least {2 * q} knots for order {q}, got {len(tau)}")
        if np.any(np.diff(tau) < 0):
            raise InvalidBasisError("knots must be non-decreasing")
        if np.any(tau[:q] != 0.0) or np.any(tau[-q:] != L):
            raise InvalidBasisError(f"knots must be clamped: {q} zeros and {q} copies of L={L}")
        interior = tau[q:-q]
        if interior.size:
            if interior[0] <= 0.0 or interior[-1] >= L:
                raise InvalidBasisError("interior knots must lie strictly inside (0, L)")
            _, counts = np.unique(interior, return_counts=True)
            limit = q - 1 if (self.strict and q > 1) else q
            if counts.max() > limit:
                raise InvalidBasisError(
                    f"interior knot multiplicity {counts.max()} too high for order {q}"
                )

    @property
    def n_basis(self) -> int:
        return len(self.knots) - self.order

    @property
    def degree(self) -> int:
        return self.order - 1

    def greville(self) -> np.ndarray:
        """Knot averages; using them as coefficients reproduces ``u(t) = t``."""
        q = self.order
        if q < 2:
            raise DerivativeUndefinedError("Greville abscissae need order >= 2")
        tau = self.knots
        return np.array([tau[j + 1 : j + q].mean() for j in range(self.n_basis)])

    def reduced(self) -> KnotVector:
        """Same knots with the first and last dropped, one order lower."""
        if self.order < 2:
            raise DerivativeUndefinedError("cannot lower the order of a piecewise-constant basis")
        return KnotVector(self.order - 1, self.knots[1:-1], self.domain_length, strict=False)

    def __eq__(self, other):
        if not isinstance(other, KnotVector):
            return NotImplemented
        return (
            self.order == other.order
            and self.domain_length == other.domain_length
            and np.array_equal(self.knots, other.knots)
        )

    def __hash__(self):
        return hash((self.order, self.domain_length, self.knots.tobytes()))


def make_clamped_knots(domain_length: float, n_basis: int, order: int) -> KnotVector:
    """Uniform clamped knots on ``[0, domain_length]``.

    >>> make_clamped_knots(1.0, 5, 4).knots
    array([0. , 0. , 0. , 0. , 0.5, 1. , 1. , 1. , 1. ])
    """
    L = float(domain_length)
    if not L > 0 or not np.isfinite(L):
        raise InvalidDomainError(f"domain_length must be positive, got {domain_length}")
    if order < 1 or n_basis < order:
        raise InvalidBasisError(f"need n_basis >= order >= 1, got n_basis={n_basis}, order={order}")
    n_spans = n_basis - order + 1
    interior = L * np.arange(1, n_spans) / n_spans
    return KnotVector(order, np.r_[np.zeros(order), interior, np.full(order, L)], L)


def _check_points(kv: KnotVector, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(t)) or np.any(t < 0.0) or np.any(t > kv.domain_length):
        bad = t[(~np.isfinite(t)) | (t < 0.0) | (t > kv.domain_length)].ravel()[0]
        raise OutOfDomainError(f"t={bad!r} outside [0, {kv.domain_length}]")
    return t


def find_span(kv: KnotVector, t) -> np.ndarray:
    """Index ``mu`` with ``knots[mu] <= t < knots[mu + 1]``; the last span is closed at ``L``."""
    t = _check_points(kv, t)
    mu = np.searchsorted(kv.knots, t, side="right") - 1
    return np.clip(mu, kv.order - 1, kv.n_basis - 1)


def basis_values(kv: KnotVector, t) -> tuple[np.ndarray, np.ndarray]:
    """Nonzero basis values at each point.

    Returns ``(span, values)`` where ``values[i, k]`` is the value of basis
    function ``span[i] - order + 1 + k`` at ``t[i]``.
    """
    t = np.atleast_1d(_check_points(kv, t)).ravel()
    q, tau = kv.order, kv.knots
    mu = find_span(kv, t)
    n = t.size
    vals = np.zeros((n, q))
    vals[:, 0] = 1.0
    left = np.zeros((n, q))
    right = np.zeros((n, q))
    for j in range(1, q):
        left[:, j] = t - tau[mu + 1 - j]
        right[:, j] = tau[mu + j] - t
        saved = np.zeros(n)
        for r in range(j):
            temp = vals[:, r] / (right[:, r + 1] + left[:, j - r])
            vals[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        vals[:, j] = saved
    return mu, vals


def design_matrix(kv: KnotVector, t) -> np.ndarray:
    """Dense ``(len(t), J)`` matrix of basis values."""
    mu, vals = basis_values(kv, t)
    out = np.zeros((mu.size, kv.n_basis))
    cols = mu[:, None] - kv.order + 1 + np.arange(kv.order)
    np.put_along_axis(out, cols, vals, axis=1)
    return out


def eval_basis(kv: KnotVector, t: float) -> np.ndarray:
    """All ``J`` basis values at a single point."""
    if np.ndim(t) != 0:
        raise DimensionError("eval_basis takes a scalar point; use design_matrix for many")
    return design_matrix(kv, [t])[0]


def eval_spline(kv: KnotVector, coefficients, t):
    """Evaluate ``sum_j c_j B_j(t)``; ``t`` may be scalar or an array."""
    c = np.asarray(coefficients, dtype=float)
    if c.shape != (kv.n_basis,):
        raise DimensionError(f"expected {kv.n_basis} coefficients, got shape {c.shape}")
    values = design_matrix(kv, np.atleast_1d(t)) @ c
    return float(values[0]) if np.ndim(t) == 0 else values.reshape(np.shape(t))


@dataclass(frozen=True, eq=False)
class DerivativeOperator:
    """Maps order-``q`` coefficients to the coefficients of the derivative.

    ``matrix`` is ``(J-1, J)`` and bidiagonal; the derivative lives on
    ``target_knots`` (order ``q - 1``).
    """

    matrix: np.ndarray
    target_knots: KnotVector

    def __call__(self, coefficients) -> np.ndarray:
        c = np.asarray(coefficients, dtype=float)
        if c.shape[:1] != (self.matrix.shape[1],):
            raise DimensionError(f"expected {self.matrix.shape[1]} coefficients, got shape {c.shape}")
        # scaled differences, so constant coefficients map to exactly zero
        scale = np.diagonal(self.matrix, 1)
        return scale.reshape((-1,) + (1,) * (c.ndim - 1)) * np.diff(c, axis=0)


def derivative_operator(kv: KnotVector) -> DerivativeOperator:
    """Coefficient map for ``d/dt``.

    Row ``j`` is ``(q-1)/(tau[j+q] - tau[j+1]) * (c[j+1] - c[j])`` in 0-based
    knot indexing, so constants map to zero.
    """
    q, tau, J = kv.order, kv.knots, kv.n_basis
    if q < 2:
        raise DerivativeUndefinedError("order-1 splines are piecewise constant; no derivative")
    widths = tau[q : q + J - 1] - tau[1:J]
    scale = (q - 1) / widths
    D = np.zeros((J - 1, J))
    rows = np.arange(J - 1)
    D[rows, rows] = -scale
    D[rows, rows + 1] = scale
    D.setflags(write=False)
    return DerivativeOperator(D, kv.reduced())


def derivative_matrix(kv: KnotVector, r: int) -> tuple[np.ndarray, KnotVector]:
    """``r``-fold derivative map and the knot vector of order ``q - r``."""
    if r < 0:
        raise DerivativeUndefinedError(f"derivative order must be >= 0, got {r}")
    if r >= kv.order:
        raise DerivativeUndefinedError(f"derivative order {r} must be below the spline order {kv.order}")
    M = np.eye(kv.n_basis)
    target = kv
    for _ in range(r):
        op = derivative_operator(target)
        M = op.matrix @ M
        target = op.target_knots
    return M, target


@dataclass(frozen=True, eq=False)
class Spline:
    """A coefficient vector paired with its knot vector."""

    knots: KnotVector
    coefficients: np.ndarray

    def __post_init__(self):
        c = _readonly(self.coefficients)
        if c.shape != (self.knots.n_basis,):
            raise DimensionError(f"expected {self.knots.n_basis} coefficients, got shape {c.shape}")
        object.__setattr__(self, "coefficients", c)

    def __call__(self, t):
        return eval_spline(self.knots, self.coefficients, t)

    def derivative(self) -> Spline:
        op = derivative_operator(self.knots)
        return Spline(op.target_knots, op(self.coefficients))
