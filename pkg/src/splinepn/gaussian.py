"""Finite-dimensional Gaussian algebra for spline coefficients and function values."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .bspline import KnotVector, derivative_operator, design_matrix
from .errors import (
    DimensionError,
    InputOrderError,
    InvalidBasisError,
    NotPSDError,
    SingularConditioningError,
    ValidationError,
)

__all__ = [
    "GaussianVector",
    "LinearObservation",
    "CoefficientPrior",
    "coefficient_covariance",
    "state_design",
    "joint_state_gaussian",
    "condition",
    "symmetric_factor",
    "sample",
    "bandwidth_of",
    "JITTER_LADDER",
]

JITTER_LADDER = (1e-12, 1e-10, 1e-8)
PINV_RTOL = 1e-12


def _frozen(a, ndim) -> np.ndarray:
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise DimensionError(f"expected a {ndim}-d array, got shape {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class GaussianVector:
    """Mean and covariance of a Gaussian random vector."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _frozen(self.mean, 1)
        cov = _frozen(self.cov, 2)
        n = mean.size
        if cov.shape != (n, n):
            raise DimensionError(f"covariance shape {cov.shape} does not match mean length {n}")
        scale = max(1.0, float(np.max(np.abs(cov)))) if n else 1.0
        if n and np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise ValidationError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def var(self) -> np.ndarray:
        return np.diag(self.cov).copy()

    def marginal(self, index) -> GaussianVector:
        idx = np.atleast_1d(index)
        return GaussianVector(self.mean[idx], self.cov[np.ix_(idx, idx)])

    def linear(self, M, offset=None) -> GaussianVector:
        """Law of ``M x + offset``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        if M.shape[1] != self.dim:
            raise DimensionError(f"map has {M.shape[1]} columns, Gaussian has dimension {self.dim}")
        mean = M @ self.mean
        if offset is not None:
            mean = mean + offset
        return GaussianVector(mean, _sym(M @ self.cov @ M.T))


@dataclass(frozen=True, eq=False)
class LinearObservation:
    """The event ``H x = y`` observed with homoscedastic variance ``nugget``."""

    H: np.ndarray
    y: np.ndarray
    nugget: float = 0.0

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if H.shape[0] < 1 or y.shape != (H.shape[0],):
            raise DimensionError(f"H has shape {H.shape} but y has shape {y.shape}")
        if not self.nugget >= 0:
            raise ValidationError(f"nugget must be >= 0, got {self.nugget}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "nugget", float(self.nugget))


@dataclass(frozen=True)
class CoefficientPrior:
    """Zero-mean Gaussian prior on spline coefficients.

    ``structure="diagonal"`` makes every coefficient independent with
    variance ``scale``. ``structure="integrated"`` puts the independent
    ``N(0, scale)`` law on the first coefficient and on each derivative
    coefficient instead, so the coefficients form a random walk whose
    increments are ``(tau[j+q] - tau[j+1]) / (q - 1)`` times a standard draw.
    """

    scale: float = 1.0
    structure: str = field(default="diagonal")

    def __post_init__(self):
        if not self.scale > 0 or not math.isfinite(self.scale):
            raise ValidationError(f"prior scale must be positive, got {self.scale}")
        if self.structure not in ("diagonal", "integrated"):
            raise ValidationError(f"unknown prior structure {self.structure!r}")


def coefficient_covariance(kv: KnotVector, prior: CoefficientPrior) -> np.ndarray:
    J = kv.n_basis
    if prior.structure == "diagonal":
        return prior.scale * np.eye(J)
    if kv.order < 2:
        raise InvalidBasisError("integrated prior needs order >= 2")
    # theta = T z with z ~ N(0, scale I): z[0] is the level, z[j] the derivative coefficients
    q, tau = kv.order, kv.knots
    steps = (tau[q : q + J - 1] - tau[1:J]) / (q - 1)
    T = np.zeros((J, J))
    T[:, 0] = 1.0
    T[1:, 1:] = np.tril(np.broadcast_to(steps, (J - 1, J - 1)))
    return prior.scale * (T @ T.T)


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def _check_sorted(points, name) -> np.ndarray:
    p = np.atleast_1d(np.asarray(points, dtype=float))
    if p.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional")
    if np.any(np.diff(p) < 0):
        raise InputOrderError(f"{name} must be sorted ascending")
    return p


def state_design(kv: KnotVector, u_points, ut_points) -> np.ndarray:
    """Rows mapping coefficients to ``u`` at ``u_points`` then ``u_t`` at ``ut_points``."""
    u_points = _check_sorted(u_points, "u_points")
    ut_points = _check_sorted(ut_points, "ut_points")
    B = design_matrix(kv, u_points) if u_points.size else np.zeros((0, kv.n_basis))
    if ut_points.size == 0:
        return B
    op = derivative_operator(kv)
    dB = design_matrix(op.target_knots, ut_points) @ op.matrix
    return np.vstack([B, dB])


def joint_state_gaussian(
    kv: KnotVector, prior: CoefficientPrior, u_points: Sequence[float], ut_points: Sequence[float]
) -> GaussianVector:
    """Joint law of ``(u(s) for s in u_points, u_t(s) for s in ut_points)``."""
    if kv.order < 2:
        raise InvalidBasisError("joint (u, u_t) law needs order >= 2")
    G = state_design(kv, u_points, ut_points)
    P = coefficient_covariance(kv, prior)
    if prior.structure == "diagonal":
        cov = prior.scale * (G @ G.T)
    else:
        cov = G @ P @ G.T
    return GaussianVector(np.zeros(G.shape[0]), _sym(cov))


def condition(g: GaussianVector, obs: LinearObservation) -> GaussianVector:
    """Posterior of ``x ~ g`` given ``H x + e = y`` with ``e ~ N(0, nugget I)``.

    With ``nugget == 0`` a rank-deficient innovation matrix is pseudo-inverted
    (eigenvalues below ``1e-12`` of the largest are dropped). If the data then
    have a component the prior says is impossible, the observation cannot be
    honoured exactly and :class:`SingularConditioningError` is raised.
    """
    H, y, r2 = obs.H, obs.y, obs.nugget
    if H.shape[1] != g.dim:
        raise DimensionError(f"observation has {H.shape[1]} columns, Gaussian has dimension {g.dim}")
    SHt = g.cov @ H.T
    S = _sym(H @ SHt)
    resid = y - H @ g.mean
    if r2 > 0:
        S = S + r2 * np.eye(S.shape[0])
        try:
            factor = scipy.linalg.cho_factor(S, lower=True)
            gain_t = scipy.linalg.cho_solve(factor, SHt.T)
        except np.linalg.LinAlgError:
            gain_t = np.linalg.solve(S, SHt.T)
    else:
        w, V = np.linalg.eigh(S)
        # floor against the prior scale so an exactly pinned direction counts as singular
        ref = max(float(w.max(initial=0.0)), float(np.max(np.abs(np.diag(g.cov)), initial=0.0)) * float(np.sum(H * H, axis=1).max()))
        keep = w > PINV_RTOL * ref
        dropped = V[:, ~keep]
        if dropped.size:
            lost = dropped.T @ resid
            if np.max(np.abs(lost)) > 1e-8 * max(1.0, float(np.max(np.abs(y)))):
                raise SingularConditioningError(
                    "innovation covariance is singular and the data are inconsistent with the prior; "
                    "use a positive nugget"
                )
        Vk = V[:, keep]
        gain_t = Vk @ ((Vk.T @ SHt.T) / w[keep][:, None])
    mean = g.mean + gain_t.T @ resid
    cov = _sym(g.cov - SHt @ gain_t)
    return GaussianVector(mean, cov)


def bandwidth_of(M, tol: float = 0.0) -> int:
    """Smallest ``b`` with ``|M[i, j]| <= tol`` whenever ``|i - j| > b``."""
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"bandwidth_of needs a square matrix, got shape {M.shape}")
    if tol < 0:
        raise ValidationError("tol must be >= 0")
    i, j = np.nonzero(np.abs(M) > tol)
    return int(np.max(np.abs(i - j), initial=0))


def _banded_lower(M: np.ndarray, b: int) -> np.ndarray:
    n = M.shape[0]
    ab = np.zeros((b + 1, n))
    for k in range(b + 1):
        ab[k, : n - k] = np.diagonal(M, -k)
    return ab


def _lower_from_banded(ab: np.ndarray) -> np.ndarray:
    b1, n = ab.shape
    L = np.zeros((n, n))
    for k in range(b1):
        idx = np.arange(n - k)
        L[idx + k, idx] = ab[k, : n - k]
    return L


def symmetric_factor(cov) -> np.ndarray:
    """Lower factor ``L`` with ``L L^T`` equal to ``cov`` up to diagonal jitter.

    Tries a plain Cholesky, then the jitter ladder (relative to the largest
    diagonal entry). Uses the banded routine when the bandwidth is at most a
    quarter of the dimension.
    """
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    scale = float(np.max(np.abs(np.diag(cov))))
    if scale == 0.0:
        if np.any(cov != 0.0):
            raise NotPSDError("covariance has zero diagonal but nonzero off-diagonal entries")
        return np.zeros((n, n))
    b = bandwidth_of(cov, 0.0)
    banded = n > 1 and b <= n // 4
    for jitter in (0.0, *JITTER_LADDER):
        A = cov + jitter * scale * np.eye(n) if jitter else cov
        try:
            if banded:
                ab = scipy.linalg.cholesky_banded(_banded_lower(A, b), lower=True)
                return _lower_from_banded(ab)
            return np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            continue
    lam = float(np.linalg.eigvalsh(cov).min())
    raise NotPSDError(f"covariance is not positive semi-definite (smallest eigenvalue {lam:.3e})")


def sample(g: GaussianVector, seed, size: int | None = None) -> np.ndarray:
    """Draw from ``g`` with a PCG64 generator seeded by ``seed``.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts; the same
    seed always gives the same bits. With ``size`` the result has a leading
    axis of that length.
    """
    L = symmetric_factor(g.cov)
    rng = np.random.default_rng(seed)
    if size is None:
        z = rng.standard_normal(g.dim)
        return g.mean + L @ z
    z = rng.standard_normal((size, g.dim))
    return g.mean + z @ L.T
