"""Sequential probabilistic ODE solver and grid posterior over parameters.

The solution of ``u_t = f(t, u, theta)`` is a B-spline series per state
dimension with a Gaussian prior on the coefficients. The prior is first
conditioned on ``u(0) = u0``; the solver then walks the interrogation sites
``0, t_1, ..., t_N`` in order, evaluates ``f`` at an estimate of ``u(t_i)``
drawn from the current posterior, and conditions on ``u_t(t_i) = f_i``.

Random draws are reproducible: step ``i`` uses generator seed
``[seed, 0, i]`` and trajectory draws of dimension ``d`` use
``[seed, 1, d]`` (both passed to :func:`numpy.random.default_rng`).
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .bspline import KnotVector, derivative_operator, design_matrix, make_clamped_knots
from .convergence import GridSpec, uniform_grid
from .errors import (
    DegeneratePosteriorError,
    DimensionError,
    DivergenceError,
    FieldEvaluationError,
    InvalidBasisError,
    NotPSDError,
    ValidationError,
)
from .gaussian import (
    CoefficientPrior,
    GaussianVector,
    LinearObservation,
    coefficient_covariance,
    condition,
    sample,
)

log = logging.getLogger(__name__)

__all__ = [
    "OdeProblem",
    "SolverConfig",
    "ProbSolution",
    "ObservationModel",
    "solver_knots",
    "init_prior",
    "step",
    "solve",
    "marginal_likelihood",
    "grid_posterior",
]

Field = Callable[[float, np.ndarray, np.ndarray], Sequence[float]]


@dataclass(frozen=True, eq=False)
class OdeProblem:
    """Initial value problem ``u_t = field(t, u, theta)``, ``u(0) = u0`` on ``[0, L]``."""

    field: Field
    theta: np.ndarray
    u0: np.ndarray
    domain_length: float

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        u0 = np.atleast_1d(np.asarray(self.u0, dtype=float))
        if u0.ndim != 1 or u0.size < 1:
            raise DimensionError("u0 must be a non-empty vector")
        if not self.domain_length > 0:
            raise ValidationError(f"domain length must be positive, got {self.domain_length}")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "u0", u0)
        object.__setattr__(self, "domain_length", float(self.domain_length))

    @property
    def dim(self) -> int:
        return self.u0.size

    def evaluate(self, t: float, u) -> np.ndarray:
        value = np.asarray(self.field(t, np.asarray(u, dtype=float), self.theta), dtype=float)
        value = np.atleast_1d(value)
        if value.shape != (self.dim,):
            raise DimensionError(f"field returned shape {value.shape}, expected ({self.dim},)")
        if not np.all(np.isfinite(value)):
            raise FieldEvaluationError(float(t), np.asarray(u).tolist(), value.tolist())
        return value


MODES = ("sample", "mean")
KNOT_POLICIES = ("auto", "sites", "uniform")


@dataclass(frozen=True, eq=False)
class SolverConfig:
    """Solver settings.

    ``J`` defaults to ``N + 2``: one coefficient for the level plus one per
    interrogation site, which makes the derivative interpolation square.
    ``J_offset`` sets ``J = N + J_offset`` instead. ``nugget`` defaults to
    ``1e-8 * prior_scale``.

    ``knots="sites"`` derives interior knots from the interrogation sites
    (available when ``J == N + 2`` or ``J == N + q - 1``); ``"uniform"`` uses
    evenly spaced knots; ``"auto"`` picks ``"sites"`` when available.
    """

    N: int
    J: int | None = None
    q: int = 4
    prior_scale: float = 10.0
    nugget: float | None = None
    mode: str = "sample"
    seed: int = 0
    grid: GridSpec | None = None
    n_draws: int = 0
    prior_structure: str = "integrated"
    knots: str = "auto"
    J_offset: int | None = None

    def __post_init__(self):
        if self.N < 2:
            raise ValidationError(f"N must be >= 2, got {self.N}")
        if self.q < 2:
            raise InvalidBasisError(f"solver needs order q >= 2, got {self.q}")
        if not self.prior_scale > 0:
            raise ValidationError(f"prior_scale must be positive, got {self.prior_scale}")
        if self.nugget is not None and not self.nugget >= 0:
            raise ValidationError(f"nugget must be >= 0, got {self.nugget}")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.knots not in KNOT_POLICIES:
            raise ValidationError(f"knots must be one of {KNOT_POLICIES}, got {self.knots!r}")
        if self.seed < 0:
            raise ValidationError("seed must be non-negative")
        if self.n_draws < 0:
            raise ValidationError("n_draws must be non-negative")
        if self.grid is not None and self.grid.N != self.N:
            raise ValidationError(f"grid has {self.grid.N} points but N={self.N}")
        if self.n_basis < self.q:
            raise InvalidBasisError(f"need J >= q, got J={self.n_basis}, q={self.q}")
        CoefficientPrior(self.prior_scale, self.prior_structure)

    @property
    def n_basis(self) -> int:
        if self.J is not None:
            return int(self.J)
        if self.J_offset is not None:
            return self.N + int(self.J_offset)
        return self.N + 2

    @property
    def nugget_value(self) -> float:
        return 1e-8 * self.prior_scale if self.nugget is None else float(self.nugget)

    @property
    def length_scale(self) -> float:
        """Number of basis functions acts as an inverse length scale."""
        return 1.0 / self.n_basis

    @property
    def prior(self) -> CoefficientPrior:
        return CoefficientPrior(self.prior_scale, self.prior_structure)


@dataclass(frozen=True, eq=False)
class ObservationModel:
    """``Y = A x + eps`` where ``x`` stacks ``u_d(obs_times)`` dimension by dimension."""

    A: np.ndarray
    obs_times: np.ndarray
    noise_var: float

    def __post_init__(self):
        times = np.atleast_1d(np.asarray(self.obs_times, dtype=float))
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if times.ndim != 1 or np.any(times < 0):
            raise ValidationError("obs_times must be a 1-d array of non-negative times")
        if not self.noise_var > 0:
            raise ValidationError(f"noise_var must be positive, got {self.noise_var}")
        if A.shape[1] % max(times.size, 1):
            raise DimensionError(f"A has {A.shape[1]} columns, not a multiple of {times.size} times")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "obs_times", times)
        object.__setattr__(self, "noise_var", float(self.noise_var))

    @classmethod
    def identity(cls, obs_times, noise_var: float, dim: int = 1) -> ObservationModel:
        k = np.atleast_1d(obs_times).size
        return cls(np.eye(k * dim), obs_times, noise_var)


@dataclass(frozen=True, eq=False)
class ProbSolution:
    coeff_posterior: list[GaussianVector]
    knots: KnotVector
    grid: GridSpec
    draws: list[np.ndarray] | None = None
    mode_used: str = "mean"
    seed_used: int = 0
    sites: np.ndarray = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return len(self.coeff_posterior)

    def value_gaussian(self, t, dim: int = 0) -> GaussianVector:
        """Law of ``u_dim`` at the points ``t``."""
        B = design_matrix(self.knots, np.atleast_1d(t))
        return self.coeff_posterior[dim].linear(B)

    def derivative_gaussian(self, t, dim: int = 0) -> GaussianVector:
        op = derivative_operator(self.knots)
        dB = design_matrix(op.target_knots, np.atleast_1d(t)) @ op.matrix
        return self.coeff_posterior[dim].linear(dB)

    def mean_at(self, t) -> np.ndarray:
        """Posterior mean, shape ``(len(t), dim)``."""
        B = design_matrix(self.knots, np.atleast_1d(t))
        return np.column_stack([B @ g.mean for g in self.coeff_posterior])

    def sd_at(self, t) -> np.ndarray:
        B = design_matrix(self.knots, np.atleast_1d(t))
        cols = [np.einsum("ij,jk,ik->i", B, g.cov, B) for g in self.coeff_posterior]
        return np.sqrt(np.clip(np.column_stack(cols), 0.0, None))


def resolve_grid(problem: OdeProblem, config: SolverConfig) -> GridSpec:
    grid = config.grid if config.grid is not None else uniform_grid(config.N, problem.domain_length)
    if not math.isclose(grid.domain_length, problem.domain_length, rel_tol=0, abs_tol=1e-12 * problem.domain_length):
        raise ValidationError(
            f"grid ends at {grid.domain_length}, problem domain is [0, {problem.domain_length}]"
        )
    return grid


def solver_knots(problem: OdeProblem, config: SolverConfig) -> KnotVector:
    """Knot vector used by :func:`solve`.

    With ``J == N + 2`` the interior knots are running averages of ``q - 2``
    consecutive interrogation sites (midpoints of consecutive sites when
    ``q == 2``), the classical placement for interpolating the derivative.
    With ``J == N + q - 1`` they are midpoints of consecutive grid points.
    """
    grid = resolve_grid(problem, config)
    L, q, J, N = problem.domain_length, config.q, config.n_basis, config.N
    square = J == N + 2
    midpoints = J - q == N - 1
    policy = config.knots
    if policy == "auto":
        policy = "sites" if (square or midpoints) else "uniform"
    if policy == "uniform":
        return make_clamped_knots(L, J, q)
    sites = np.r_[0.0, grid.points]
    sites[-1] = L
    if square:
        w = q - 2
        if w == 0:
            inner = 0.5 * (sites[:-1] + sites[1:])
        else:
            csum = np.r_[0.0, np.cumsum(sites)]
            inner = (csum[1 + w : J - q + 1 + w] - csum[1 : J - q + 1]) / w
    elif midpoints:
        inner = 0.5 * (sites[1:N] + sites[2 : N + 1])
    else:
        raise ValidationError(f"knots='sites' needs J == N + 2 or J == N + q - 1, got J={J}, N={N}")
    return KnotVector(q, np.r_[np.zeros(q), inner, np.full(q, L)], L)


def init_prior(problem: OdeProblem, config: SolverConfig, knots: KnotVector | None = None) -> list[GaussianVector]:
    """Coefficient prior for each dimension, conditioned exactly on ``u(0) = u0``."""
    kv = knots if knots is not None else solver_knots(problem, config)
    P = coefficient_covariance(kv, config.prior)
    prior = GaussianVector(np.zeros(kv.n_basis), P)
    b0 = design_matrix(kv, [0.0])
    return [condition(prior, LinearObservation(b0, [u0], 0.0)) for u0 in problem.u0]


def step(
    state: list[GaussianVector],
    t_i: float,
    problem: OdeProblem,
    config: SolverConfig,
    knots: KnotVector,
    seed=None,
) -> list[GaussianVector]:
    """One model interrogation at ``t_i``; returns the updated coefficient laws."""
    b = design_matrix(knots, [t_i])[0]
    means = np.array([b @ g.mean for g in state])
    if config.mode == "mean":
        u_i = means
    else:
        var = np.array([max(float(b @ g.cov @ b), 0.0) for g in state])
        u_i = sample(GaussianVector(means, np.diag(var)), seed)
    f_i = problem.evaluate(t_i, u_i)
    op = derivative_operator(knots)
    db = design_matrix(op.target_knots, [t_i]) @ op.matrix
    nugget = config.nugget_value
    return [condition(g, LinearObservation(db, [f], nugget)) for g, f in zip(state, f_i)]


def solve(problem: OdeProblem, config: SolverConfig) -> ProbSolution:
    """Interrogate the model at ``t = 0`` and at every grid point in order."""
    grid = resolve_grid(problem, config)
    kv = solver_knots(problem, config)
    state = init_prior(problem, config, kv)
    sites = np.r_[0.0, grid.points]
    for i, t in enumerate(sites):
        # overflow is reported as a divergence below, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            state = step(state, float(t), problem, config, kv, seed=[config.seed, 0, i])
        if not all(np.all(np.isfinite(g.mean)) and np.all(np.isfinite(g.cov)) for g in state):
            raise DivergenceError(i, float(t))
    draws = None
    if config.n_draws:
        B = design_matrix(kv, grid.points)
        per_dim = [sample(g.linear(B), [config.seed, 1, d], size=config.n_draws) for d, g in enumerate(state)]
        draws = [np.column_stack([p[k] for p in per_dim]) for k in range(config.n_draws)]
    return ProbSolution(state, kv, grid, draws, config.mode, config.seed, sites)


def _stacked_state(sol: ProbSolution, times: np.ndarray) -> GaussianVector:
    B = design_matrix(sol.knots, times)
    means = [B @ g.mean for g in sol.coeff_posterior]
    covs = [B @ g.cov @ B.T for g in sol.coeff_posterior]
    return GaussianVector(np.concatenate(means), scipy.linalg.block_diag(*covs))


def marginal_likelihood(sol: ProbSolution, obs: ObservationModel, y) -> float:
    """``log N(y; A m_u, A S_u A^T + noise_var I)`` under the solver posterior."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size == 0:
        return 0.0
    k = obs.obs_times.size
    if obs.A.shape != (y.size, k * sol.dim):
        raise DimensionError(f"A must have shape ({y.size}, {k * sol.dim}), got {obs.A.shape}")
    x = _stacked_state(sol, obs.obs_times)
    pred = x.linear(obs.A)
    S = pred.cov + obs.noise_var * np.eye(y.size)
    try:
        c, lower = scipy.linalg.cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NotPSDError("predictive covariance of the observations is not positive definite") from exc
    r = y - pred.mean
    alpha = scipy.linalg.cho_solve((c, lower), r)
    logdet = 2.0 * np.sum(np.log(np.diag(c)))
    return float(-0.5 * (r @ alpha + logdet + y.size * math.log(2.0 * math.pi)))


def grid_posterior(
    problem_family: Callable[[np.ndarray], OdeProblem],
    theta_grid: Sequence,
    obs: ObservationModel,
    y,
    config: SolverConfig,
) -> list[tuple[np.ndarray, float]]:
    """Normalised posterior weights over ``theta_grid`` under a uniform prior.

    Every candidate is solved with the same ``config`` (so the same seeds).
    Candidates whose solve fails on the field or diverges get zero weight.
    """
    thetas = [np.atleast_1d(np.asarray(th, dtype=float)) for th in theta_grid]
    if not thetas:
        raise ValidationError("theta_grid must be non-empty")
    logliks = np.empty(len(thetas))
    for i, th in enumerate(thetas):
        try:
            sol = solve(problem_family(th), config)
            logliks[i] = marginal_likelihood(sol, obs, y)
        except (FieldEvaluationError, DivergenceError) as exc:
            log.warning("theta=%s dropped: %s", th.tolist(), exc)
            logliks[i] = -np.inf
    finite = np.isfinite(logliks)
    if not finite.any():
        raise DegeneratePosteriorError("every candidate has zero likelihood")
    w = np.zeros_like(logliks)
    w[finite] = np.exp(logliks[finite] - logliks[finite].max())
    w /= w.sum()
    return list(zip(thetas, w.tolist()))
