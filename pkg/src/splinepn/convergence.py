"""Quasi-uniform grids and empirical convergence rates."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateGridError, InvalidBoundError, RateUndefinedError, ValidationError

log = logging.getLogger(__name__)

__all__ = [
    "GridSpec",
    "RateReport",
    "make_quasi_uniform_grid",
    "uniform_grid",
    "quasi_uniformity_constant",
    "fit_rate",
    "estimate_rate",
    "per_n_seed",
]

# keeps the realised ratio strictly below C after floating-point renormalisation
_LOG_C_MARGIN = 1e-9


def _increments(points: np.ndarray) -> np.ndarray:
    return np.diff(np.r_[0.0, points])


def quasi_uniformity_constant(grid) -> float:
    """Ratio of the largest to the smallest increment, counting from ``t_0 = 0``.

    Rounded to 12 decimals: differencing floating-point grid points cannot
    resolve the ratio more finely, and exact uniform grids should report 1.
    """
    points = grid.points if isinstance(grid, GridSpec) else np.asarray(grid, dtype=float)
    if points.ndim != 1 or points.size < 1:
        raise DegenerateGridError("grid must be a non-empty 1-d sequence")
    inc = _increments(points)
    if np.any(inc <= 0):
        raise DegenerateGridError("grid points must be strictly increasing and positive")
    return float(np.round(inc.max() / inc.min(), 12))


@dataclass(frozen=True, eq=False)
class GridSpec:
    """Sorted interrogation points ``0 < t_1 < ... < t_N = L``."""

    points: np.ndarray
    C_target: float = 1.0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 1 or pts.size < 2:
            raise DegenerateGridError("a grid needs at least two points")
        if not self.C_target >= 1:
            raise InvalidBoundError(f"quasi-uniformity bound must be >= 1, got {self.C_target}")
        c = quasi_uniformity_constant(pts)
        if c > self.C_target:
            raise InvalidBoundError(f"grid has h/min increment {c:.6g} above the bound {self.C_target}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "C_target", float(self.C_target))

    @property
    def N(self) -> int:
        return self.points.size

    @property
    def domain_length(self) -> float:
        return float(self.points[-1])

    @property
    def h(self) -> float:
        return float(_increments(self.points).max())

    @property
    def C_actual(self) -> float:
        return quasi_uniformity_constant(self.points)

    @classmethod
    def from_points(cls, points) -> GridSpec:
        pts = np.asarray(points, dtype=float)
        return cls(pts, max(1.0, quasi_uniformity_constant(pts)))


def uniform_grid(N: int, L: float) -> GridSpec:
    return make_quasi_uniform_grid(N, L, 1.0, 0)


def make_quasi_uniform_grid(N: int, L: float, C: float, seed: int) -> GridSpec:
    """Jittered grid on ``(0, L]`` whose increment ratio stays within ``C``.

    Each increment ``L/N`` is scaled by ``exp(u * log C)``, ``u ~ U(-1/2, 1/2)``,
    so it lies in ``[1/sqrt(C), sqrt(C)] * L/N``; the increments are then
    rescaled to sum to ``L``. ``C == 1`` gives the exact uniform grid.
    """
    if not C >= 1:
        raise InvalidBoundError(f"quasi-uniformity bound C must be >= 1, got {C}")
    if N < 2:
        raise DegenerateGridError(f"need N >= 2 grid points, got {N}")
    if not L > 0:
        raise ValidationError(f"domain length must be positive, got {L}")
    log_c = max(0.0, math.log(C) - _LOG_C_MARGIN)
    if log_c == 0.0:
        pts = L * np.arange(1, N + 1) / N
        pts[-1] = L
        return GridSpec(pts, C)
    rng = np.random.default_rng(seed)
    inc = (L / N) * np.exp(rng.uniform(-0.5, 0.5, N) * log_c)
    inc *= L / inc.sum()
    pts = np.cumsum(inc)
    pts[-1] = L
    return GridSpec(pts, C)


@dataclass(frozen=True, eq=False)
class RateReport:
    """Errors against grid size and the fitted line ``log e = slope log N + intercept``."""

    Ns: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    residual: float
    hs: np.ndarray | None = None
    C_actual: np.ndarray | None = None

    def rows(self):
        hs = self.hs if self.hs is not None else np.full(len(self.Ns), np.nan)
        cs = self.C_actual if self.C_actual is not None else np.full(len(self.Ns), np.nan)
        for n, h, c, e in zip(self.Ns, hs, cs, self.errors):
            yield int(n), float(h), float(c), float(e)

    def summary(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "residual": self.residual}


def fit_rate(Ns: Sequence[int], errors: Sequence[float], hs=None, C_actual=None) -> RateReport:
    """Ordinary least squares on ``(log N, log error)``."""
    Ns = np.asarray(Ns, dtype=int)
    errors = np.asarray(errors, dtype=float)
    if Ns.ndim != 1 or Ns.size < 3 or errors.shape != Ns.shape:
        raise ValidationError("need at least three (N, error) pairs")
    for n, e in zip(Ns, errors):
        if not (e > 0 and np.isfinite(e)):
            raise RateUndefinedError(f"error at N={n} is {e!r}; a log-log rate needs positive errors")
    x = np.log(Ns.astype(float))
    y = np.log(errors)
    X = np.column_stack([x, np.ones_like(x)])
    (slope, intercept), *_ = np.linalg.lstsq(X, y, rcond=None)
    res = y - (slope * x + intercept)
    return RateReport(
        Ns,
        errors,
        float(slope),
        float(intercept),
        float(np.sqrt(np.mean(res**2))),
        None if hs is None else np.asarray(hs, dtype=float),
        None if C_actual is None else np.asarray(C_actual, dtype=float),
    )


def per_n_seed(base_seed: int, N: int) -> int:
    return int(base_seed) ^ int(N)


def _grid_error(problem, analytic, config) -> float:
    from .solver import solve

    sol = solve(problem, replace(config, mode="mean", n_draws=0))
    t = sol.grid.points
    exact = np.array([np.atleast_1d(analytic(ti)) for ti in t], dtype=float)
    return float(np.max(np.abs(sol.mean_at(t) - exact)))


def estimate_rate(
    problem,
    analytic: Callable[[float], Sequence[float]],
    Ns: Sequence[int],
    base_config,
    C: float = 1.0,
) -> RateReport:
    """Solve on grids of each size in mean mode and fit the log-log slope.

    The grid for size ``N`` uses seed ``base_config.seed ^ N``. ``J`` follows
    the solver default for each ``N`` unless ``base_config.J_offset`` is set.
    """
    Ns = [int(n) for n in Ns]
    if len(Ns) < 3 or any(b <= a for a, b in zip(Ns, Ns[1:])):
        raise ValidationError("Ns must be strictly increasing with at least three entries")
    errors, hs, cs = [], [], []
    for N in Ns:
        grid = make_quasi_uniform_grid(N, problem.domain_length, C, per_n_seed(base_config.seed, N))
        cfg = replace(base_config, N=N, J=None, grid=grid)
        err = _grid_error(problem, analytic, cfg)
        log.info("N=%d h=%.4g C=%.4g max_error=%.6e", N, grid.h, grid.C_actual, err)
        errors.append(err)
        hs.append(grid.h)
        cs.append(grid.C_actual)
    return fit_rate(Ns, errors, hs, cs)
