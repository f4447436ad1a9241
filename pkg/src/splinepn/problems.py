"""Built-in scalar ODEs with closed-form solutions."""

from __future__ import annotations

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .solver import OdeProblem

__all__ = ["BuiltinProblem", "CATALOG", "make_problem", "analytic_solution"]


@dataclass(frozen=True)
class BuiltinProblem:
    name: str
    n_theta: int
    field: Callable
    solution: Callable  # (t, theta, u0) -> u(t)
    description: str


def _logistic_solution(t, theta, u0):
    rate, capacity = theta
    if u0 == 0:
        return 0.0 * t
    return capacity / (1.0 + (capacity / u0 - 1.0) * np.exp(-rate * t))


CATALOG = {
    p.name: p
    for p in (
        BuiltinProblem(
            "constant", 0, lambda t, u, th: np.zeros_like(u), lambda t, th, u0: u0 + 0.0 * t, "u_t = 0"
        ),
        BuiltinProblem(
            "linear-decay",
            1,
            lambda t, u, th: -th[0] * u,
            lambda t, th, u0: u0 * np.exp(-th[0] * t),
            "u_t = -theta_1 u",
        ),
        BuiltinProblem(
            "forced", 0, lambda t, u, th: np.ones_like(u), lambda t, th, u0: u0 + t, "u_t = 1"
        ),
        BuiltinProblem(
            "logistic",
            2,
            lambda t, u, th: th[0] * u * (1.0 - u / th[1]),
            _logistic_solution,
            "u_t = theta_1 u (1 - u / theta_2)",
        ),
    )
}


def _lookup(name: str) -> BuiltinProblem:
    try:
        return CATALOG[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(CATALOG)}") from None


def make_problem(name: str, theta, u0, domain_length: float) -> OdeProblem:
    entry = _lookup(name)
    theta = np.atleast_1d(np.asarray(theta, dtype=float)) if entry.n_theta else np.zeros(0)
    if theta.size != entry.n_theta:
        raise ConfigError(f"problem {name!r} takes {entry.n_theta} parameters, got {theta.size}")
    u0 = np.atleast_1d(np.asarray(u0, dtype=float))
    if u0.size != 1:
        raise ConfigError(f"built-in problems are scalar; u0 must have one entry, got {u0.size}")
    return OdeProblem(entry.field, theta, u0, domain_length)


def analytic_solution(problem_name: str, theta, u0) -> Callable[[float], np.ndarray]:
    entry = _lookup(problem_name)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    u0 = float(np.atleast_1d(u0)[0])

    def u(t):
        return np.atleast_1d(entry.solution(np.asarray(t, dtype=float), theta, u0))

    return u
