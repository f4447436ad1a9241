"""Probabilistic ODE solving with B-spline coefficient priors."""

__version__ = "0.1.0"

from .bspline import *  # noqa: E402,F401,F403
from .convergence import *  # noqa: E402,F401,F403
from .errors import *  # noqa: E402,F401,F403
from .gaussian import *  # noqa: E402,F401,F403
from .pde import *  # noqa: E402,F401,F403
from .problems import *  # noqa: E402,F401,F403
from .solver import *  # noqa: E402,F401,F403
