"""Numerical verification of the nondegeneracy of the critical p-Laplace bubble."""

__version__ = "0.1.0"

from .bubble import BubbleFamily, Params, make_params  # noqa: E402
from .radialgrid import RadialField, RadialGrid, build_grid  # noqa: E402

__all__ = ["__version__", "BubbleFamily", "Params", "make_params", "RadialField",
           "RadialGrid", "build_grid"]
