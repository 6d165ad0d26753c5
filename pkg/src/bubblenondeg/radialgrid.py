"""Log-uniform radial grids with composite Gauss quadrature in ``t = log r``."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .bubble import Params, weight

__all__ = [
    "RadialGrid",
    "RadialField",
    "QuadratureError",
    "build_grid",
    "integrate",
    "field_from_profile",
    "weighted_norm",
    "DEFAULT_GRID",
]

DEFAULT_GRID = (1e-6, 1e6, 2048)

_G4_X, _G4_W = np.polynomial.legendre.leggauss(4)
_G2_X, _G2_W = np.polynomial.legendre.leggauss(2)


class QuadratureError(ArithmeticError):
    """Integrand was not finite at a quadrature node."""

    def __init__(self, msg, r=None):
        super().__init__(msg)
        self.r = r


@dataclass(frozen=True, eq=False)
class RadialGrid:
    r_min: float
    r_max: float
    n_cells: int
    t: np.ndarray = field(repr=False)

    @property
    def nodes(self) -> np.ndarray:
        return np.exp(self.t)

    @property
    def h(self) -> float:
        return (self.t[-1] - self.t[0]) / self.n_cells

    def quad_points(self, rule=(_G4_X, _G4_W)):
        """Per-cell Gauss points and weights in ``t``, shapes ``(n_cells, q)``."""
        x, w = rule
        half = 0.5 * np.diff(self.t)[:, None]
        mid = 0.5 * (self.t[1:] + self.t[:-1])[:, None]
        return mid + half * x[None, :], half * w[None, :]

    def __eq__(self, other):
        return (isinstance(other, RadialGrid) and self.r_min == other.r_min
                and self.r_max == other.r_max and self.n_cells == other.n_cells)

    def __hash__(self):
        return hash((self.r_min, self.r_max, self.n_cells))


def build_grid(r_min: float = DEFAULT_GRID[0], r_max: float = DEFAULT_GRID[1],
               n_cells: int = DEFAULT_GRID[2]) -> RadialGrid:
    r_min, r_max = float(r_min), float(r_max)
    if not (0 < r_min < r_max < math.inf):
        raise ValueError(f"need 0 < r_min < r_max, got ({r_min}, {r_max})")
    if int(n_cells) != n_cells or n_cells < 8:
        raise ValueError(f"n_cells must be an integer >= 8, got {n_cells!r}")
    t = np.linspace(math.log(r_min), math.log(r_max), int(n_cells) + 1)
    return RadialGrid(r_min, r_max, int(n_cells), t)


def _apply(f, r):
    vals = np.asarray(f(r), dtype=float)
    if vals.shape != r.shape:
        vals = np.broadcast_to(vals, r.shape)
    bad = ~np.isfinite(vals)
    if np.any(bad):
        raise QuadratureError(f"integrand not finite at r={r[bad].flat[0]:.6g}",
                              r=float(r[bad].flat[0]))
    return vals


def integrate(grid: RadialGrid, f: Callable, with_error: bool = False):
    """``int f(r) dr`` over the grid span.

    The error estimate is the difference against the 2-point Gauss rule on
    the same cells, so it is an overestimate, not a bound.
    """
    tq, wq = grid.quad_points()
    rq = np.exp(tq)
    val = float(np.sum(_apply(f, rq) * rq * wq))
    if not with_error:
        return val
    t2, w2 = grid.quad_points((_G2_X, _G2_W))
    r2 = np.exp(t2)
    coarse = float(np.sum(_apply(f, r2) * r2 * w2))
    return val, abs(val - coarse)


@dataclass(eq=False)
class RadialField:
    """Nodal values of a radial profile on a grid.

    ``profile`` is an optional closed-form (or dense-output) object with
    ``value``/``d1``/``d2``; when present it is used in preference to the
    nodal interpolant.
    """

    grid: RadialGrid
    values: np.ndarray
    profile: Optional[object] = None
    tail_exponent_0: Optional[float] = None
    tail_exponent_inf: Optional[float] = None
    tag: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.t.shape:
            raise ValueError("field values must match the grid nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")
        self._spline = None

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    def _interp(self):
        if self._spline is None:
            self._spline = CubicSpline(self.grid.t, self.values)
        return self._spline

    def value(self, r):
        if self.profile is not None:
            return self.profile.value(r)
        return self._interp()(np.log(r))

    def d1(self, r):
        """``d/dr``; cellwise cubic differentiation in ``t`` without a profile."""
        if self.profile is not None:
            return self.profile.d1(r)
        r = np.asarray(r, dtype=float)
        return self._interp()(np.log(r), 1) / r


def field_from_profile(grid: RadialGrid, prof, tag: str = "") -> RadialField:
    vals = np.asarray(prof.value(grid.nodes), dtype=float)
    return RadialField(grid, vals, profile=prof,
                       tail_exponent_0=getattr(prof, "exponent_0", None),
                       tail_exponent_inf=getattr(prof, "exponent_inf", None),
                       tag=tag or getattr(prof, "name", ""))


def weighted_norm(params: Params, grid: RadialGrid, psi: RadialField, k: int) -> float:
    """Mode-k norm ``(int r^{N-1} W psi'^2 + lambda_k int r^{N-3} W psi^2)^{1/2}``."""
    N = params.N
    lam = params.lambda_k(k)

    def integrand(r):
        w = weight(params, r)
        out = r ** (N - 1) * w * psi.d1(r) ** 2
        if lam > 0:
            out = out + lam * r ** (N - 3) * w * psi.value(r) ** 2
        return out

    return math.sqrt(max(integrate(grid, integrand), 0.0))
