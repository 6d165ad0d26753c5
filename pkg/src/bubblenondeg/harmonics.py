"""Zonal spherical harmonics, partial-wave decomposition and Cartesian checks.

Zonal functions on ``S^{N-1}`` depend on ``t = x_1/|x|`` only; the surface
measure reduces to ``|S^{N-2}| (1-t^2)^{(N-3)/2} dt``.  Degree-``k`` zonal
harmonics are Gegenbauer polynomials ``C_k^{(N-2)/2}`` (Chebyshev ``T_k``
when ``N = 2``).
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .bubble import Params, bubble_profile, kernel_prefactor, psi0_profile, psi1_profile
from .radialgrid import RadialField, RadialGrid

__all__ = [
    "ZonalBasis",
    "ModeDecomposition",
    "sphere_area",
    "zonal_value",
    "quadrature",
    "decompose",
    "synthesize",
    "separation_check",
    "cartesian_linearized_residual",
    "decomposition_csv",
]


def sphere_area(n: int) -> float:
    """Surface area of the unit sphere ``S^n`` in ``R^{n+1}``."""
    return 2.0 * math.pi ** ((n + 1) / 2.0) / math.gamma((n + 1) / 2.0)


@dataclass(frozen=True)
class ZonalBasis:
    """Degree-``k`` zonal harmonic on ``S^{N-1}`` with unit L2 norm."""

    N: int
    k: int
    normalization: float = field(init=False)

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 2:
            raise ValueError("N must be an integer >= 2")
        if int(self.k) != self.k or self.k < 0:
            raise ValueError("k must be a non-negative integer")
        object.__setattr__(self, "normalization", 1.0 / math.sqrt(sphere_area(self.N - 2) * self._h()))

    @property
    def nu(self) -> float:
        return (self.N - 2) / 2.0

    @property
    def eigenvalue(self) -> float:
        return float(self.k * (self.N - 2 + self.k))

    def _h(self) -> float:
        # int_{-1}^{1} P_k(t)^2 (1-t^2)^{nu-1/2} dt for the unnormalized polynomial
        k, nu = self.k, self.nu
        if self.N == 2:
            return math.pi if k == 0 else math.pi / 2.0
        return (math.pi * 2.0 ** (1.0 - 2.0 * nu) * math.gamma(k + 2.0 * nu)
                / (math.factorial(k) * (k + nu) * math.gamma(nu) ** 2))

    def _poly(self, k: int, nu: float, t, order: int = 0):
        if k < 0:
            return np.zeros_like(t)
        if self.N == 2 and nu == 0.0:
            if order == 0:
                return special.eval_chebyt(k, t)
            # T_k' = k U_{k-1},  U_{k-1} = C_{k-1}^{1}
            return k * self._poly(k - 1, 1.0, t, order - 1) if k > 0 else np.zeros_like(t)
        if order == 0:
            return special.eval_gegenbauer(k, nu, t)
        return 2.0 * nu * self._poly(k - 1, nu + 1.0, t, order - 1) if k > 0 else np.zeros_like(t)

    def value(self, t):
        t = np.asarray(t, dtype=float)
        return self.normalization * self._poly(self.k, self.nu, t)

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        return self.normalization * self._poly(self.k, self.nu, t, 1)

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        return self.normalization * self._poly(self.k, self.nu, t, 2)

    def laplace_beltrami(self, t):
        """``Delta_S`` of the zonal function: ``(1-t^2) f'' - (N-1) t f'``."""
        t = np.asarray(t, dtype=float)
        return (1.0 - t * t) * self.d2(t) - (self.N - 1) * t * self.d1(t)


def zonal_value(basis: ZonalBasis, t):
    t = np.asarray(t, dtype=float)
    if np.any(np.abs(t) > 1.0 + 1e-15):
        raise ValueError("zonal argument must satisfy |t| <= 1")
    return basis.value(np.clip(t, -1.0, 1.0))


def quadrature(N: int, degree: int):
    """Nodes and weights with ``sum w f(t) = int_{S^{N-1}} f(t) dsigma``.

    Exact for polynomials in ``t`` up to ``degree + 1``.
    """
    n = degree // 2 + 1
    if N == 2:
        x, w = special.roots_chebyt(n)
    elif N == 3:
        x, w = special.roots_legendre(n)
    else:
        x, w = special.roots_gegenbauer(n, (N - 2) / 2.0)
    return x, w * sphere_area(N - 2)


@dataclass(eq=False)
class ModeDecomposition:
    K: int
    components: list
    truncation_energy: np.ndarray
    degree: int

    @property
    def max_truncation(self) -> float:
        return float(np.max(self.truncation_energy))

    def coefficients(self) -> np.ndarray:
        """Array of shape ``(n_nodes, K+1)``."""
        return np.stack([c.values for c in self.components], axis=1)


def decompose(params: Params | int, phi, K: int, grid: RadialGrid,
              degree: int | None = None) -> ModeDecomposition:
    """``psi_k(r) = int_{S^{N-1}} phi(r, t) Y_k(t)`` at every grid node.

    ``phi(r, t)`` is called with broadcastable arrays.
    """
    N = params if isinstance(params, int) else params.N
    if int(K) != K or K < 0:
        raise ValueError("K must be a non-negative integer")
    degree = 2 * K + 8 if degree is None else int(degree)
    if K > degree / 2:
        raise ValueError(f"quadrature degree {degree} too low for K = {K}")
    x, w = quadrature(N, degree)
    r = grid.nodes
    vals = np.asarray(phi(r[:, None], x[None, :]), dtype=float)
    vals = np.broadcast_to(vals, (r.size, x.size))
    if not np.all(np.isfinite(vals)):
        raise ValueError("phi is not finite on the grid")
    comps = []
    energy = np.zeros(r.size)
    for k in range(K + 1):
        Y = ZonalBasis(N, k).value(x)
        ck = vals @ (w * Y)
        energy += ck ** 2
        comps.append(RadialField(grid, ck, tag=f"psi_{k}"))
    total = (vals ** 2) @ w
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(total > 0, 1.0 - energy / np.where(total > 0, total, 1.0), 0.0)
    return ModeDecomposition(K=int(K), components=comps, truncation_energy=np.maximum(frac, 0.0),
                             degree=degree)


def synthesize(N: int, components, r, t):
    """``sum_k psi_k(r) Y_k(t)`` from radial components (fields or callables)."""
    r = np.asarray(r, dtype=float)
    t = np.asarray(t, dtype=float)
    out = 0.0
    for k, c in enumerate(components):
        val = c.value(r) if hasattr(c, "value") else c(r)
        out = out + np.asarray(val) * ZonalBasis(N, k).value(t)
    return out


def _directions(N: int, n: int = 7) -> np.ndarray:
    """Fixed unit vectors: the axis, its opposite, and tilted directions."""
    dirs = [np.eye(N)[0], -np.eye(N)[0]]
    rng = np.random.default_rng(12345)
    while len(dirs) < n:
        v = rng.standard_normal(N)
        dirs.append(v / np.linalg.norm(v))
    return np.array(dirs)


def separation_check(params: Params, psi, k: int, r: float, h: float = 1e-3,
                     n_dirs: int = 7) -> tuple:
    """Finite-difference check of the separated Laplacian, radial derivative and
    radial Hessian of ``phi = psi(|x|) Y_k(x_1/|x|)``.

    Returns the maximum absolute defects ``(laplacian, x.grad, x.H.x)`` over
    sample points on the sphere of radius ``r``.
    """
    N = params.N
    Y = ZonalBasis(N, k)
    lam = Y.eigenvalue

    def phi(X):
        rr = np.linalg.norm(X, axis=-1)
        return psi.value(rr) * Y.value(np.clip(X[..., 0] / rr, -1.0, 1.0))

    E = np.eye(N) * h
    d_lap, d_grad, d_hess = 0.0, 0.0, 0.0
    for u in _directions(N, n_dirs):
        x = r * u
        f0 = phi(x)
        fp = np.array([phi(x + E[i]) for i in range(N)])
        fm = np.array([phi(x - E[i]) for i in range(N)])
        grad = (fp - fm) / (2 * h)
        lap = float(np.sum(fp - 2 * f0 + fm) / h ** 2)
        hess = 0.0
        for i in range(N):
            hess += (fp[i] - 2 * f0 + fm[i]) / h ** 2 * x[i] * x[i]
            for j in range(i + 1, N):
                mixed = (phi(x + E[i] + E[j]) - phi(x + E[i] - E[j])
                         - phi(x - E[i] + E[j]) + phi(x - E[i] - E[j])) / (4 * h * h)
                hess += 2.0 * mixed * x[i] * x[j]
        yk = float(Y.value(u[0]))
        v, d1, d2 = float(psi.value(r)), float(psi.d1(r)), float(psi.d2(r))
        lap_exact = yk * (d2 + (N - 1) * d1 / r) - lam * v * yk / r ** 2
        d_lap = max(d_lap, abs(lap - lap_exact))
        d_grad = max(d_grad, abs(float(grad @ x) - d1 * r * yk))
        d_hess = max(d_hess, abs(hess - d2 * r * r * yk))
    return d_lap, d_grad, d_hess


def _closed_form(params: Params, which):
    if callable(which):
        return which
    N, p = params.N, params.p
    if which == "Z0":
        prof, pre = psi0_profile(params), kernel_prefactor(params, "Z0")
        return lambda X, r: pre * prof.value(r)
    if which == "Z1":
        prof, pre = psi1_profile(params), kernel_prefactor(params, "Z1")
        return lambda X, r: pre * X[0] / r * prof.value(r)
    if which == "U":
        prof = bubble_profile(params)
        return lambda X, r: prof.value(r)
    raise ValueError(f"unknown field {which!r}")


def cartesian_linearized_residual(params: Params, which="Z1", h: float = 0.1,
                                  shell=(0.5, 3.0)) -> float:
    """Max over lattice points in the shell of the central-difference residual of

        |x|^2 Lap phi + (p-2) x.H.x + (p-2) N / (1+rho) x.grad phi + gamma rho/(1+rho)^2 phi

    divided by the max of the potential term.  ``which`` is ``"Z0"``,
    ``"Z1"``, ``"U"`` or a callable ``f(X, r)`` with ``X`` of shape ``(3, ...)``.
    """
    N, p = params.N, params.p
    if N != 3:
        raise ValueError("Cartesian checks are fixed at N = 3")
    lo, hi = map(float, shell)
    if not (0 <= lo < hi):
        raise ValueError("need 0 <= inner radius < outer radius")
    if lo <= 0 and p > 2:
        raise ValueError("shell touches the origin where the potential is singular (p > 2)")
    f = _closed_form(params, which)
    n = int(math.ceil((hi + h) / h)) + 1
    ax = h * np.arange(-n, n + 1)
    X = np.array(np.meshgrid(ax, ax, ax, indexing="ij"))
    R = np.sqrt(np.sum(X ** 2, axis=0))
    with np.errstate(divide="ignore", invalid="ignore"):
        F = f(X, np.where(R > 0, R, np.nan))
    F = np.asarray(F, dtype=float)
    c = (slice(1, -1),) * 3

    def sh(axis, s):
        idx = [slice(1, -1)] * 3
        idx[axis] = slice(1 + s, F.shape[axis] - 1 + s if F.shape[axis] - 1 + s != 0 else None)
        return tuple(idx)

    def sh2(a, sa, b, sb):
        idx = [slice(1, -1)] * 3
        for axis, s in ((a, sa), (b, sb)):
            idx[axis] = slice(1 + s, F.shape[axis] - 1 + s if F.shape[axis] - 1 + s != 0 else None)
        return tuple(idx)

    Fc = F[c]
    Xc = X[(slice(None),) + c]
    Rc = R[c]
    mask = (Rc >= lo) & (Rc <= hi)
    if np.count_nonzero(mask) < 1000:
        raise ValueError("shell contains fewer than 1000 lattice points; decrease h")
    grad = [(F[sh(i, 1)] - F[sh(i, -1)]) / (2 * h) for i in range(3)]
    second = [(F[sh(i, 1)] - 2 * Fc + F[sh(i, -1)]) / h ** 2 for i in range(3)]
    lap = sum(second)
    xgrad = sum(Xc[i] * grad[i] for i in range(3))
    xhx = sum(Xc[i] ** 2 * second[i] for i in range(3))
    for i in range(3):
        for j in range(i + 1, 3):
            mixed = (F[sh2(i, 1, j, 1)] - F[sh2(i, 1, j, -1)]
                     - F[sh2(i, -1, j, 1)] + F[sh2(i, -1, j, -1)]) / (4 * h * h)
            xhx = xhx + 2.0 * Xc[i] * Xc[j] * mixed
    rho = Rc ** params.m
    pot = params.gamma * rho / (1.0 + rho) ** 2 * Fc
    res = Rc ** 2 * lap + (p - 2) * xhx + (p - 2) * N / (1.0 + rho) * xgrad + pot
    return float(np.max(np.abs(res[mask])) / np.max(np.abs(pot[mask])))


def decomposition_csv(decomp: ModeDecomposition) -> str:
    """CSV rows ``r,k,psi_k`` sorted by ``(r, k)``."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\r\n")
    wr.writerow(["r", "k", "psi_k"])
    r = decomp.components[0].r
    for i, ri in enumerate(r):
        for k, c in enumerate(decomp.components):
            wr.writerow([repr(float(ri)), k, repr(float(c.values[i]))])
    return buf.getvalue()
