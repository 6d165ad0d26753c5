"""Closed-form extremal profile of the critical p-Laplace equation.

The bubble is

    U(r) = a0 * (1 + r**m) ** (-(N - p) / p),   m = p / (p - 1),

with amplitude ``a0 = alpha ** ((N - p) / p)``.  Everything here is
evaluated from ``rho = r**m`` computed once per sample, so nothing cancels
near the origin when ``p < 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

__all__ = [
    "Params",
    "ProfileSample",
    "BubbleFamily",
    "RadialProfile",
    "WeightReport",
    "make_params",
    "profile",
    "family_value",
    "kernel_prefactor",
    "kernel_profile",
    "bubble_profile",
    "psi0_profile",
    "psi1_profile",
    "plaplace_residual",
    "weight_comparison",
]


@dataclass(frozen=True)
class Params:
    """A problem instance ``(N, p)`` with its derived constants."""

    N: int
    p: float
    pstar: float
    alpha: float
    gamma: float
    cnp: float

    @property
    def m(self) -> float:
        """Exponent of ``rho = r**m``."""
        return self.p / (self.p - 1.0)

    @property
    def amplitude(self) -> float:
        """``U(0) = alpha**((N-p)/p)``."""
        return self.alpha ** ((self.N - self.p) / self.p)

    @property
    def sigma(self) -> float:
        """Radial stiffness factor ``p - 1`` of the linearized operator."""
        return self.p - 1.0

    def lambda_k(self, k: int) -> float:
        return float(k * (self.N + k - 2))

    def asdict(self) -> dict:
        return {
            "N": self.N,
            "p": self.p,
            "pstar": self.pstar,
            "alpha": self.alpha,
            "gamma": self.gamma,
            "cnp": self.cnp,
        }


def make_params(N: int, p: float) -> Params:
    """Build a validated instance; requires ``N >= 2`` and ``1 < p < N``."""
    if int(N) != N or N < 2:
        raise ValueError(f"dimension N must be an integer >= 2, got {N!r}")
    N = int(N)
    p = float(p)
    if not math.isfinite(p):
        raise ValueError(f"exponent p must be finite, got {p!r}")
    if not 1.0 < p < N:
        raise ValueError(f"need 1 < p < N, got N={N}, p={p}")
    pstar = N * p / (N - p)
    alpha = N ** (1.0 / p) * ((N - p) / (p - 1.0)) ** ((p - 1.0) / p)
    gamma = N * (N * p - N + p) / (p - 1.0)
    cnp = alpha ** ((N - p) / p) * (N - p) / (p - 1.0)
    return Params(N=N, p=p, pstar=pstar, alpha=alpha, gamma=gamma, cnp=cnp)


@dataclass(frozen=True)
class BubbleFamily:
    delta: float = 1.0
    xi: tuple = ()

    def __post_init__(self):
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ValueError(f"scale delta must be positive, got {self.delta!r}")


class RadialProfile:
    """Profile ``scale * r**a * (c0 + c1*rho) * (1 + rho)**beta``.

    Covers the bubble and both kernel profiles; ``d1`` and ``d2`` are the
    exact radial derivatives.
    """

    def __init__(self, params: Params, a: float, c0: float, c1: float,
                 beta: float, scale: float = 1.0, name: str = ""):
        self.params = params
        self.a = float(a)
        self.c0 = float(c0)
        self.c1 = float(c1)
        self.beta = float(beta)
        self.scale = float(scale)
        self.name = name

    def _parts(self, r):
        r = np.asarray(r, dtype=float)
        m = self.params.m
        rho = r ** m
        opr = 1.0 + rho
        P = self.c0 + self.c1 * rho
        q = P * opr ** self.beta
        dq = self.c1 * opr ** self.beta + self.beta * P * opr ** (self.beta - 1.0)
        d2q = (2.0 * self.beta * self.c1 * opr ** (self.beta - 1.0)
               + self.beta * (self.beta - 1.0) * P * opr ** (self.beta - 2.0))
        return r, rho, q, dq, d2q

    def __call__(self, r):
        return self.value(r)

    def value(self, r):
        r, rho, q, _, _ = self._parts(r)
        return self.scale * r ** self.a * q

    def d1(self, r):
        r, rho, q, dq, _ = self._parts(r)
        m, a = self.params.m, self.a
        with np.errstate(divide="ignore", invalid="ignore"):
            # r**(a-1) * (a*q + m*rho*q'), with rho_r = m*rho/r
            return self.scale * r ** (a - 1.0) * (a * q + m * rho * dq)

    def d2(self, r):
        r, rho, q, dq, d2q = self._parts(r)
        m, a = self.params.m, self.a
        with np.errstate(divide="ignore", invalid="ignore"):
            inner = (a * (a - 1.0) * q
                     + 2.0 * a * m * rho * dq
                     + (m * rho) ** 2 * d2q + m * (m - 1.0) * rho * dq)
            return self.scale * r ** (a - 2.0) * inner

    @property
    def exponent_0(self) -> float:
        """Leading power as r -> 0."""
        return self.a if self.c0 != 0 else self.a + self.params.m

    @property
    def exponent_inf(self) -> float:
        """Leading power as r -> infinity."""
        lead = 1.0 if self.c1 != 0 else 0.0
        return self.a + self.params.m * (self.beta + lead)

    def __repr__(self):
        return f"RadialProfile({self.name or 'anonymous'}, {self.params.N}, {self.params.p})"


def bubble_profile(params: Params) -> RadialProfile:
    N, p = params.N, params.p
    return RadialProfile(params, 0.0, 1.0, 0.0, -(N - p) / p,
                         scale=params.amplitude, name="U")


def psi0_profile(params: Params) -> RadialProfile:
    """Unnormalized scaling kernel ``(p-1-rho)(1+rho)**(-N/p)``."""
    N, p = params.N, params.p
    return RadialProfile(params, 0.0, p - 1.0, -1.0, -N / p, name="psi0")


def psi1_profile(params: Params) -> RadialProfile:
    """Unnormalized translation kernel ``r**(1/(p-1)) (1+rho)**(-N/p)``."""
    N, p = params.N, params.p
    return RadialProfile(params, 1.0 / (p - 1.0), 1.0, 0.0, -N / p, name="psi1")


@dataclass
class ProfileSample:
    r: np.ndarray
    U: np.ndarray
    Uprime: np.ndarray
    Usecond: np.ndarray
    W: np.ndarray
    V: np.ndarray
    valid: bool = True


def profile(params: Params, r) -> ProfileSample:
    """Evaluate U, its derivatives, the weight ``|U'|**(p-2)`` and the potential.

    ``r = 0`` is accepted.  There ``Uprime`` and ``Usecond`` are right limits
    and the sample is flagged invalid if ``W`` or ``Usecond`` is not finite
    (``W(0)`` diverges for ``p < 2``, ``U''(0)`` for ``p > 2``).
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0) or np.any(~np.isfinite(r)):
        raise ValueError("radius must be finite and non-negative")
    N, p = params.N, params.p
    prof = bubble_profile(params)
    U = prof.value(r)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        Up = np.where(r > 0, prof.d1(r), 0.0)
        Upp = prof.d2(r)
        W = weight(params, r)
    at0 = r == 0
    if np.any(at0):
        # right limit of U'' ~ -cnp/(p-1) r^{(2-p)/(p-1)}
        e = (2.0 - p) / (p - 1.0)
        lim = 0.0 if e > 0 else (-params.cnp / (p - 1.0) if e == 0 else -np.inf)
        Upp = np.where(at0, lim, Upp)
    V = (params.pstar - 1.0) * U ** (params.pstar - 2.0)
    valid = bool(np.all(np.isfinite(W)) and np.all(np.isfinite(Upp)))
    return ProfileSample(r=r, U=U, Uprime=Up, Usecond=Upp, W=W, V=V, valid=valid)


def weight(params: Params, r):
    """``|U'(r)|**(p-2)`` from its closed form."""
    N, p = params.N, params.p
    r = np.asarray(r, dtype=float)
    rho = r ** params.m
    with np.errstate(divide="ignore"):
        return (params.cnp ** (p - 2.0) * r ** ((p - 2.0) / (p - 1.0))
                * (1.0 + rho) ** (-N * (p - 2.0) / p))


def weight_logderiv(params: Params, r):
    """``W'(r)/W(r)``."""
    N, p = params.N, params.p
    r = np.asarray(r, dtype=float)
    rho = r ** params.m
    return (p - 2.0) / ((p - 1.0) * r) * (1.0 - N * rho / (1.0 + rho))


def potential(params: Params, r):
    """``U**(p*-2)`` (the mass weight, without the ``p*-1`` factor)."""
    U = bubble_profile(params).value(r)
    return U ** (params.pstar - 2.0)


def family_value(params: Params, fam: BubbleFamily, x):
    """``delta**(-(N-p)/p) U(|x - xi| / delta)`` at points ``x`` (last axis = coordinates)."""
    x = np.asarray(x, dtype=float)
    xi = np.zeros(x.shape[-1] if x.ndim else 1) if len(fam.xi) == 0 else np.asarray(fam.xi, float)
    if x.ndim == 0:
        x = x[None]
    dist = np.linalg.norm(x - xi, axis=-1)
    N, p = params.N, params.p
    return fam.delta ** (-(N - p) / p) * bubble_profile(params).value(dist / fam.delta)


def kernel_prefactor(params: Params, which: str) -> float:
    N, p = params.N, params.p
    if which == "Z0":
        return (N - p) / (p * (p - 1.0)) * params.amplitude
    if which == "Z1":
        return (N - p) / (p - 1.0) * params.amplitude
    raise ValueError(f"unknown kernel {which!r}; expected 'Z0' or 'Z1'")


def kernel_profile(params: Params, which: str, r):
    """Radial part of Z0 or Z1 including its prefactor.

    Returns ``(values, prefactor)`` so callers can renormalize.
    """
    pref = kernel_prefactor(params, which)
    prof = psi0_profile(params) if which == "Z0" else psi1_profile(params)
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("radius must be non-negative")
    return pref * prof.value(r), pref


def plaplace_residual(params: Params, r, fam: BubbleFamily | None = None,
                      form: str = "flux"):
    """Relative residual of ``-Delta_p U_delta = U_delta**(p*-1)`` at radii ``r``.

    ``form="flux"`` differentiates the closed-form flux
    ``r**(N-1) |U'|**(p-2) U'``; ``form="expanded"`` uses the product rule
    with ``U''`` and loses digits once ``r**m`` is large.
    """
    fam = fam or BubbleFamily()
    N, p = params.N, params.p
    d = fam.delta
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise ValueError("residual needs r > 0")
    s = r / d
    rho = s ** params.m
    u_scale = d ** (-(N - p) / p)
    rhs = (u_scale * bubble_profile(params).value(s)) ** (params.pstar - 1.0)
    if form == "flux":
        # d/ds [s**(N-1)|U'|**(p-2)U'] = -cnp**(p-1) N s**(N-1) (1+rho)**(-N(p-1)/p - 1)
        dflux_s = (-params.cnp ** (p - 1.0) * N * s ** (N - 1)
                   * (1.0 + rho) ** (-N * (p - 1.0) / p - 1.0))
        # U_delta'(r) = delta**(-N/p) U'(s); r**(N-1) = delta**(N-1) s**(N-1); d/dr = d/ds / delta
        dflux_r = d ** (-N * (p - 1.0) / p + N - 2.0) * dflux_s
        lhs = -r ** (1.0 - N) * dflux_r
    elif form == "expanded":
        prof = bubble_profile(params)
        up = d ** (-N / p) * prof.d1(s)
        upp = d ** (-N / p - 1.0) * prof.d2(s)
        w = np.abs(up) ** (p - 2.0)
        lhs = -w * ((N - 1) * up / r + (p - 1.0) * upp)
    else:
        raise ValueError(f"unknown form {form!r}")
    return (lhs - rhs) / rhs


@dataclass
class WeightReport:
    kind: str
    r_range: tuple
    sup: float
    arg_sup: float
    inf: float
    arg_inf: float
    verdict: str
    details: dict = field(default_factory=dict)


def _extremize(f: Callable, lo: float, hi: float, per_decade: int, maximize: bool):
    decades = max(math.log10(hi / lo), 1e-12)
    n = max(int(math.ceil(per_decade * decades)) + 1, 8)
    t = np.linspace(math.log(lo), math.log(hi), n)
    vals = f(np.exp(t))
    i = int(np.argmax(vals) if maximize else np.argmin(vals))
    best_t, best = t[i], vals[i]
    if 0 < i < n - 1:
        sign = -1.0 if maximize else 1.0
        res = optimize.minimize_scalar(lambda u: sign * float(f(np.exp(u))),
                                       bounds=(t[i - 1], t[i + 1]), method="bounded",
                                       options={"xatol": 1e-12})
        if res.fun < sign * best:
            best_t, best = res.x, sign * res.fun
    return float(best), float(math.exp(best_t))


def weight_comparison(params: Params, kind: str, r_range=(1e-4, 1e4),
                      per_decade: int = 64) -> WeightReport:
    """Extremize the ratios behind the pointwise weight comparisons.

    kind:
      ``ckn_weight_22``  |x|**(N(2-p)/p) over |x|**((p-2)/(p-1)) (1+rho)**(-N(p-2)/p); needs p < 2
      ``exterior_27``    |x|**((N-p)/(p-1)) U and |x|**((N-1)/(p-1)) |U'|
      ``annulus_212``    inf of the weight on an annulus against its dyadic lower bound
    """
    N, p = params.N, params.p
    lo, hi = map(float, r_range)
    if not (0 < lo <= hi < math.inf):
        raise ValueError(f"range must lie in (0, inf), got {r_range!r}")
    m = params.m

    if kind == "ckn_weight_22":
        if p >= 2:
            raise ValueError("ckn_weight_22 comparison only applies for p < 2")
        e_num = N * (2.0 - p) / p

        def ratio(r):
            return r ** (e_num - (p - 2.0) / (p - 1.0)) * (1.0 + r ** m) ** (N * (p - 2.0) / p)

        e0 = e_num - (p - 2.0) / (p - 1.0)
        einf = e0 + N * (p - 2.0) / (p - 1.0)
        sup, arg_sup = _extremize(ratio, lo, hi, per_decade, True)
        inf, arg_inf = _extremize(ratio, lo, hi, per_decade, False)
        bounded = e0 >= 0 and einf <= 0 and math.isfinite(sup)
        return WeightReport(kind, (lo, hi), sup, arg_sup, inf, arg_inf,
                            "bounded" if bounded else "unbounded",
                            {"exponent_0": e0, "exponent_inf": einf})

    if kind == "exterior_27":
        prof = bubble_profile(params)

        def g_u(r):
            return r ** ((N - p) / (p - 1.0)) * prof.value(r)

        def g_du(r):
            return r ** ((N - 1.0) / (p - 1.0)) * np.abs(prof.d1(r))

        c2, at2 = _extremize(g_u, lo, hi, per_decade, True)
        c1, at1 = _extremize(g_u, lo, hi, per_decade, False)
        c4, at4 = _extremize(g_du, lo, hi, per_decade, True)
        c3, at3 = _extremize(g_du, lo, hi, per_decade, False)
        ok = all(math.isfinite(c) and c > 0 for c in (c1, c2, c3, c4))
        return WeightReport(kind, (lo, hi), c2, at2, c1, at1,
                            "bounded" if ok else "unbounded",
                            {"c1": c1, "c2": c2, "c3": c3, "c4": c4,
                             "arg_c3": at3, "arg_c4": at4,
                             "limit_U": params.amplitude, "limit_dU": params.cnp})

    if kind == "annulus_212":
        def w(r):
            return weight(params, r)

        inf, arg_inf = _extremize(w, lo, hi, per_decade, False)
        sup, arg_sup = _extremize(w, lo, hi, per_decade, True)
        bound = lo ** ((p - 2.0) / (p - 1.0)) * (1.0 + lo ** m) ** (-N * (p - 2.0) / p)
        c = inf / bound
        ok = math.isfinite(c) and c > 0
        return WeightReport(kind, (lo, hi), sup, arg_sup, inf, arg_inf,
                            "bounded" if ok else "unbounded",
                            {"lower_bound_shape": bound, "constant": c})

    raise ValueError(f"unknown comparison kind {kind!r}")
