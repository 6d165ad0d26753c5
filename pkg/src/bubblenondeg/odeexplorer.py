"""Direct integration of the mode equations and weighted-space membership.

In ``t = log r`` the mode equation ``L_k psi = 0`` (with general radial
factor ``sigma`` and eigen-parameter ``mu``) reads

    sigma (psi_tt - psi_t) + C(rho) psi_t + (mu g rho / (1+rho)^2 - lambda_k) psi = 0,

    C(rho) = sigma [(N-1) + (p-2)/(p-1) (1 - N rho/(1+rho))],   g = gamma / (p* - 1).

For ``sigma = p - 1`` and ``mu = p* - 1`` this is the kernel equation.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from .bubble import Params, psi0_profile, psi1_profile, weight
from .modeop import asymptotic_exponent, lagrange_identity_check
from .radialgrid import RadialField, RadialGrid, build_grid, integrate

__all__ = [
    "AsymptoticFit",
    "Membership",
    "MembershipVerdict",
    "ODEIntegrationError",
    "ODEProfile",
    "integrate_mode_ode",
    "second_solution",
    "SecondSolution",
    "fit_tail_exponent",
    "membership",
    "truncated_norm_growth",
    "sturm_comparison",
    "fits_json",
]


class ODEIntegrationError(RuntimeError):
    def __init__(self, msg, r_final=None):
        super().__init__(msg)
        self.r_final = r_final


@dataclass
class AsymptoticFit:
    exponent: float
    coefficient: float
    window: tuple
    regression_residual: float

    def as_record(self) -> dict:
        d = asdict(self)
        d["window"] = list(self.window)
        return d


class Membership(str, Enum):
    MEMBER = "MEMBER"
    NOT_MEMBER = "NOT_MEMBER"
    BORDERLINE = "BORDERLINE"


@dataclass
class MembershipVerdict:
    member: Membership
    failing_term: Optional[str]
    margin: float
    terms: list = field(default_factory=list)

    @property
    def is_member(self) -> bool:
        return self.member is Membership.MEMBER


class ODEProfile:
    """Dense-output solution of the mode ODE exposing ``value/d1/d2``."""

    def __init__(self, params: Params, k: int, sigma: float, mu: float, sol, t_span):
        self.params = params
        self.k = k
        self.sigma = sigma
        self.mu = mu
        self._sol = sol
        self.t_span = (min(t_span), max(t_span))
        self.name = f"ode_k{k}"

    def _state(self, r):
        t = np.log(np.asarray(r, dtype=float))
        lo, hi = self.t_span
        if np.any(t < lo - 1e-12) or np.any(t > hi + 1e-12):
            raise ValueError("radius outside the integrated range")
        y = self._sol(np.clip(t, lo, hi).ravel())
        return t, y[0].reshape(t.shape), y[1].reshape(t.shape)

    def value(self, r):
        return self._state(r)[1]

    __call__ = value

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        return self._state(r)[2] / r

    def d2(self, r):
        r = np.asarray(r, dtype=float)
        t, y, yt = self._state(r)
        ytt = _rhs(self.params, self.k, self.sigma, self.mu)(t, np.array([y, yt]))[1]
        return (ytt - yt) / r ** 2


def _coefficients(params: Params, sigma: float, mu: float):
    N, p = params.N, params.p
    g = mu * params.gamma / (params.pstar - 1.0)

    def coeffs(t):
        rho = np.exp(params.m * t)
        C = sigma * ((N - 1) + (p - 2.0) / (p - 1.0) * (1.0 - N * rho / (1.0 + rho)))
        pot = g * rho / (1.0 + rho) ** 2
        return C, pot

    return coeffs


def _rhs(params: Params, k: int, sigma: float, mu: float):
    lam = params.lambda_k(k)
    coeffs = _coefficients(params, sigma, mu)

    def f(t, y):
        C, pot = coeffs(t)
        ytt = y[1] - (C * y[1] + (pot - lam) * y[0]) / sigma
        return np.array([y[1], ytt])

    return f


@dataclass(eq=False)
class ModeSolution:
    field: RadialField
    profile: ODEProfile


def integrate_mode_ode(params: Params, k: int, init, direction: str = "outward",
                       r_stop: float = 1e3, *, sigma: float | None = None,
                       mu: float | None = None, rtol: float = 1e-10, max_step: float = 0.02,
                       cells_per_decade: int = 64) -> ModeSolution:
    """Integrate the mode-``k`` ODE from ``init = (r0, psi(r0), psi'(r0))``.

    Defaults to the kernel equation (``sigma = p - 1``, ``mu = p* - 1``).
    ``max_step`` bounds the step in ``t``; it keeps the dense interpolant
    (used for derivatives between steps) as accurate as the steps themselves.
    """
    r0, y0, dy0 = map(float, init)
    if r0 <= 0:
        raise ValueError("start radius must be positive")
    if direction == "outward" and not r_stop > r0:
        raise ValueError("outward integration needs r_stop > r0")
    if direction == "inward" and not (0 < r_stop < r0):
        raise ValueError("inward integration needs 0 < r_stop < r0")
    if direction not in ("outward", "inward"):
        raise ValueError(f"unknown direction {direction!r}")
    sigma = params.p - 1.0 if sigma is None else float(sigma)
    mu = params.pstar - 1.0 if mu is None else float(mu)
    t0, t1 = math.log(r0), math.log(r_stop)
    scale = max(abs(y0), abs(r0 * dy0), 1e-300)
    sol = solve_ivp(_rhs(params, k, sigma, mu), (t0, t1), [y0, r0 * dy0], method="DOP853",
                    rtol=rtol, atol=1e-16 * scale, dense_output=True,
                    max_step=max_step)
    if sol.status != 0:
        raise ODEIntegrationError(f"integration stopped: {sol.message}",
                                  r_final=float(math.exp(sol.t[-1])))
    prof = ODEProfile(params, k, sigma, mu, sol.sol, (t0, t1))
    lo, hi = sorted((r0, r_stop))
    decades = math.log10(hi / lo)
    grid = build_grid(lo, hi, max(8, int(math.ceil(cells_per_decade * decades))))
    fld = RadialField(grid, prof.value(grid.nodes), profile=prof, tag=f"ode_k{k}")
    return ModeSolution(fld, prof)


def fit_tail_exponent(fld, window) -> AsymptoticFit:
    """Least-squares slope of ``log|f|`` against ``log r`` on the window nodes."""
    lo, hi = map(float, window)
    r = fld.r if hasattr(fld, "r") else fld.grid.nodes
    vals = fld.values
    sel = (r >= lo * (1 - 1e-12)) & (r <= hi * (1 + 1e-12))
    if np.count_nonzero(sel) < 3:
        raise ValueError("fewer than 3 nodes inside the fit window")
    v = vals[sel]
    if np.any(v == 0) or (np.any(v > 0) and np.any(v < 0)):
        raise ValueError("field changes sign (or vanishes) inside the fit window")
    x = np.log(r[sel])
    y = np.log(np.abs(v))
    X = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return AsymptoticFit(exponent=float(coef[0]),
                         coefficient=float(np.sign(v[0]) * math.exp(coef[1])),
                         window=(lo, hi),
                         regression_residual=float(np.sqrt(np.mean(resid ** 2))))


def membership(params: Params, k: int, a: float, b: float,
               a_deriv: float | None = None, b_deriv: float | None = None) -> MembershipVerdict:
    """Decide finiteness of the mode-``k`` weighted norm of ``psi ~ r^a`` (0), ``r^b`` (inf).

    Derivative powers default to ``a - 1`` and ``b - 1``; a profile that is
    regular at the origin (``a = 0``) is smooth in ``rho`` there, so its
    derivative power defaults to ``1/(p-1)``.  At infinity the zero-order
    term is always checked: for ``k = 0`` it is the exterior Hardy weight
    ``r^{N-3} W`` behind the embedding of the weighted space.
    """
    N, p = params.N, params.p
    if not (math.isfinite(a) and math.isfinite(b)):
        raise ValueError("exponents must be finite")
    w0 = (p - 2.0) / (p - 1.0)
    winf = -(N - 1.0) * (p - 2.0) / (p - 1.0)
    if a_deriv is None:
        a_deriv = a - 1.0 if a != 0 else 1.0 / (p - 1.0)
    if b_deriv is None:
        b_deriv = b - 1.0
    lam = params.lambda_k(k)
    terms = [
        ("gradient@0", 2 * a_deriv + N - 1 + w0, "0"),
        ("gradient@inf", 2 * b_deriv + N - 1 + winf, "inf"),
    ]
    if lam > 0:
        terms.insert(1, ("angular@0", 2 * a + N - 3 + w0, "0"))
    terms.append(("angular@inf" if lam > 0 else "hardy@inf", 2 * b + N - 3 + winf, "inf"))
    band = 1e-9
    records = []
    failing = None
    borderline = False
    margins = []
    for name, expo, end in terms:
        slack = expo + 1.0 if end == "0" else -1.0 - expo
        ok = slack > band
        if abs(slack) <= band:
            borderline = True
        records.append({"term": name, "exponent": expo, "slack": slack, "finite": ok})
        margins.append(slack)
        if not ok and failing is None:
            failing = name
    margin = min(margins)
    if failing is None:
        member = Membership.MEMBER
    elif borderline and all(s >= -band for s in margins):
        member = Membership.BORDERLINE
    else:
        member = Membership.NOT_MEMBER
    return MembershipVerdict(member=member, failing_term=failing, margin=margin, terms=records)


def truncated_norm_growth(params: Params, prof, k: int, radii=(1e3, 1e4, 1e5),
                          r_lo: float = 1.0, cells_per_decade: int = 128) -> dict:
    """Truncated mode norms ``Q(R) = int_{r_lo}^R r^{N-1} W (psi'^2 + c psi^2 / r^2)``.

    ``c = lambda_k`` for ``k >= 1`` and 1 (the Hardy weight) for ``k = 0``.
    The growth power is read from successive increments
    ``Q(R_{j+1}) - Q(R_j)``, which removes the constant of the lower limit.
    """
    N = params.N
    c = params.lambda_k(k) if k > 0 else 1.0

    def integrand(r):
        w = weight(params, r)
        return r ** (N - 1) * w * (prof.d1(r) ** 2 + c * prof.value(r) ** 2 / r ** 2)

    radii = [float(R) for R in radii]
    edges = [r_lo] + radii + [2.0 * radii[-1]]
    pieces = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        n = max(8, int(math.ceil(cells_per_decade * math.log10(hi / lo))))
        pieces.append(integrate(build_grid(lo, hi, n), integrand))
    Q = np.cumsum(pieces)
    q_at = Q[:-1].tolist()
    powers = []
    for j in range(len(radii) - 2):
        inc_a = Q[j + 1] - Q[j]
        inc_b = Q[j + 2] - Q[j + 1]
        if inc_a > 0 and inc_b > 0:
            powers.append(math.log(inc_b / inc_a) / math.log(radii[j + 2] / radii[j + 1]))
        else:
            powers.append(float("nan"))
    last_change = (Q[-1] - Q[-2]) / Q[-2]
    return {"radii": radii, "Q": q_at, "powers": powers,
            "power": powers[-1] if powers else float("nan"),
            "last_doubling_rel_change": float(last_change)}


@dataclass(eq=False)
class SecondSolution:
    k: int
    direct: ModeSolution
    wronskian: float
    wronskian_rel_dev: float
    cprime_display_rel_err: float
    cross_check_rel_err: float
    c_field: RadialField
    w_field: RadialField
    c_fit: AsymptoticFit
    w_fit: AsymptoticFit
    expected_c_exponent: float
    expected_w_exponent: float
    tail_start: float


def _cumulative(grid: RadialGrid, f):
    tq, wq = grid.quad_points()
    rq = np.exp(tq)
    cell = np.sum(f(rq) * rq * wq, axis=1)
    return np.concatenate([[0.0], np.cumsum(cell)])


def second_solution(params: Params, k: int, r0: float = 1e-2, r_max: float = 1e6,
                    tail_start: float | None = None, window=(1e3, 1e5),
                    cells_per_decade: int = 64, rtol: float = 1e-12) -> SecondSolution:
    """Second solution ``w`` of ``L_k w = 0`` for ``k`` in {0, 1}, built two ways.

    (a) direct integration from ``w(r0) = 0`` with the Abel-Wronskian
    normalized to 1; (b) on the tail, ``w = c psi_k`` with
    ``c' = A / (r^{N-1} W psi_k^2)``.  The integration constant of ``c``
    (equivalently the multiple of ``psi_k`` in ``w``) is fixed by power-law
    continuation of ``c'`` at the tail start.
    """
    if k not in (0, 1):
        raise ValueError("second solutions are constructed for k = 0 and k = 1 only")
    N, p = params.N, params.p
    psi = psi0_profile(params) if k == 0 else psi1_profile(params)

    def abel_base(r):
        return r ** (N - 1) * weight(params, r)

    dw0 = 1.0 / (abel_base(r0) * psi.value(r0))
    direct = integrate_mode_ode(params, k, (r0, 0.0, dw0), "outward", r_max,
                                cells_per_decade=cells_per_decade, rtol=rtol)
    w = direct.profile
    rr = direct.field.r
    wr = abel_base(rr) * (psi.value(rr) * w.d1(rr) - psi.d1(rr) * w.value(rr))
    A = float(wr[0])
    wr_dev = float(np.max(np.abs(wr / A - 1.0)))

    if tail_start is None:
        last_zero = (p - 1.0) ** ((p - 1.0) / p) if k == 0 else 1.0
        tail_start = 100.0 * max(1.0, last_zero)
    n_tail = max(8, int(math.ceil(cells_per_decade * math.log10(r_max / tail_start))))
    tgrid = build_grid(tail_start, r_max, n_tail)
    rt = tgrid.nodes

    def cprime(r):
        return A / (abel_base(r) * psi.value(r) ** 2)

    def cprime_display(r):
        rho = r ** params.m
        return (A * (1.0 + rho) ** (N * (p - 2.0) / p)
                / (psi.value(r) ** 2 * r ** ((N - 1 + N * (p - 2.0)) / (p - 1.0))))

    disp = cprime_display(rt) / params.cnp ** (p - 2.0)
    cp_err = float(np.max(np.abs(disp / cprime(rt) - 1.0)))

    eps = 1e-4
    ra = tail_start
    e_loc = 1.0 + (math.log(cprime(ra * math.exp(eps))) - math.log(cprime(ra * math.exp(-eps)))) / (2 * eps)
    c_anchor = ra * cprime(ra) / e_loc
    c_vals = c_anchor + _cumulative(tgrid, cprime)

    c_direct = w.value(rt) / psi.value(rt)
    quad = c_direct[0] + (c_vals - c_vals[0])
    cross = float(np.max(np.abs(quad - c_direct) / np.abs(c_direct)))

    c_field = RadialField(tgrid, c_vals, tag=f"c_k{k}")
    w_field = RadialField(tgrid, c_vals * psi.value(rt), tag=f"w_k{k}")
    c_fit = fit_tail_exponent(c_field, window)
    w_fit = fit_tail_exponent(w_field, window)
    exp_c = (N - p) / (p - 1.0) if k == 0 else (N - 1.0) / (p - 1.0) + 1.0
    exp_w = 0.0 if k == 0 else 1.0
    return SecondSolution(k=k, direct=direct, wronskian=A, wronskian_rel_dev=wr_dev,
                          cprime_display_rel_err=cp_err, cross_check_rel_err=cross,
                          c_field=c_field, w_field=w_field, c_fit=c_fit, w_fit=w_fit,
                          expected_c_exponent=exp_c, expected_w_exponent=exp_w,
                          tail_start=tail_start)


class _TailProfile:
    """``c(r) psi_k(r)`` on the tail of a second solution, with exact ``c'``."""

    def __init__(self, params: Params, sol: SecondSolution):
        self.params = params
        self._psi = psi0_profile(params) if sol.k == 0 else psi1_profile(params)
        self._c = sol.c_field
        self._A = sol.wronskian
        N = params.N
        self._base = lambda r: r ** (N - 1) * weight(params, r)

    def value(self, r):
        return self._c.value(r) * self._psi.value(r)

    def d1(self, r):
        cp = self._A / (self._base(r) * self._psi.value(r) ** 2)
        return cp * self._psi.value(r) + self._c.value(r) * self._psi.d1(r)


def tail_profile(params: Params, sol: SecondSolution):
    return _TailProfile(params, sol)


def sturm_comparison(params: Params, k: int = 2, r0: float = 1e-3, r_max: float = 1e4) -> dict:
    """Numerical form of the contradiction argument for ``k >= 2``.

    The solution of ``L_k psi = 0`` regular at the origin is integrated
    outward.  On ``(r0, R)`` the comparison identity with ``psi_1`` reads

        (lambda_k - lambda_1) int r^{N-3} W psi_k psi_1 = sigma [r^{N-1} W (psi_k' psi_1 - psi_k psi_1')]

    The left side is positive while ``psi_k > 0``; at a zero of ``psi_k`` the
    right side would reduce to ``sigma r^{N-1} W psi_k' psi_1 <= 0``.
    """
    if k < 2:
        raise ValueError("comparison argument applies to k >= 2")
    sigma = params.p - 1.0
    b = asymptotic_exponent(params, k, sigma, "0")
    sol = integrate_mode_ode(params, k, (r0, r0 ** b, b * r0 ** (b - 1.0)), "outward", r_max,
                             cells_per_decade=128, rtol=1e-12)
    vals = sol.field.values
    r = sol.field.r
    sign_change = np.flatnonzero(np.sign(vals[1:]) != np.sign(vals[:-1]))
    R = float(r[sign_change[0] + 1]) if sign_change.size else float(r[-1])
    psi1 = psi1_profile(params)
    chk = lagrange_identity_check(params, sol.profile, psi1, k, 1, (r0, R))
    N = params.N
    lam_gap = params.lambda_k(k) - params.lambda_k(1)
    lhs = -chk.gap_term  # (lambda_k - lambda_1) int r^{N-3} W psi_k psi_1
    rhs = chk.boundary
    zero_form = sigma * R ** (N - 1) * float(weight(params, R)) * float(sol.profile.d1(R)) * float(psi1.value(R))
    ratio = vals / psi1.value(r)
    fit = fit_tail_exponent(sol.field, (r_max / 100.0, r_max))
    return {
        "k": k,
        "zero_found": bool(sign_change.size),
        "R": R,
        "lambda_gap": lam_gap,
        "lhs": float(lhs),
        "rhs": float(rhs),
        "identity_rel_defect": chk.relative,
        "zero_endpoint_form": float(zero_form),
        "ratio_increasing": bool(np.all(np.diff(ratio) > 0)),
        "tail_exponent": fit.exponent,
        "growing_root": _growing_root(params, k, sigma),
    }


def _growing_root(params: Params, k: int, sigma: float) -> float:
    N, p = params.N, params.p
    w = -(N - 1.0) * (p - 2.0) / (p - 1.0)
    s = N - 2.0 + w
    return (-s + math.sqrt(s * s + 4.0 * params.lambda_k(k) / sigma)) / 2.0


def fits_json(records) -> str:
    """JSON list of tail-fit records (exponent, coefficient, window, residual)."""
    return json.dumps([r.as_record() if isinstance(r, AsymptoticFit) else r for r in records],
                      indent=2, sort_keys=True)
