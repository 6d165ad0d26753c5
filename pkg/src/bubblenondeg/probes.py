"""Numerical probes of the weighted inequalities behind the function space.

Radial test functions are objects with ``value``/``d1`` and a ``support``
``(lo, hi)`` used to place the log grid; all norms are radial quadratures
``|S^{N-1}| int f(s) s^{N-1} ds``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .bubble import BubbleFamily, Params, bubble_profile
from .harmonics import sphere_area
from .modeop import Variant, assemble, m_cosine, spectrum
from .radialgrid import RadialGrid, build_grid, integrate

__all__ = [
    "Verdict",
    "ProbeReport",
    "RadialTest",
    "gaussian",
    "bump",
    "truncated_power",
    "shifted_bump",
    "family",
    "ckn_probe",
    "hardy_probe",
    "run_family",
    "EmbeddingEstimate",
    "embedding_constant",
    "sobolev_quotient",
    "energy_integrals",
    "sharp_sobolev_constant",
    "reports_jsonl",
]


class Verdict(str, Enum):
    HOLDS = "HOLDS"
    VIOLATED = "VIOLATED"
    INAPPLICABLE = "INAPPLICABLE"


@dataclass
class ProbeReport:
    inequality: str
    parameters: dict
    lhs: float
    rhs: float
    ratio: float
    verdict: Verdict
    family_constant: float
    quad_error: float = 0.0
    test_function: str = ""

    def to_json(self) -> str:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return json.dumps(d, sort_keys=True)


@dataclass(frozen=True)
class RadialTest:
    """Radial test function ``f(s / scale)`` with derivative, supported in ``support``."""

    name: str
    f: Callable
    df: Callable
    scale: float = 1.0
    support: tuple = (1e-8, 10.0)

    def value(self, s):
        return self.f(np.asarray(s, dtype=float) / self.scale)

    def d1(self, s):
        return self.df(np.asarray(s, dtype=float) / self.scale) / self.scale

    def rescaled(self, lam: float) -> "RadialTest":
        """``phi(. / lam)``."""
        return RadialTest(self.name, self.f, self.df, self.scale * lam, self.support)

    @property
    def span(self) -> tuple:
        return (self.support[0] * self.scale, self.support[1] * self.scale)


def gaussian(lam: float = 1.0) -> RadialTest:
    return RadialTest(f"gaussian({lam:.6g})", lambda s: np.exp(-s * s),
                      lambda s: -2.0 * s * np.exp(-s * s), lam, (1e-8, 10.0))


def _bump(s):
    out = np.zeros_like(s)
    m = s < 1.0
    out[m] = np.exp(-1.0 / (1.0 - s[m] ** 2))
    return out


def _dbump(s):
    out = np.zeros_like(s)
    m = s < 1.0
    q = 1.0 - s[m] ** 2
    out[m] = -2.0 * s[m] / q ** 2 * np.exp(-1.0 / q)
    return out


def bump(lam: float = 1.0) -> RadialTest:
    return RadialTest(f"bump({lam:.6g})", _bump, _dbump, lam, (1e-8, 1.0))


def truncated_power(lam: float = 1.0) -> RadialTest:
    return RadialTest(f"trunc_power({lam:.6g})",
                      lambda s: np.clip(1.0 - s, 0.0, None) ** 4,
                      lambda s: -4.0 * np.clip(1.0 - s, 0.0, None) ** 3, lam, (1e-8, 1.0))


def shifted_bump(center: float, width: float) -> RadialTest:
    """Bump supported in ``(center - width, center + width)``; ``width < center``."""
    if not 0 < width < center:
        raise ValueError("need 0 < width < center")

    def f(s):
        return _bump(np.abs(s - center) / width)

    def df(s):
        u = (s - center) / width
        return np.sign(u) * _dbump(np.abs(u)) / width

    return RadialTest(f"shifted_bump({center:.6g},{width:.6g})", f, df, 1.0,
                      (center - width, center + width))


def family(kind: str, n: int = 20, lam_range=(0.1, 10.0)) -> list:
    """``n`` members of a test family with log-spaced scales."""
    ctor = {"gaussian": gaussian, "bump": bump, "truncated_power": truncated_power}.get(kind)
    if ctor is None:
        raise ValueError(f"unknown family {kind!r}")
    return [ctor(float(l)) for l in np.geomspace(lam_range[0], lam_range[1], n)]


def _radial_integral(N: int, f: Callable, span, cells_per_decade: int = 96):
    lo, hi = span
    n = max(256, int(math.ceil(cells_per_decade * math.log10(hi / lo))))
    val, err = integrate(build_grid(lo, hi, n), lambda s: f(s) * s ** (N - 1), with_error=True)
    area = sphere_area(N - 1)
    return area * val, area * err


def ckn_probe(N: int, gamma: float, r: float, q: float, alpha: float, phi: RadialTest,
              family_constant: float = 0.0, cells_per_decade: int = 96) -> ProbeReport:
    """``|| |x|^gamma phi ||_r`` against ``|| |x|^alpha grad phi ||_q``.

    Exponents that miss the balance ``1/r + gamma/N = 1/q + (alpha-1)/N > 0``
    give ``INAPPLICABLE``; the ratio is still computed.
    """
    if r < 1 or q < 1:
        raise ValueError("need r, q >= 1")
    bal_l = 1.0 / r + gamma / N
    bal_r = 1.0 / q + (alpha - 1.0) / N
    balanced = abs(bal_l - bal_r) <= 1e-12 and bal_l > 0
    span = phi.span
    a, ea = _radial_integral(N, lambda s: s ** (gamma * r) * np.abs(phi.value(s)) ** r, span,
                             cells_per_decade)
    b, eb = _radial_integral(N, lambda s: s ** (alpha * q) * np.abs(phi.d1(s)) ** q, span,
                             cells_per_decade)
    lhs, rhs = a ** (1.0 / r), b ** (1.0 / q)
    params = {"N": N, "gamma": gamma, "r": r, "q": q, "alpha": alpha}
    if not (math.isfinite(lhs) and math.isfinite(rhs)):
        raise ValueError("test function not integrable against the weights")
    ratio = lhs / rhs if rhs > 0 else (0.0 if lhs == 0 else math.inf)
    fam = max(family_constant, ratio if math.isfinite(ratio) else 0.0)
    if not balanced:
        verdict = Verdict.INAPPLICABLE
    elif lhs == 0.0:
        verdict = Verdict.HOLDS
    elif rhs == 0.0:
        verdict = Verdict.VIOLATED
    else:
        verdict = Verdict.HOLDS if lhs <= fam * rhs * (1 + 1e-12) else Verdict.VIOLATED
    qerr = (ea / a if a > 0 else 0.0) + (eb / b if b > 0 else 0.0)
    return ProbeReport("ckn", params, lhs, rhs, ratio, verdict, fam, qerr, phi.name)


def hardy_probe(N: int, q: float, s: float, R: float, phi: RadialTest,
                family_constant: float = 0.0, cells_per_decade: int = 96) -> ProbeReport:
    """``int_{|x|>R} |x|^{s-q} |phi|^q`` against ``int_{|x|>R} |x|^s |grad phi|^q``.

    The sharp radial constant ``(q/(s-q+N))^q`` is the comparison bound.
    """
    if q < 1 or R < 0:
        raise ValueError("need q >= 1 and R >= 0")
    params = {"N": N, "q": q, "s": s, "R": R}
    applicable = s > q - N
    lo, hi = phi.span
    lo = max(lo, R) if R > 0 else lo
    if hi <= lo:
        return ProbeReport("hardy", params, 0.0, 0.0, 0.0,
                           Verdict.HOLDS if applicable else Verdict.INAPPLICABLE,
                           family_constant, 0.0, phi.name)
    a, ea = _radial_integral(N, lambda x: x ** (s - q) * np.abs(phi.value(x)) ** q, (lo, hi),
                             cells_per_decade)
    b, eb = _radial_integral(N, lambda x: x ** s * np.abs(phi.d1(x)) ** q, (lo, hi),
                             cells_per_decade)
    ratio = a / b if b > 0 else (0.0 if a == 0 else math.inf)
    fam = max(family_constant, ratio if math.isfinite(ratio) else 0.0)
    if not applicable:
        verdict = Verdict.INAPPLICABLE
    else:
        sharp = (q / (s - q + N)) ** q
        params["sharp_constant"] = sharp
        tol = 1e-8 + (ea / a if a > 0 else 0.0) + (eb / b if b > 0 else 0.0)
        verdict = Verdict.HOLDS if a <= sharp * b * (1 + tol) else Verdict.VIOLATED
    qerr = (ea / a if a > 0 else 0.0) + (eb / b if b > 0 else 0.0)
    return ProbeReport("hardy", params, a, b, ratio, verdict, fam, qerr, phi.name)


def run_family(probe: Callable, members, **kw) -> list:
    """Apply ``probe(..., phi=member, family_constant=running_sup)`` over a family."""
    out = []
    sup = 0.0
    for phi in members:
        rep = probe(phi=phi, family_constant=sup, **kw)
        sup = rep.family_constant
        out.append(rep)
    for rep in out:
        rep.family_constant = sup
    return out


@dataclass
class EmbeddingEstimate:
    constant: float
    k_min: int
    cos_with_U: float
    per_mode: list
    verdict: Verdict
    eigenfunction: Optional[np.ndarray] = field(default=None, repr=False)


def embedding_constant(params: Params, K: int = 4, grid: RadialGrid | None = None) -> EmbeddingEstimate:
    """Lowest embedding-variant eigenvalue over modes ``k = 0..K``."""
    if K < 1:
        raise ValueError("need K >= 1")
    grid = grid or build_grid()
    per = []
    best = None
    for k in range(K + 1):
        op = assemble(params, grid, k, Variant.EMBEDDING)
        sp = spectrum(op, m=1)
        mu = float(sp.eigenvalues[0])
        per.append(mu)
        if best is None or mu < best[0]:
            best = (mu, k, op, sp.vector(0))
    mu, k, op, v = best
    U = bubble_profile(params).value(op.nodes)
    cos = abs(m_cosine(op, v, U))
    return EmbeddingEstimate(mu, k, cos, per, Verdict.HOLDS if mu > 0 else Verdict.VIOLATED, v)


class _Scaled:
    def __init__(self, prof, delta: float, power: float):
        self.prof, self.delta, self.c = prof, delta, delta ** (-power)

    def value(self, r):
        return self.c * self.prof.value(np.asarray(r) / self.delta)

    def d1(self, r):
        return self.c / self.delta * self.prof.d1(np.asarray(r) / self.delta)


class _Truncated:
    def __init__(self, prof, R: float):
        self.prof, self.R, self.cut = prof, R, float(prof.value(R))

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.R, self.prof.value(r) - self.cut, 0.0)

    def d1(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r < self.R, self.prof.d1(r), 0.0)


def _span(params: Params, delta: float = 1.0):
    # the slowest tail, |U'|^p r^{N-1} ~ r^{-(N-1)/(p-1)}, leaves R^{-(N-p)/(p-1)}
    N, p = params.N, params.p
    e = (N - p) / (p - 1.0)
    hi = min(10.0 ** (16.0 / e), 1e200)
    return 1e-12 * delta, hi * delta


def energy_integrals(params: Params, phi=None, span=None, cells_per_decade: int = 64):
    """``(int |grad phi|^p, int |phi|^{p*})`` over ``R^N``; ``phi`` defaults to ``U``."""
    N, p, ps = params.N, params.p, params.pstar
    phi = phi or bubble_profile(params)
    span = span or _span(params)
    g, _ = _radial_integral(N, lambda r: np.abs(phi.d1(r)) ** p, span, cells_per_decade)
    u, _ = _radial_integral(N, lambda r: np.abs(phi.value(r)) ** ps, span, cells_per_decade)
    return g, u


def sobolev_quotient(params: Params, phi=None, *, delta: float = 1.0,
                     truncate: float | None = None) -> float:
    """``||grad phi||_p / ||phi||_{p*}``; with ``phi=None`` the bubble ``U_delta``
    (optionally truncated to ``U - U(R)`` on ``B_R``)."""
    N, p = params.N, params.p
    if phi is None:
        BubbleFamily(delta=delta)
        base = bubble_profile(params)
        phi = _Scaled(base, delta, (N - p) / p) if delta != 1.0 else base
        if truncate is not None:
            phi = _Truncated(phi, float(truncate))
    span = _span(params, delta)
    if truncate is not None:
        span = (span[0], float(truncate))
    g, u = energy_integrals(params, phi, span)
    if u <= 0:
        raise ZeroDivisionError("vanishing denominator in the Sobolev quotient")
    return g ** (1.0 / p) / u ** (1.0 / params.pstar)


def sharp_sobolev_constant(N: int, p: float) -> float:
    """``S_p = 1/C`` with the classical closed-form optimal constant ``C``."""
    C = (math.pi ** -0.5 * N ** (-1.0 / p) * ((p - 1.0) / (N - p)) ** (1.0 - 1.0 / p)
         * (math.gamma(1 + N / 2.0) * math.gamma(N)
            / (math.gamma(N / p) * math.gamma(1 + N - N / p))) ** (1.0 / N))
    return 1.0 / C


def reports_jsonl(reports) -> str:
    return "".join(r.to_json() + "\n" for r in reports)
