"""Per-mode weighted bilinear forms and their generalized eigenproblems.

For spherical-harmonic degree ``k`` the linearized operator acts on the
radial profile through

    B_k(psi, chi) = sigma int r^{N-1} W psi' chi' dr + lambda_k int r^{N-3} W psi chi dr
    M(psi, chi)   = int r^{N-1} U^{p*-2} psi chi dr

with ``W = |U'|^{p-2}``.  ``sigma = p - 1`` is the linearization (the radial
direction carries the extra ``(p-2)`` of the anisotropic term); ``sigma = 1``
is the plain weighted Dirichlet form used for the embedding constant.  The
kernel of the linearization in mode ``k`` corresponds to the generalized
eigenvalue ``p* - 1``.

Discretization is piecewise linear in ``t = log r``; in that variable both
stiffness and angular weights are ``r^{N-2} W`` and the mass weight is
``r^N U^{p*-2}``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .bubble import Params, bubble_profile, potential, weight, weight_logderiv
from .radialgrid import RadialGrid, build_grid

__all__ = [
    "Variant",
    "ModeOperator",
    "Spectrum",
    "KernelCount",
    "SpectrumError",
    "lambda_k",
    "assemble",
    "spectrum",
    "strong_residual",
    "kernel_dimension",
    "nondegeneracy",
    "lagrange_identity_check",
    "IdentityCheck",
    "mode_operator_terms",
    "asymptotic_exponent",
    "m_cosine",
    "spectra_csv",
]


class Variant(str, Enum):
    LINEARIZED = "LINEARIZED"
    EMBEDDING = "EMBEDDING"


class SpectrumError(np.linalg.LinAlgError):
    """The mass matrix is not numerically positive definite."""


def lambda_k(N: int, k: int) -> float:
    if N < 2 or k < 0:
        raise ValueError("need N >= 2 and k >= 0")
    return float(k * (N + k - 2))


def _sigma(params: Params, variant) -> float:
    if isinstance(variant, (int, float)) and not isinstance(variant, bool):
        return float(variant)
    v = Variant(variant)
    return params.p - 1.0 if v is Variant.LINEARIZED else 1.0


def asymptotic_exponent(params: Params, k: int, sigma: float, end: str) -> float:
    """Power ``b`` of the admissible solution ``r**b`` at an end of ``(0, inf)``.

    Solves ``sigma b (b + N - 2 + w) = lambda_k`` where ``W ~ r**w`` at that
    end; the regular root at 0, the decaying root at infinity.  The mass
    term is subdominant at both ends.  For ``k = 0`` the root at 0 is the
    constant, whose flux vanishes even when the other root is positive.
    """
    N, p = params.N, params.p
    lam = params.lambda_k(k)
    if end == "0":
        w = (p - 2.0) / (p - 1.0)
    elif end == "inf":
        w = -(N - 1.0) * (p - 2.0) / (p - 1.0)
    else:
        raise ValueError("end must be '0' or 'inf'")
    s = N - 2.0 + w
    if end == "0" and lam == 0:
        return 0.0
    disc = math.sqrt(s * s + 4.0 * lam / sigma)
    return (-s + disc) / 2.0 if end == "0" else (-s - disc) / 2.0


@dataclass(eq=False)
class ModeOperator:
    params: Params
    grid: RadialGrid
    k: int
    lambda_k: float
    variant: str
    sigma: float
    bc: str
    A: sp.csr_matrix
    M: sp.csr_matrix
    stiffness: sp.csr_matrix
    angular: sp.csr_matrix
    boundary: sp.csr_matrix
    active: np.ndarray = field(repr=False)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.nodes[self.active]

    @property
    def size(self) -> int:
        return self.A.shape[0]


def _cell_weights(params: Params, grid: RadialGrid):
    tq, wq = grid.quad_points()
    rq = np.exp(tq)
    N = params.N
    a = rq ** (N - 2) * weight(params, rq)
    m = rq ** N * potential(params, rq)
    for name, arr in (("stiffness", a), ("mass", m)):
        bad = ~np.all(np.isfinite(arr), axis=1)
        if np.any(bad):
            cell = int(np.flatnonzero(bad)[0])
            raise ArithmeticError(f"{name} weight not finite in cell {cell} "
                                  f"(r in [{grid.nodes[cell]:.3g}, {grid.nodes[cell + 1]:.3g}])")
    return tq, wq, a, m


# largest stiffness weight (relative to the bubble scale) kept near the origin
ORIGIN_WEIGHT_CAP = 1e8


def _clip_origin(params: Params, grid: RadialGrid):
    """Drop leading cells whose stiffness weight is huge.

    For small p the weight ``r^(N-2) W`` blows up at the origin, the profile
    is flat there, and rows of ``A`` with entries of size ``a`` cancel only to
    ``1e-16 a``.  That rounding behaves like a spurious Dirichlet condition.
    The first kept node takes the asymptotic boundary condition instead.
    """
    r = grid.nodes
    a = r ** (params.N - 2) * weight(params, r)
    ref = a[min(int(np.searchsorted(r, 1.0)), r.size - 1)]
    big = np.flatnonzero(~(a <= ORIGIN_WEIGHT_CAP * ref))
    big = big[big < np.searchsorted(r, 1.0)]
    if big.size == 0:
        return grid, 0
    first = int(big[-1]) + 1
    if r.size - first < 8:
        raise ValueError("grid too short after clipping the origin region")
    t = grid.t[first:]
    return RadialGrid(float(np.exp(t[0])), grid.r_max, t.size - 1, t), first


def _tridiag(diag_l, diag_r, off, n):
    d = np.zeros(n)
    d[:-1] += diag_l
    d[1:] += diag_r
    return sp.diags([off, d, off], [-1, 0, 1], format="csr")


def assemble(params: Params, grid: RadialGrid, k: int, variant="LINEARIZED",
             bc: str = "asymptotic") -> ModeOperator:
    """Assemble stiffness+angular matrix ``A`` and mass ``M`` for mode ``k``.

    bc:
      ``asymptotic``  Robin conditions matching the admissible power law at
                      each truncation end (default)
      ``natural``     do-nothing at both ends
      ``dirichlet``   homogeneous Dirichlet at both ends
    """
    if k < 0:
        raise ValueError("mode index must be >= 0")
    full = grid
    sigma = _sigma(params, variant)
    vname = variant.value if isinstance(variant, Variant) else str(variant)
    lam = params.lambda_k(k)
    grid, first = _clip_origin(params, grid)
    n = grid.n_cells + 1
    t = grid.t
    h = np.diff(t)
    tq, wq, a, m = _cell_weights(params, grid)
    phi_r = (tq - t[:-1, None]) / h[:, None]
    phi_l = 1.0 - phi_r

    int_a = np.sum(a * wq, axis=1)
    S = _tridiag(int_a / h ** 2, int_a / h ** 2, -int_a / h ** 2, n)
    G = _tridiag(np.sum(a * wq * phi_l ** 2, axis=1), np.sum(a * wq * phi_r ** 2, axis=1),
                 np.sum(a * wq * phi_l * phi_r, axis=1), n)
    M = _tridiag(np.sum(m * wq * phi_l ** 2, axis=1), np.sum(m * wq * phi_r ** 2, axis=1),
                 np.sum(m * wq * phi_l * phi_r, axis=1), n)

    bdiag = np.zeros(n)
    if bc == "asymptotic":
        r0, r1 = grid.nodes[0], grid.nodes[-1]
        a0 = r0 ** (params.N - 2) * weight(params, r0)
        a1 = r1 ** (params.N - 2) * weight(params, r1)
        # flux sigma*a*psi_t with psi_t = b*psi imposed at the ends
        bdiag[0] = sigma * a0 * asymptotic_exponent(params, k, sigma, "0")
        bdiag[-1] = -sigma * a1 * asymptotic_exponent(params, k, sigma, "inf")
    elif bc not in ("natural", "dirichlet"):
        raise ValueError(f"unknown boundary condition {bc!r}")
    B = sp.diags(bdiag, 0, format="csr")

    A = (sigma * S + lam * G + B).tocsr()
    active = np.arange(first, first + n)
    if bc == "dirichlet":
        A = A[1:-1][:, 1:-1]
        M = M[1:-1][:, 1:-1]
        active = active[1:-1]
    return ModeOperator(params=params, grid=full, k=k, lambda_k=lam, variant=vname,
                        sigma=sigma, bc=bc, A=A.tocsr(), M=M.tocsr(), stiffness=S,
                        angular=G, boundary=B, active=active)


@dataclass(eq=False)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    nodes: np.ndarray
    k: int = 0
    variant: str = "LINEARIZED"

    def vector(self, i: int) -> np.ndarray:
        return self.eigenvectors[:, i]


def _check_mass(M: sp.spmatrix):
    d = M.diagonal()
    off = M.diagonal(1)
    ab = np.zeros((2, d.size))
    ab[0, 1:] = off
    ab[1] = d
    try:
        la.cholesky_banded(ab, lower=False)
    except la.LinAlgError as exc:
        raise SpectrumError("mass matrix is not numerically positive definite") from exc


def spectrum(op: ModeOperator, m: int = 4, method: str = "sparse",
             shift: float | None = None) -> Spectrum:
    """Lowest ``m`` eigenpairs of the pencil ``(A, M)``.

    ``sparse`` runs shift-invert Lanczos about a point just below zero with a
    fixed start vector (deterministic); ``dense`` reduces through a Cholesky
    factor of ``M``, which loses accuracy on grids spanning many decades.
    Residuals are ``|A v - mu M v| / (|mu| |M v|)``.
    """
    n = op.size
    if m < 1 or m > n:
        raise ValueError(f"need 1 <= m <= {n}")
    _check_mass(op.M)
    A, M = op.A, op.M
    if method == "dense" or n <= max(2 * m + 1, 64):
        vals, vecs = la.eigh(A.toarray(), M.toarray(), subset_by_index=[0, m - 1])
    elif method == "sparse":
        if shift is None:
            # below the spectrum of the positive semidefinite pencil
            shift = -1e-2 * max(op.sigma, 1e-3)
        v0 = np.ones(n)
        vals, vecs = spla.eigsh(A.tocsc(), k=m, M=M.tocsc(), sigma=shift, which="LM",
                                v0=v0, tol=0.0, maxiter=20 * n)
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    else:
        raise ValueError(f"unknown method {method!r}")
    # M-orthonormalize and fix signs for reproducibility
    Mv = M @ vecs
    norms = np.sqrt(np.einsum("ij,ij->j", vecs, Mv))
    vecs = vecs / norms
    signs = np.sign(vecs[np.argmax(np.abs(vecs), axis=0), np.arange(vecs.shape[1])])
    vecs = vecs * signs
    Mv = M @ vecs
    res = np.linalg.norm(A @ vecs - Mv * vals, axis=0) / (np.abs(vals) * np.linalg.norm(Mv, axis=0))
    return Spectrum(eigenvalues=np.asarray(vals), eigenvectors=vecs, residuals=res,
                    nodes=op.nodes, k=op.k, variant=op.variant)


def m_cosine(op: ModeOperator, v: np.ndarray, u: np.ndarray) -> float:
    """``|<v,u>_M| / (|v|_M |u|_M)`` for nodal vectors on the active nodes."""
    Mu = op.M @ u
    Mv = op.M @ v
    return float(abs(v @ Mu) / math.sqrt((v @ Mv) * (u @ Mu)))


def mode_operator_terms(params: Params, prof, k: int, sigma: float, r):
    """The three terms of ``L_k psi`` and the pieces of the derivative term.

    Returns ``(deriv, angular, potential, pieces)`` where ``deriv =
    sigma (r^{N-1} W psi')'`` and ``pieces`` are its two product-rule parts.
    """
    N = params.N
    r = np.asarray(r, dtype=float)
    w = weight(params, r)
    base = r ** (N - 1) * w
    d1 = prof.d1(r)
    piece_a = sigma * base * prof.d2(r)
    piece_b = sigma * base * ((N - 1) / r + weight_logderiv(params, r)) * d1
    deriv = piece_a + piece_b
    ang = params.lambda_k(k) * r ** (N - 3) * w * prof.value(r)
    pot = (params.pstar - 1.0) * r ** (N - 1) * potential(params, r) * prof.value(r)
    return deriv, ang, pot, (piece_a, piece_b)


def strong_residual(params: Params, prof, k: int, variant="LINEARIZED", r=None) -> float:
    """Max over ``r`` of ``|sigma (r^{N-1} W psi')' - lambda_k r^{N-3} W psi + (p*-1) r^{N-1} U^{p*-2} psi|``.

    Each node is normalized by the largest magnitude among the computed
    terms (the derivative term counted through its two product-rule parts).
    """
    sigma = _sigma(params, variant)
    if r is None:
        r = build_grid().nodes
    deriv, ang, pot, (pa, pb) = mode_operator_terms(params, prof, k, sigma, r)
    res = np.abs(deriv - ang + pot)
    scale = np.max(np.abs(np.vstack([pa, pb, ang, pot])), axis=0)
    ok = scale > 0
    if not np.any(ok):
        return 0.0
    return float(np.max(res[ok] / scale[ok]))


@dataclass
class KernelCount:
    k: int
    count: int
    verdict: str
    target: float
    tol: float
    eigenvalues: list
    multiplicities: list


def _clusters(vals, rel=1e-3):
    out = []
    for v in sorted(vals):
        if out and abs(v - out[-1][0]) <= rel * max(abs(v), abs(out[-1][0])):
            c, n = out[-1]
            out[-1] = ((c * n + v) / (n + 1), n + 1)
        else:
            out.append((v, 1))
    return out


def kernel_dimension(params: Params, grid: RadialGrid, k: int, tol: float | None = None,
                     m: int = 4, bc: str = "asymptotic", spec: Spectrum | None = None) -> KernelCount:
    """Count LINEARIZED eigenvalues within ``tol`` of ``p* - 1`` in mode ``k``.

    Eigenvalues are clustered at 1e-3 relative spacing first.  A cluster at
    distance in ``(tol, 2 tol]`` makes the verdict ``AMBIGUOUS``.
    """
    target = params.pstar - 1.0
    tol = 5e-2 * target if tol is None else float(tol)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if spec is None:
        op = assemble(params, grid, k, Variant.LINEARIZED, bc=bc)
        while True:
            spec = spectrum(op, m)
            if spec.eigenvalues[-1] > target + 2 * tol or m >= op.size:
                break
            m = min(2 * m, op.size)
    clusters = _clusters(spec.eigenvalues)
    count = sum(n for c, n in clusters if abs(c - target) <= tol)
    ambiguous = any(tol < abs(c - target) <= 2 * tol for c, n in clusters)
    verdict = "AMBIGUOUS" if ambiguous else "OK"
    return KernelCount(k=k, count=count, verdict=verdict, target=target, tol=tol,
                       eigenvalues=[float(v) for v in spec.eigenvalues],
                       multiplicities=[n for _, n in clusters])


def nondegeneracy(params: Params, grid: RadialGrid, K: int = 4, tol: float | None = None,
                  bc: str = "asymptotic"):
    """Kernel counts for ``k = 0..K`` and the pattern verdict.

    ``NONDEGENERATE_PATTERN`` when counts are ``(1, 1, 0, ..., 0)`` with no
    ambiguous mode, ``INCONCLUSIVE`` when any mode is ambiguous, else
    ``DEGENERATE``.
    """
    counts = [kernel_dimension(params, grid, k, tol=tol, bc=bc) for k in range(K + 1)]
    pattern = [1, 1] + [0] * (K - 1)
    if any(c.verdict == "AMBIGUOUS" for c in counts):
        verdict = "INCONCLUSIVE"
    elif [c.count for c in counts] == pattern[:K + 1]:
        verdict = "NONDEGENERATE_PATTERN"
    else:
        verdict = "DEGENERATE"
    return verdict, counts


@dataclass
class IdentityCheck:
    defect: float
    relative: float
    integral: float
    boundary: float
    gap_term: float


def lagrange_identity_check(params: Params, u, v, k: int, l: int, interval,
                            variant="LINEARIZED", cells_per_decade: int = 256) -> IdentityCheck:
    """Defect of the integrated comparison identity on ``interval``.

    ``int (v L_k u - u L_l v) = sigma [r^{N-1} W (u'v - u v')] + (lambda_l - lambda_k) int r^{N-3} W u v``

    holds for any smooth ``u, v``; ``u`` and ``v`` need ``value/d1/d2``.
    """
    sigma = _sigma(params, variant)
    a, b = map(float, interval)
    decades = math.log10(b / a)
    grid = build_grid(a, b, max(16, int(math.ceil(cells_per_decade * decades))))
    N = params.N
    lk, ll = params.lambda_k(k), params.lambda_k(l)

    def L(prof, kk, r):
        d, g, q, _ = mode_operator_terms(params, prof, kk, sigma, r)
        return d - g + q

    tq, wq = grid.quad_points()
    rq = np.exp(tq)
    jac = rq * wq
    lhs_int = v.value(rq) * L(u, k, rq) - u.value(rq) * L(v, l, rq)
    integral = float(np.sum(lhs_int * jac))
    gap_int = float(np.sum(rq ** (N - 3) * weight(params, rq) * u.value(rq) * v.value(rq) * jac))
    gap = (ll - lk) * gap_int

    def flux(r):
        return sigma * r ** (N - 1) * weight(params, r) * (u.d1(r) * v.value(r) - u.value(r) * v.d1(r))

    fa, fb = float(flux(a)), float(flux(b))
    boundary = fb - fa
    defect = abs(integral - boundary - gap)
    # net terms can cancel by symmetry, so scale by the unsigned pieces
    gap_abs = abs(ll - lk) * float(np.sum(np.abs(rq ** (N - 3) * weight(params, rq)
                                                  * u.value(rq) * v.value(rq)) * jac))
    scale = max(abs(fa) + abs(fb), gap_abs, float(np.sum(np.abs(lhs_int) * jac)), 1e-300)
    return IdentityCheck(defect=defect, relative=defect / scale, integral=integral,
                         boundary=boundary, gap_term=gap)


def spectra_csv(rows) -> str:
    """RFC-4180 CSV of ``(N, p, k, variant, index, eigenvalue, residual)`` rows."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["N", "p", "k", "variant", "index", "eigenvalue", "residual"])
    for row in rows:
        w.writerow([row[0], repr(float(row[1])), row[2], row[3], row[4],
                    repr(float(row[5])), repr(float(row[6]))])
    return buf.getvalue()
