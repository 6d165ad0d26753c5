import math

import numpy as np
import pytest
from scipy import integrate as si

from bubblenondeg.bubble import bubble_profile, make_params, psi0_profile, psi1_profile
from bubblenondeg.harmonics import (ZonalBasis, cartesian_linearized_residual, decompose,
                                    decomposition_csv, quadrature, separation_check,
                                    sphere_area, synthesize, zonal_value)
from bubblenondeg.radialgrid import RadialField, build_grid


def _sphere_integral(N, f):
    # adaptive oracle on [-1, 1] with the (1-t^2)^{(N-3)/2} surface measure
    if N == 2:
        val = si.quad(lambda th: f(math.cos(th)), 0, math.pi, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        return 2 * val
    w = lambda t: (1 - t * t) ** ((N - 3) / 2)
    val = si.quad(lambda t: f(t) * w(t), -1, 1, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    return sphere_area(N - 2) * val


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2 * math.pi)
    assert sphere_area(2) == pytest.approx(4 * math.pi)
    assert sphere_area(3) == pytest.approx(2 * math.pi ** 2)


@pytest.mark.parametrize("N", [2, 3, 4, 5, 6])
def test_orthonormality(N):
    x, w = quadrature(N, 40)
    Y = np.array([ZonalBasis(N, k).value(x) for k in range(9)])
    G = (Y * w) @ Y.T
    assert np.max(np.abs(G - np.eye(9))) <= 1e-12


@pytest.mark.parametrize("N", [2, 3, 5])
def test_normalization_against_adaptive_quadrature(N):
    for k in (0, 3, 8):
        Y = ZonalBasis(N, k)
        assert _sphere_integral(N, lambda t: float(Y.value(t)) ** 2) == pytest.approx(1.0, abs=1e-10)


@pytest.mark.parametrize("N", [2, 3, 4, 5, 6])
def test_eigenrelation(N):
    x, w = quadrature(N, 40)
    for k in range(9):
        Y = ZonalBasis(N, k)
        assert Y.eigenvalue == k * (N + k - 2)
        lb = Y.laplace_beltrami(x)
        # pointwise and weak forms
        assert np.max(np.abs(lb + Y.eigenvalue * Y.value(x))) <= 1e-12 * max(1.0, Y.eigenvalue) * np.max(np.abs(Y.value(x)))
        assert np.sum(w * Y.value(x) * -lb) == pytest.approx(Y.eigenvalue, abs=1e-12 * max(1, Y.eigenvalue))


def test_eigenrelation_independent_oracle():
    # N=3: normalized Legendre polynomials, compared with numpy's Legendre series
    t = np.linspace(-1, 1, 101)
    for k in range(9):
        c = np.zeros(k + 1)
        c[k] = 1.0
        ref = np.polynomial.legendre.legval(t, c) * math.sqrt((2 * k + 1) / (4 * math.pi))
        assert np.allclose(ZonalBasis(3, k).value(t), ref, atol=1e-13)


def test_zonal_examples():
    t = np.linspace(-1, 1, 11)
    assert np.allclose(zonal_value(ZonalBasis(3, 1), t), math.sqrt(3 / (4 * math.pi)) * t)
    for N in (2, 3, 4, 7):
        assert np.allclose(zonal_value(ZonalBasis(N, 0), t), sphere_area(N - 1) ** -0.5)
    Y2 = ZonalBasis(3, 2)
    assert zonal_value(Y2, 1.0) == zonal_value(Y2, -1.0)
    with pytest.raises(ValueError):
        zonal_value(Y2, 1.1)
    with pytest.raises(ValueError):
        ZonalBasis(3, -1)
    with pytest.raises(ValueError):
        ZonalBasis(1, 0)


def test_quadrature_exactness():
    for N in (2, 3, 4, 6):
        x, w = quadrature(N, 12)
        for j in range(0, 13):
            exact = _sphere_integral(N, lambda t: t ** j)
            assert np.sum(w * x ** j) == pytest.approx(exact, abs=1e-12)


@pytest.fixture
def small_grid():
    return build_grid(1e-2, 1e2, 64)


def test_decompose_degree_one_input(params, small_grid):
    g = lambda r: 1 / (1 + r * r)
    d = decompose(params, lambda r, t: r * t * g(r), 4, small_grid)
    C = d.coefficients()
    r = small_grid.nodes
    assert np.max(np.abs(np.delete(C, 1, axis=1))) <= 1e-13 * np.max(np.abs(C))
    ratio = C[:, 1] / (r * g(r))
    assert np.allclose(ratio, ratio[0], rtol=1e-12)
    # <t, Y_1> = |S^{N-1}|^{1/2} / sqrt(N)
    assert ratio[0] == pytest.approx(math.sqrt(sphere_area(params.N - 1) / params.N), rel=1e-12)
    assert d.max_truncation <= 1e-12


def test_decompose_radial_input(params, small_grid):
    prof = psi0_profile(params)
    d = decompose(params, lambda r, t: prof.value(r) + 0 * t, 3, small_grid)
    C = d.coefficients()
    assert np.max(np.abs(C[:, 1:])) <= 1e-13 * np.max(np.abs(C))
    assert np.allclose(C[:, 0], prof.value(small_grid.nodes) * sphere_area(params.N - 1) ** 0.5, rtol=1e-12)


@pytest.mark.parametrize("N", [2, 3, 4, 6])
def test_band_limited_round_trip(N, small_grid):
    rng = np.random.default_rng(7)
    a = rng.standard_normal(5)
    s = rng.uniform(0.5, 2.0, 5)
    comps = [RadialField(small_grid, a[k] * small_grid.nodes ** k / (1 + s[k] * small_grid.nodes ** 2) ** (k + 1))
             for k in range(5)]
    phi = lambda r, t: synthesize(N, [lambda rr, c=c, k=k: a[k] * rr ** k / (1 + s[k] * rr ** 2) ** (k + 1)
                                      for k, c in enumerate(comps)], r, t)
    d = decompose(N, phi, 4, small_grid)
    ref = np.stack([c.values for c in comps], axis=1)
    assert np.max(np.abs(d.coefficients() - ref)) <= 1e-10 * np.max(np.abs(ref))
    assert d.max_truncation <= 1e-10


def test_parseval_inequality(params, small_grid):
    phi = lambda r, t: np.exp(r * t) / (1 + r)
    d = decompose(params, phi, 3, small_grid)
    assert np.all(d.truncation_energy >= 0)
    assert np.all(d.truncation_energy <= 1)
    d8 = decompose(params, phi, 8, small_grid)
    assert np.all(d8.truncation_energy <= d.truncation_energy + 1e-15)


def test_decompose_rejects(small_grid):
    with pytest.raises(ValueError):
        decompose(3, lambda r, t: r * t, 5, small_grid, degree=8)
    with pytest.raises(ValueError):
        decompose(3, lambda r, t: np.full(np.broadcast(r, t).shape, np.nan), 2, small_grid)


def test_decomposition_csv(small_grid):
    d = decompose(3, lambda r, t: r * t, 1, build_grid(1, 10, 8))
    lines = decomposition_csv(d).split("\r\n")
    assert lines[0] == "r,k,psi_k"
    assert len(lines) == 1 + 9 * 2 + 1 and lines[-1] == ""


def test_separation_psi1_second_order():
    P = make_params(3, 2)
    psi = psi1_profile(P)
    d1 = np.array(separation_check(P, psi, 1, 1.0, h=1e-3))
    d2 = np.array(separation_check(P, psi, 1, 1.0, h=5e-4))
    assert np.all(d1 <= 1e-4)
    assert np.all(d1 / d2 == pytest.approx(4.0, abs=0.3))


class _Const:
    def value(self, r):
        return np.ones_like(np.asarray(r, dtype=float))

    def d1(self, r):
        return np.zeros_like(np.asarray(r, dtype=float))

    d2 = d1


class _Square:
    def value(self, r):
        return np.asarray(r, dtype=float) ** 2

    def d1(self, r):
        return 2 * np.asarray(r, dtype=float)

    def d2(self, r):
        return 2 + 0 * np.asarray(r, dtype=float)


def test_separation_trivial_cases(params):
    assert separation_check(params, _Const(), 0, 1.3)[1] <= 1e-15
    assert separation_check(params, _Square(), 0, 1.3, h=0.25)[2] <= 1e-12


@pytest.mark.parametrize("which", ["Z0", "Z1"])
def test_cartesian_richardson(which):
    P = make_params(3, 2)
    a = cartesian_linearized_residual(P, which, 0.1)
    b = cartesian_linearized_residual(P, which, 0.05)
    assert a / b == pytest.approx(4.0, abs=0.3)


def test_cartesian_U_not_in_kernel():
    P = make_params(3, 2)
    assert cartesian_linearized_residual(P, "U", 0.1) > 0.1
    assert cartesian_linearized_residual(P, "U", 0.05) > 0.1


def test_cartesian_rejects():
    with pytest.raises(ValueError):
        cartesian_linearized_residual(make_params(4, 2), "Z0")
    with pytest.raises(ValueError):
        cartesian_linearized_residual(make_params(3, 2.5), "Z0", shell=(0.0, 2.0))
    with pytest.raises(ValueError):
        cartesian_linearized_residual(make_params(3, 2), "Z0", h=0.5, shell=(0.5, 1.0))
    with pytest.raises(ValueError):
        cartesian_linearized_residual(make_params(3, 2), "Z7")


@pytest.mark.parametrize("p", [1.5, 2.0, 2.5])
def test_cartesian_matches_mode_equation(p):
    # for phi = f(r) Y_1 the Cartesian operator equals Y_1 times the weighted mode ODE
    P = make_params(3, p)
    prof = bubble_profile(P)
    Y = ZonalBasis(3, 1)
    f = lambda X, r: prof.value(r) * Y.value(X[0] / r)
    h, lo, hi = 0.05, 0.5, 3.0
    n = int(math.ceil((hi + h) / h)) + 1
    ax = h * np.arange(-n, n + 1)
    X = np.array(np.meshgrid(ax, ax, ax, indexing="ij"))[:, 1:-1, 1:-1, 1:-1]
    R = np.sqrt(np.sum(X ** 2, axis=0))
    sel = (R >= lo) & (R <= hi)
    r, t = R[sel], X[0][sel] / R[sel]
    rho = r ** P.m
    u, du, ddu = prof.value(r), prof.d1(r), prof.d2(r)
    mode = ((p - 1) * r * r * ddu + ((3 - 1) + (p - 2) * 3 / (1 + rho)) * r * du - 2.0 * u
            + P.gamma * rho / (1 + rho) ** 2 * u)
    pot = P.gamma * rho / (1 + rho) ** 2 * u * Y.value(t)
    expected = np.max(np.abs(mode * Y.value(t))) / np.max(np.abs(pot))
    got = cartesian_linearized_residual(P, f, h, (lo, hi))
    assert got == pytest.approx(expected, rel=2e-2)
