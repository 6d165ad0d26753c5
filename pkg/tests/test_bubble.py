import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bubblenondeg.bubble import (BubbleFamily, RadialProfile, bubble_profile, family_value,
                                 kernel_prefactor, kernel_profile, make_params, plaplace_residual,
                                 profile, psi0_profile, psi1_profile, weight, weight_comparison)

mp.mp.dps = 40


def mp_constants(N, p):
    N, p = mp.mpf(N), mp.mpf(p)
    alpha = N ** (1 / p) * ((N - p) / (p - 1)) ** ((p - 1) / p)
    return {"pstar": N * p / (N - p), "alpha": alpha, "gamma": N * (N * p - N + p) / (p - 1),
            "cnp": alpha ** ((N - p) / p) * (N - p) / (p - 1)}


@pytest.mark.parametrize("N,p", [(3, 2), (5, 2), (3, 1.5), (4, 3), (5, 2.5), (7, 1.2)])
def test_constants_match_extended_precision(N, p):
    P = make_params(N, p)
    ref = mp_constants(N, p)
    for key, val in ref.items():
        assert getattr(P, key) == pytest.approx(float(val), rel=1e-14)


def test_constants_examples():
    P = make_params(3, 2)
    assert P.pstar == pytest.approx(6.0)
    assert P.alpha == pytest.approx(1.7320508, abs=1e-7)
    assert P.gamma == pytest.approx(15.0)
    assert P.cnp == pytest.approx(1.3160740, abs=1e-7)
    P5 = make_params(5, 2)
    assert P5.pstar == pytest.approx(10 / 3)
    assert P5.alpha == pytest.approx(math.sqrt(15), rel=1e-15)


@pytest.mark.parametrize("N", [3, 4, 5, 6, 9])
def test_p2_alpha_squared(N):
    P = make_params(N, 2)
    assert P.alpha ** 2 == pytest.approx(N * (N - 2), rel=1e-14)


@pytest.mark.parametrize("N,p", [(3, 3), (3, 1.0), (3, 0.5), (3, 4), (3, float("nan")),
                                 (3, float("inf")), (1, 0.5), (2.5, 1.5)])
def test_make_params_rejects(N, p):
    with pytest.raises(ValueError):
        make_params(N, p)


@settings(max_examples=60, deadline=None)
@given(N=st.integers(2, 9), frac=st.floats(0.02, 0.98))
def test_param_invariants(N, frac):
    p = 1 + frac * (N - 1)
    P = make_params(N, p)
    assert P.pstar > P.p and P.gamma > 0 and P.alpha > 0 and P.cnp > 0


def test_profile_examples():
    P = make_params(3, 2)
    s = profile(P, np.array([0.0, 1.0]))
    assert s.U[0] == pytest.approx(3 ** 0.25, rel=1e-15)
    assert s.U[1] == pytest.approx(3 ** 0.25 / math.sqrt(2), rel=1e-15)
    assert s.Uprime[0] == 0.0
    with pytest.raises(ValueError):
        profile(P, -1.0)


@pytest.mark.parametrize("p,valid", [(1.5, False), (2.0, True), (2.5, False)])
def test_origin_flag(p, valid):
    P = make_params(3, p)
    s = profile(P, np.array([0.0]))
    assert s.valid is valid
    if p == 2.0:
        assert s.Usecond[0] == pytest.approx(bubble_profile(P).d2(1e-9), rel=1e-6)
    if p > 2:
        assert s.W[0] == 0.0


def test_derivative_finite_difference():
    P = make_params(4, 2.5)
    r, h = 2.0, 1e-5
    U = bubble_profile(P)
    fd = (U.value(r + h) - U.value(r - h)) / (2 * h)
    assert abs(profile(P, r).Uprime / fd - 1) <= 1e-6


def test_derivatives_second_order(params):
    U = bubble_profile(params)
    r = 1.7
    errs = []
    for h in (1e-2, 5e-3):
        fd1 = (U.value(r + h) - U.value(r - h)) / (2 * h)
        fd2 = (U.value(r + h) - 2 * U.value(r) + U.value(r - h)) / h ** 2
        errs.append((abs(fd1 - U.d1(r)), abs(fd2 - U.d2(r))))
    assert 3.5 < errs[0][0] / errs[1][0] < 4.5
    assert 3.5 < errs[0][1] / errs[1][1] < 4.5


def test_profile_against_mpmath(params):
    N, p = params.N, params.p
    c = mp_constants(N, p)
    m = mp.mpf(p) / (p - 1)
    for r in (1e-4, 0.3, 1.0, 7.0, 1e3):
        rr = mp.mpf(r)
        rho = rr ** m
        U = c["alpha"] ** ((N - mp.mpf(p)) / p) * (1 + rho) ** (-(N - mp.mpf(p)) / p)
        dU = mp.diff(lambda s: c["alpha"] ** ((N - mp.mpf(p)) / p)
                     * (1 + s ** m) ** (-(N - mp.mpf(p)) / p), rr)
        s = profile(params, r)
        assert s.U == pytest.approx(float(U), rel=1e-13)
        assert s.Uprime == pytest.approx(float(dU), rel=1e-12)
        assert s.W == pytest.approx(float(abs(dU) ** (p - 2)), rel=1e-12)
        assert s.V == pytest.approx(float((c["pstar"] - 1) * U ** (c["pstar"] - 2)), rel=1e-12)


def test_profile_monotone_positive(params):
    r = np.geomspace(1e-6, 1e6, 500)
    s = profile(params, r)
    assert np.all(s.U > 0) and np.all(s.Uprime < 0) and np.all(s.W > 0)


def test_family_value():
    P = make_params(3, 2)
    x = np.array([[0.3, -0.2, 0.5], [1.0, 2.0, 0.0]])
    assert np.allclose(family_value(P, BubbleFamily(), x), bubble_profile(P).value(np.linalg.norm(x, axis=1)),
                       rtol=1e-15)
    assert family_value(P, BubbleFamily(delta=2.0), np.zeros(3))[()] == pytest.approx(2 ** -0.5 * 3 ** 0.25)
    e1 = np.array([1.0, 0, 0])
    assert family_value(P, BubbleFamily(0.5, tuple(e1)), e1)[()] == pytest.approx(0.5 ** -0.5 * 3 ** 0.25)
    with pytest.raises(ValueError):
        BubbleFamily(delta=0.0)


@settings(max_examples=40, deadline=None)
@given(delta=st.floats(0.1, 10), x=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       xi=st.lists(st.floats(-2, 2), min_size=3, max_size=3))
def test_family_scaling_covariance(delta, x, xi):
    P = make_params(3, 1.5)
    x, xi = np.array(x), np.array(xi)
    lhs = family_value(P, BubbleFamily(delta, tuple(xi)), x)
    rhs = delta ** (-(P.N - P.p) / P.p) * family_value(P, BubbleFamily(), (x - xi) / delta)
    assert lhs == pytest.approx(rhs, rel=1e-13)


@pytest.mark.parametrize("N,p,zero", [(3, 2, 1.0), (4, 3, 2 ** (2 / 3))])
def test_psi0_zero(N, p, zero):
    P = make_params(N, p)
    v, _ = kernel_profile(P, "Z0", np.array([zero * 0.999, zero, zero * 1.001]))
    assert v[0] > 0 > v[2] and abs(v[1]) < 1e-14


def test_kernel_zero_counts(params):
    r = np.geomspace(1e-6, 1e6, 4000)
    z0, _ = kernel_profile(params, "Z0", r)
    z1, pre = kernel_profile(params, "Z1", r)
    assert np.count_nonzero(np.diff(np.sign(z0))) == 1
    assert np.all(z1 > 0)
    assert kernel_profile(params, "Z1", 0.0)[0] == 0.0
    assert pre == pytest.approx(params.cnp)
    assert kernel_prefactor(params, "Z0") == pytest.approx(
        (params.N - params.p) / (params.p * (params.p - 1)) * params.amplitude)
    with pytest.raises(ValueError):
        kernel_prefactor(params, "Z2")


def test_kernels_are_family_derivatives(params):
    # -d/d delta at delta=1 gives Z0 up to the prefactor; d/d xi_1 gives Z1 x_1/|x|
    N, p = params.N, params.p
    x = np.array([0.7, 0.4, 0.2] + [0.0] * (N - 3))
    h = 1e-5
    r = np.linalg.norm(x)
    dd = (family_value(params, BubbleFamily(1 + h), x) - family_value(params, BubbleFamily(1 - h), x)) / (2 * h)
    z0, _ = kernel_profile(params, "Z0", r)
    assert -dd == pytest.approx(z0, rel=1e-7, abs=1e-10)
    e = np.zeros(N)
    e[0] = h
    dxi = (family_value(params, BubbleFamily(1, tuple(e)), x)
           - family_value(params, BubbleFamily(1, tuple(-e)), x)) / (2 * h)
    z1, _ = kernel_profile(params, "Z1", r)
    assert dxi == pytest.approx(z1 * x[0] / r, rel=1e-7)


@pytest.mark.parametrize("N,p,delta,r", [(3, 2, 1, 0.7), (5, 2.5, 1, 3.0), (3, 1.5, 2, 1.0)])
def test_plaplace_examples(N, p, delta, r):
    res = plaplace_residual(make_params(N, p), np.array([r]), BubbleFamily(delta))
    assert abs(res[0]) <= 1e-12


def test_plaplace_against_mpmath(params):
    N, p = params.N, mp.mpf(params.p)
    c = mp_constants(N, params.p)
    m = p / (p - 1)
    U = lambda s: c["alpha"] ** ((N - p) / p) * (1 + s ** m) ** (-(N - p) / p)
    flux = lambda s: s ** (N - 1) * abs(mp.diff(U, s)) ** (p - 2) * mp.diff(U, s)
    for r in (0.05, 0.8, 4.0):
        rr = mp.mpf(r)
        lhs = -mp.diff(flux, rr) / rr ** (N - 1)
        rhs = U(rr) ** (c["pstar"] - 1)
        assert abs(float(lhs / rhs - 1)) < 1e-12
        assert abs(plaplace_residual(params, np.array([r]))[0]) < 1e-12


def test_plaplace_expanded_form_agrees_at_moderate_r(params):
    r = np.geomspace(1e-2, 1e2, 50)
    assert np.max(np.abs(plaplace_residual(params, r, form="expanded"))) < 1e-9
    with pytest.raises(ValueError):
        plaplace_residual(params, r, form="other")
    with pytest.raises(ValueError):
        plaplace_residual(params, np.array([0.0]))


def test_weight_p2_is_one():
    P = make_params(4, 2)
    assert np.allclose(weight(P, np.geomspace(1e-3, 1e3, 20)), 1.0)
    rep = weight_comparison(P, "annulus_212", (1.0, 2.0))
    assert rep.inf == pytest.approx(1.0) and rep.details["lower_bound_shape"] == pytest.approx(1.0)


def test_ckn_weight_comparison():
    P = make_params(3, 1.5)
    rep = weight_comparison(P, "ckn_weight_22", (1e-4, 1e4))
    assert rep.verdict == "bounded"
    assert rep.details["exponent_0"] >= 0 and rep.details["exponent_inf"] <= 0
    r = np.geomspace(1e-4, 1e4, 20001)
    ratio = r ** (P.N * (2 - P.p) / P.p) / (r ** ((P.p - 2) / (P.p - 1))
                                             * (1 + r ** P.m) ** (-P.N * (P.p - 2) / P.p))
    assert rep.sup == pytest.approx(ratio.max(), rel=1e-6)
    with pytest.raises(ValueError):
        weight_comparison(make_params(3, 2), "ckn_weight_22")


def test_exterior_comparison():
    P = make_params(4, 3)
    rep = weight_comparison(P, "exterior_27", (1.0, 1e6))
    d = rep.details
    r = np.geomspace(1, 1e6, 5000)
    g = r ** ((P.N - P.p) / (P.p - 1)) * bubble_profile(P).value(r)
    assert d["c1"] <= g.min() * (1 + 1e-12) and g.max() <= d["c2"] * (1 + 1e-12)
    assert d["c2"] == pytest.approx(P.amplitude, rel=1e-4)
    with pytest.raises(ValueError):
        weight_comparison(P, "nope")
    with pytest.raises(ValueError):
        weight_comparison(P, "exterior_27", (0.0, 1.0))


def test_radial_profile_generic():
    P = make_params(3, 2)
    r2 = RadialProfile(P, 2, 1, 0, 0, 1, "r2")
    r = np.array([0.5, 2.0])
    assert np.allclose(r2.value(r), r ** 2) and np.allclose(r2.d1(r), 2 * r) and np.allclose(r2.d2(r), 2)
    assert psi1_profile(P).exponent_0 == pytest.approx(1 / (P.p - 1))
    assert psi0_profile(P).exponent_inf == pytest.approx(-(P.N - P.p) / (P.p - 1))
