"""Acceptance suite: one recorded PASS/FAIL line per criterion."""
import numpy as np
import pytest

from bubblenondeg.bubble import BubbleFamily, make_params, plaplace_residual, psi0_profile, psi1_profile
from bubblenondeg.harmonics import (ZonalBasis, cartesian_linearized_residual, decompose,
                                    quadrature, synthesize)
from bubblenondeg.modeop import assemble, lagrange_identity_check, spectrum, strong_residual
from bubblenondeg.odeexplorer import (membership, second_solution, sturm_comparison, tail_profile,
                                      truncated_norm_growth)
from bubblenondeg.probes import (Verdict, ckn_probe, embedding_constant, energy_integrals, family,
                                 gaussian, hardy_probe, run_family)
from bubblenondeg.radialgrid import DEFAULT_GRID, RadialField, build_grid
from bubblenondeg.report import spectra_table, fits_table

from conftest import INSTANCES


def _fmt(x):
    return f"{x:.3g}"


def test_criterion_01_exact_residuals(criterion):
    r = np.geomspace(DEFAULT_GRID[0], DEFAULT_GRID[1], 1000)
    worst = 0.0
    for N, p in INSTANCES:
        P = make_params(N, p)
        for d in (0.5, 1.0, 2.0):
            worst = max(worst, float(np.max(np.abs(plaplace_residual(P, r, BubbleFamily(delta=d))))))
    ok = worst <= 1e-10
    assert criterion(1, "exact-solution residuals", ok, f"max {_fmt(worst)} <= 1e-10")


def test_criterion_02_kernel_residuals(criterion):
    kernel, emb = 0.0, np.inf
    for N, p in INSTANCES:
        P = make_params(N, p)
        kernel = max(kernel, strong_residual(P, psi0_profile(P), 0),
                     strong_residual(P, psi1_profile(P), 1))
        if p != 2:
            emb = min(emb, strong_residual(P, psi0_profile(P), 0, "EMBEDDING"),
                      strong_residual(P, psi1_profile(P), 1, "EMBEDDING"))
    ok = kernel <= 1e-10 and emb >= 1e-2
    assert criterion(2, "kernel residuals", ok,
                     f"sigma=p-1 max {_fmt(kernel)} <= 1e-10; sigma=1 min {_fmt(emb)} >= 1e-2 (p != 2)")


def test_criterion_03_spectral_certification(criterion, default_sweeps):
    rep = default_sweeps[0]
    bad = []
    for inst in rep.instances:
        P = make_params(inst.N, inst.p)
        c = inst.certification
        target = P.pstar - 1
        checks = {
            "counts": inst.kernel_counts == [1, 1, 0, 0, 0] and not inst.ambiguous_modes,
            "k0 has p-1": abs(c["k0_lowest"] / (P.p - 1) - 1) <= 1e-3,
            "k0 has p*-1": abs(c["k0_second"] / target - 1) <= 1e-3,
            "cos U": c["cos_U"] >= 0.999,
            "cos psi0": c["cos_psi0"] >= 0.999,
            "k1 lowest": abs(c["k1_lowest"] / target - 1) <= 1e-2,
            "k1 simple": c["k1_simple"],
            "k2 gap": c["k2_gap"] >= 0.05,
        }
        bad += [f"({inst.N},{inst.p:g}) {k}" for k, v in checks.items() if not v]
    ok = not bad and len(rep.instances) == 4
    min_gap = min(i.certification["k2_gap"] for i in rep.instances)
    min_cos = min(min(i.certification["cos_U"], i.certification["cos_psi0"]) for i in rep.instances)
    assert criterion(3, "spectral certification", ok,
                     f"counts (1,1,0,0,0) on all; min cos {min_cos:.6f}; min k2 gap {min_gap:.3f}"
                     + (f"; failed {bad}" if bad else ""))


def _certified(P, grid):
    ev0 = spectrum(assemble(P, grid, 0), m=2).eigenvalues
    ev1 = spectrum(assemble(P, grid, 1), m=1).eigenvalues
    return np.array([ev0[0], ev0[1], ev1[0]])


def test_criterion_04_robustness(criterion):
    lo, hi, n = DEFAULT_GRID
    move_n, move_d = 0.0, 0.0
    ratios = []
    for N, p in INSTANCES:
        P = make_params(N, p)
        base = _certified(P, build_grid(lo, hi, n))
        fine = _certified(P, build_grid(lo, hi, 2 * n))
        half = _certified(P, build_grid(lo, hi, n // 2))
        narrow = _certified(P, build_grid(1e-4, 1e4, round(n * 8 / 12)))
        move_n = max(move_n, float(np.max(np.abs(fine / base - 1))))
        move_d = max(move_d, float(np.max(np.abs(narrow / base - 1))))
        ratios += list((half - base) / (base - fine))
    ok = move_n <= 1e-3 and move_d <= 1e-3 and all(3 <= q <= 5 for q in ratios)
    assert criterion(4, "grid/domain robustness", ok,
                     f"refinement {_fmt(move_n)}, domain {_fmt(move_d)} <= 1e-3; "
                     f"Richardson in [{min(ratios):.3f}, {max(ratios):.3f}] within [3, 5]")


def test_criterion_05_second_solutions(criterion):
    errs, power_errs, verdicts, w0 = [], [], [], []
    for N, p in INSTANCES:
        P = make_params(N, p)
        winf = -(N - 1) * (p - 2) / (p - 1)
        for k in (0, 1):
            s = second_solution(P, k)
            errs.append(abs(s.c_fit.exponent / s.expected_c_exponent - 1))
            if k == 0:
                w0.append(abs(s.w_fit.exponent) <= 1e-2 and abs(s.w_fit.coefficient) > 1e-3)
            else:
                errs.append(abs(s.w_fit.exponent - 1))
            b = s.expected_w_exponent
            v = membership(P, k, 0.0 if k == 0 else 1.0 / (p - 1), b)
            verdicts.append(v.member.value)
            g = truncated_norm_growth(P, tail_profile(P, s), k, r_lo=s.tail_start)
            predicted = max(2 * (b - 1) + N - 1 + winf, 2 * b + N - 3 + winf) + 1
            power_errs.append(abs(g["power"] / predicted - 1))
    ok = (max(errs) <= 1e-2 and all(w0) and set(verdicts) == {"NOT_MEMBER"}
          and max(power_errs) <= 5e-2)
    assert criterion(5, "second solutions", ok,
                     f"exponent rel err {_fmt(max(errs))} <= 1e-2; w(k=0) -> nonzero constant: {all(w0)}; "
                     f"membership {sorted(set(verdicts))}; growth power err {_fmt(max(power_errs))} <= 5e-2")


def test_criterion_06_embedding_constant(criterion):
    vals, bad = [], []
    grid = build_grid()
    for N, p in INSTANCES:
        est = embedding_constant(make_params(N, p), K=4, grid=grid)
        vals.append(est.constant)
        if not (abs(est.constant - 1) <= 1e-2 and est.k_min == 0 and est.cos_with_U >= 0.999
                and est.verdict is Verdict.HOLDS and min(est.per_mode) > 0):
            bad.append((N, p))
    ok = not bad
    assert criterion(6, "embedding constant", ok,
                     f"min_k mu_1 in [{min(vals):.6f}, {max(vals):.6f}] = 1 +- 1%, at k=0, positive"
                     + (f"; failed {bad}" if bad else ""))


def test_criterion_07_energy_identity(criterion):
    worst = 0.0
    for N, p in INSTANCES:
        g, u = energy_integrals(make_params(N, p))
        worst = max(worst, abs(g / u - 1))
    ok = worst <= 1e-8
    assert criterion(7, "energy identity", ok, f"max rel defect {_fmt(worst)} <= 1e-8")


def test_criterion_08_harmonics(criterion):
    ortho, eig = 0.0, 0.0
    for N in range(2, 7):
        x, w = quadrature(N, 40)
        Y = np.array([ZonalBasis(N, k).value(x) for k in range(9)])
        ortho = max(ortho, float(np.max(np.abs((Y * w) @ Y.T - np.eye(9)))))
        for k in range(9):
            B = ZonalBasis(N, k)
            eig = max(eig, float(np.max(np.abs(B.laplace_beltrami(x) + B.eigenvalue * B.value(x))))
                      / max(1.0, B.eigenvalue))
    rng = np.random.default_rng(0)
    g = build_grid(1e-2, 1e2, 64)
    rt = 0.0
    for N in (3, 4):
        a = rng.standard_normal(5)
        f = [lambda r, k=k: a[k] * r ** k / (1 + r * r) ** (k + 1) for k in range(5)]
        d = decompose(N, lambda r, t: synthesize(N, f, r, t), 4, g)
        ref = np.stack([fk(g.nodes) for fk in f], axis=1)
        rt = max(rt, float(np.max(np.abs(d.coefficients() - ref)) / np.max(np.abs(ref))))
    P = make_params(3, 2)
    ratios = [cartesian_linearized_residual(P, z, 0.1) / cartesian_linearized_residual(P, z, 0.05)
              for z in ("Z0", "Z1")]
    ok = ortho <= 1e-12 and eig <= 1e-12 and rt <= 1e-10 and all(abs(q - 4) <= 0.3 for q in ratios)
    assert criterion(8, "harmonics layer", ok,
                     f"orthonormality {_fmt(ortho)}, eigenrelation {_fmt(eig)} <= 1e-12; "
                     f"round-trip {_fmt(rt)} <= 1e-10; Richardson Z0 {ratios[0]:.3f}, Z1 {ratios[1]:.3f} in 4 +- 0.3")


def test_criterion_09_identity_layer(criterion):
    defect, signs = 0.0, []
    for N, p in INSTANCES:
        P = make_params(N, p)
        chk = lagrange_identity_check(P, psi0_profile(P), psi1_profile(P), 0, 1, (1e-3, 1e3))
        defect = max(defect, chk.relative)
        out = sturm_comparison(P, 2)
        signs.append(not out["zero_found"] and out["lhs"] > 0 and out["rhs"] > 0
                     and out["identity_rel_defect"] <= 1e-8)
    ok = defect <= 1e-8 and all(signs)
    assert criterion(9, "identity layer", ok,
                     f"(psi0, psi1) defect {_fmt(defect)} <= 1e-8; k=2 sign structure reproduced on "
                     f"{sum(signs)}/{len(signs)} instances")


def test_criterion_10_probes(criterion, default_sweeps):
    kw = dict(N=3, gamma=0.0, r=3.0, q=2.0, alpha=0.5)
    inv = 0.0
    for phi in family("gaussian", 5) + family("bump", 5):
        base = ckn_probe(phi=phi, **kw).ratio
        for lam in (0.5, 2.0):
            inv = max(inv, abs(ckn_probe(phi=phi.rescaled(lam), **kw).ratio / base - 1))
    pert = dict(kw, alpha=0.6)
    broken = abs(ckn_probe(phi=gaussian(2.0), **pert).ratio / ckn_probe(phi=gaussian(1.0), **pert).ratio - 1)
    holds, total = 0, 0
    for N, p in INSTANCES:
        P = make_params(N, p)
        s = -(N - 1) * (p - 2) / (p - 1)
        for kind in ("gaussian", "bump", "truncated_power"):
            ck = dict(N=N, gamma=0.0, r=P.pstar, q=2.0, alpha=N * (2 - p) / (2 * p))
            reps = run_family(ckn_probe, family(kind), **ck)
            reps += run_family(hardy_probe, family(kind, lam_range=(2.0, 50.0)), N=N, q=2.0, s=s, R=1.0)
            holds += sum(r.verdict is Verdict.HOLDS for r in reps)
            total += len(reps)
    a, b = default_sweeps
    same = spectra_table(a) == spectra_table(b) and fits_table(a) == fits_table(b)
    ok = inv <= 1e-10 and broken >= 1e-3 and holds == total and same
    assert criterion(10, "probes and determinism", ok,
                     f"CKN invariance {_fmt(inv)} <= 1e-10; perturbed {_fmt(broken)} >= 1e-3; "
                     f"HOLDS {holds}/{total}; identical CSVs: {same}")
