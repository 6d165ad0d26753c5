"""Command-line interface.

Exit codes: 0 all verdicts as expected, 1 internal error, 2 an INCONCLUSIVE
verdict, 3 golden mismatch, 4 an unexpected (DEGENERATE) verdict.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bubble import BubbleFamily, make_params, plaplace_residual, psi0_profile, psi1_profile
from .bubble import kernel_prefactor
from .radialgrid import DEFAULT_GRID, build_grid

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_GOLDEN, EXIT_DEGENERATE = 0, 1, 2, 3, 4


def _grid_arg(s: str):
    parts = s.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected r_min,r_max,cells")
    try:
        return float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _common() -> argparse.ArgumentParser:
    c = argparse.ArgumentParser(add_help=False)
    c.add_argument("--n", type=int, help="dimension N")
    c.add_argument("--p", type=float, help="exponent p, 1 < p < N")
    c.add_argument("--k", type=int, default=None, help="mode index")
    c.add_argument("--variant", choices=["LINEARIZED", "EMBEDDING"], default="LINEARIZED")
    c.add_argument("--grid", type=_grid_arg, default=None, help="r_min,r_max,cells")
    c.add_argument("--out", default=None, help="output directory")
    c.add_argument("--config", default=None, help="JSON run configuration")
    c.add_argument("--golden", default=None, help="golden report to compare against")
    return c


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(prog="bubble-nondeg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("constants", parents=[common], help="derived constants of an instance")
    sub.add_parser("residuals", parents=[common], help="exact-solution and kernel residuals")
    s = sub.add_parser("spectrum", parents=[common], help="lowest generalized eigenvalues of a mode")
    s.add_argument("--m", type=int, default=4, help="number of eigenvalues")
    sub.add_parser("nondegeneracy", parents=[common], help="kernel counts for k = 0..K")
    sub.add_parser("second-solution", parents=[common], help="second solutions and tail fits")
    s = sub.add_parser("membership", parents=[common], help="weighted-space membership oracle")
    s.add_argument("--a", type=float, required=True, help="power at the origin")
    s.add_argument("--b", type=float, required=True, help="power at infinity")
    s.add_argument("--a-deriv", type=float, default=None)
    s.add_argument("--b-deriv", type=float, default=None)
    sub.add_parser("probes", parents=[common], help="inequality probes over the test families")
    s = sub.add_parser("decompose", parents=[common], help="zonal decomposition of a kernel field")
    s.add_argument("--field", choices=["Z0", "Z1", "U"], default="Z1")
    s = sub.add_parser("sweep", parents=[common], help="full verification sweep")
    s.add_argument("--instances", default=None, help="e.g. '3,1.5;3,2'")
    s.add_argument("--figures", action="store_true", help="also render PNG figures (matplotlib)")
    s = sub.add_parser("report-diff", parents=[common], help="compare a report with a golden file")
    s.add_argument("report", help="report.json or its directory")
    return ap


def _config(args):
    from .report import RunConfig
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.grid is not None:
        cfg.grid = list(args.grid)
        cfg.validate()
    return cfg


def _params(args, cfg):
    if args.n is not None and args.p is not None:
        return make_params(args.n, args.p)
    if args.n is not None or args.p is not None:
        raise ValueError("--n and --p must be given together")
    if not cfg.instances:
        raise ValueError("no instance: give --n and --p")
    return make_params(*cfg.instances[0])


def _emit(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def _out(args, cfg) -> Path:
    from .report import resolve_out_dir
    return Path(resolve_out_dir(args.out, cfg))


def cmd_constants(args, cfg):
    P = _params(args, cfg)
    d = P.asdict()
    d["lambda_k"] = [P.lambda_k(k) for k in range(cfg.K + 1)]
    d["kernel_prefactors"] = {w: kernel_prefactor(P, w) for w in ("Z0", "Z1")}
    _emit(d)
    return EXIT_OK


def cmd_residuals(args, cfg):
    from .modeop import strong_residual
    from .probes import energy_integrals
    P = _params(args, cfg)
    r = np.geomspace(DEFAULT_GRID[0], DEFAULT_GRID[1], 1000)
    pl = {str(d): float(np.max(np.abs(plaplace_residual(P, r, BubbleFamily(delta=d)))))
          for d in (0.5, 1.0, 2.0)}
    g, u = energy_integrals(P)
    _emit({"plaplace_by_delta": pl,
           "kernel_psi0": strong_residual(P, psi0_profile(P), 0, args.variant),
           "kernel_psi1": strong_residual(P, psi1_profile(P), 1, args.variant),
           "variant": args.variant, "energy_identity": abs(g / u - 1.0)})
    return EXIT_OK


def cmd_spectrum(args, cfg):
    from .modeop import assemble, spectra_csv, spectrum
    P = _params(args, cfg)
    k = args.k or 0
    op = assemble(P, build_grid(*cfg.grid), k, args.variant)
    sp = spectrum(op, m=args.m)
    rows = [(P.N, P.p, k, args.variant, i, float(v), float(res))
            for i, (v, res) in enumerate(zip(sp.eigenvalues, sp.residuals))]
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"spectrum_N{P.N}_p{P.p:g}_k{k}_{args.variant}.csv", "w",
              encoding="utf-8", newline="") as fh:
        fh.write(spectra_csv(rows))
    _emit({"N": P.N, "p": P.p, "k": k, "variant": args.variant,
           "eigenvalues": [float(v) for v in sp.eigenvalues],
           "residuals": [float(v) for v in sp.residuals]})
    return EXIT_OK


def cmd_nondegeneracy(args, cfg):
    from .modeop import nondegeneracy
    P = _params(args, cfg)
    K = args.k if args.k is not None else cfg.K
    verdict, counts = nondegeneracy(P, build_grid(*cfg.grid), K=K,
                                    tol=cfg.kernel_tol * (P.pstar - 1.0))
    _emit({"N": P.N, "p": P.p, "verdict": verdict,
           "counts": [{"k": c.k, "count": c.count, "verdict": c.verdict,
                       "eigenvalues": c.eigenvalues} for c in counts]})
    return {"NONDEGENERATE_PATTERN": EXIT_OK, "INCONCLUSIVE": EXIT_INCONCLUSIVE}.get(
        verdict, EXIT_DEGENERATE)


def cmd_second_solution(args, cfg):
    from .odeexplorer import membership, second_solution
    P = _params(args, cfg)
    ks = [args.k] if args.k is not None else [0, 1]
    res = []
    for k in ks:
        s = second_solution(P, k)
        v = membership(P, k, 0.0 if k == 0 else 1.0, s.expected_w_exponent)
        res.append({"k": k, "c_fit": s.c_fit.as_record(), "w_fit": s.w_fit.as_record(),
                    "expected_c_exponent": s.expected_c_exponent,
                    "expected_w_exponent": s.expected_w_exponent,
                    "wronskian_rel_dev": s.wronskian_rel_dev,
                    "cross_check_rel_err": s.cross_check_rel_err,
                    "membership": v.member.value, "failing_term": v.failing_term})
    _emit(res)
    return EXIT_OK


def cmd_membership(args, cfg):
    from .odeexplorer import membership
    P = _params(args, cfg)
    v = membership(P, args.k or 0, args.a, args.b, args.a_deriv, args.b_deriv)
    _emit({"verdict": v.member.value, "failing_term": v.failing_term, "margin": v.margin,
           "terms": v.terms})
    return EXIT_OK


def cmd_probes(args, cfg):
    from .probes import ckn_probe, family, hardy_probe, reports_jsonl, run_family
    P = _params(args, cfg)
    N, p = P.N, P.p
    alpha = N * (2.0 - p) / (2.0 * p)
    s = -(N - 1.0) * (p - 2.0) / (p - 1.0)
    reps = []
    for kind in ("gaussian", "bump", "truncated_power"):
        reps += run_family(ckn_probe, family(kind), N=N, gamma=0.0, r=P.pstar, q=2.0, alpha=alpha)
        reps += run_family(hardy_probe, family(kind, lam_range=(2.0, 50.0)), N=N, q=2.0, s=s, R=1.0)
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "probes.jsonl").write_text(reports_jsonl(reps), encoding="utf-8")
    summary = {}
    for r in reps:
        key = f"{r.inequality}:{r.test_function.split('(')[0]}"
        summary.setdefault(key, {"verdicts": set(), "family_constant": 0.0})
        summary[key]["verdicts"].add(r.verdict.value)
        summary[key]["family_constant"] = r.family_constant
    _emit({k: {"verdicts": sorted(v["verdicts"]), "family_constant": v["family_constant"]}
           for k, v in summary.items()})
    return EXIT_OK


def cmd_decompose(args, cfg):
    from .bubble import bubble_profile
    from .harmonics import decompose, decomposition_csv
    P = _params(args, cfg)
    K = args.k if args.k is not None else cfg.K
    if args.field == "Z0":
        prof, pre = psi0_profile(P), kernel_prefactor(P, "Z0")
        phi = lambda r, t: pre * prof.value(r) + 0.0 * t
    elif args.field == "Z1":
        prof, pre = psi1_profile(P), kernel_prefactor(P, "Z1")
        phi = lambda r, t: pre * t * prof.value(r)
    else:
        prof = bubble_profile(P)
        phi = lambda r, t: prof.value(r) + 0.0 * t
    d = decompose(P, phi, K, build_grid(1e-3, 1e3, 96))
    out = _out(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"decompose_{args.field}.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(decomposition_csv(d))
    norms = [float(np.max(np.abs(c.values))) for c in d.components]
    _emit({"field": args.field, "K": K, "max_abs_component": norms,
           "max_truncation": d.max_truncation})
    return EXIT_OK


def _verdict_code(report) -> int:
    vs = {r.verdict for r in report.instances}
    if "DEGENERATE" in vs:
        return EXIT_DEGENERATE
    if "INCONCLUSIVE" in vs:
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def _golden_check(report, path, cfg) -> int:
    from .report import compare_golden, read_report
    diffs = compare_golden(report, read_report(path), cfg)
    _emit({"golden": str(path), "differences": diffs})
    return EXIT_GOLDEN if diffs else EXIT_OK


def cmd_sweep(args, cfg):
    from .report import run_sweep, write_report
    if args.instances is not None:
        cfg.instances = [[int(a), float(b)] for a, b in
                         (item.split(",") for item in args.instances.split(";") if item.strip())]
    elif args.n is not None or args.p is not None:
        cfg.instances = [[_params(args, cfg).N, _params(args, cfg).p]]
    if args.k is not None:
        cfg.K = args.k
    cfg.validate()
    report = run_sweep(cfg)
    out = _out(args, cfg)
    paths = write_report(report, out)
    if args.figures:
        from .plotting import render_figures
        paths.update({p.stem + "_png": p for p in render_figures(report, out)})
    _emit({"overall": report.overall,
           "instances": [{"N": r.N, "p": r.p, "verdict": r.verdict,
                          "kernel_counts": r.kernel_counts} for r in report.instances],
           "files": {k: str(v) for k, v in sorted(paths.items())}})
    code = _verdict_code(report)
    if args.golden:
        g = _golden_check(report, args.golden, cfg)
        code = code or g
    return code


def cmd_report_diff(args, cfg):
    from .report import read_report
    if not args.golden:
        raise ValueError("report-diff needs --golden FILE")
    report = read_report(args.report)
    return _golden_check(report, args.golden, cfg if args.config else None)


COMMANDS = {
    "constants": cmd_constants,
    "residuals": cmd_residuals,
    "spectrum": cmd_spectrum,
    "nondegeneracy": cmd_nondegeneracy,
    "second-solution": cmd_second_solution,
    "membership": cmd_membership,
    "probes": cmd_probes,
    "decompose": cmd_decompose,
    "sweep": cmd_sweep,
    "report-diff": cmd_report_diff,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config(args)
        return COMMANDS[args.command](args, cfg)
    except (ValueError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
