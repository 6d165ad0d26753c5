"""Run configuration, sweep orchestration, persistence and golden comparison."""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .bubble import BubbleFamily, make_params, psi0_profile, psi1_profile, bubble_profile
from .bubble import plaplace_residual
from .harmonics import decompose, synthesize
from .modeop import Variant, assemble, kernel_dimension, lagrange_identity_check, m_cosine
from .modeop import spectrum, strong_residual
from .odeexplorer import membership, second_solution, sturm_comparison, tail_profile
from .odeexplorer import truncated_norm_growth
from .probes import (ckn_probe, embedding_constant, energy_integrals, family, hardy_probe,
                     run_family, sharp_sobolev_constant, sobolev_quotient)
from .radialgrid import DEFAULT_GRID, build_grid

__all__ = [
    "OUT_ENV",
    "RunConfig",
    "InstanceResult",
    "Report",
    "analyze_instance",
    "run_sweep",
    "write_report",
    "read_report",
    "compare_golden",
    "spectra_table",
    "fits_table",
]

OUT_ENV = "BUBBLE_NONDEG_OUT"
DEFAULT_INSTANCES = ((3, 1.5), (3, 2.0), (4, 3.0), (5, 2.5))


@dataclass
class RunConfig:
    instances: list = field(default_factory=lambda: [list(x) for x in DEFAULT_INSTANCES])
    grid: list = field(default_factory=lambda: list(DEFAULT_GRID))
    K: int = 4
    eigen_tol: float = 1e-6
    residual_tol: float = 1e-10
    fit_tol: float = 1e-2
    kernel_tol: float = 0.05
    out_dir: str = "bubble_out"
    seed: int = 0
    workers: int = 4

    def __post_init__(self):
        self.instances = [[int(n), float(p)] for n, p in self.instances]
        self.grid = [float(self.grid[0]), float(self.grid[1]), int(self.grid[2])]
        self.validate()

    def validate(self):
        for n, p in self.instances:
            make_params(n, p)
        for name in ("eigen_tol", "residual_tol", "fit_tol", "kernel_tol"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if int(self.K) != self.K or self.K < 2:
            raise ValueError("K must be an integer >= 2")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        build_grid(*self.grid)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def asdict(self) -> dict:
        return dataclasses.asdict(self)

    def sha256(self) -> str:
        # output location and pool size do not change results
        d = {k: v for k, v in self.asdict().items() if k not in ("out_dir", "workers")}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


@dataclass
class InstanceResult:
    N: int
    p: float
    verdict: str
    kernel_counts: list
    ambiguous_modes: list
    spectra: list
    certification: dict
    residuals: dict
    tail_fits: list
    membership: list
    comparison: dict
    probes: dict


@dataclass
class Report:
    config: dict
    instances: list
    provenance: dict

    @property
    def overall(self) -> str:
        if not self.instances:
            return "EMPTY"
        vs = {r.verdict for r in self.instances}
        if vs == {"NONDEGENERATE_PATTERN"}:
            return "NONDEGENERATE_PATTERN"
        if "DEGENERATE" in vs:
            return "DEGENERATE"
        return "INCONCLUSIVE"

    def to_dict(self) -> dict:
        return {"config": self.config,
                "instances": [dataclasses.asdict(r) for r in self.instances],
                "provenance": self.provenance,
                "overall": self.overall}

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        for key in ("config", "instances", "provenance"):
            if key not in d:
                raise ValueError(f"report is missing field {key!r}")
        names = [f.name for f in dataclasses.fields(InstanceResult)]
        insts = []
        for i, rec in enumerate(d["instances"]):
            missing = [n for n in names if n not in rec]
            if missing:
                raise ValueError(f"instances[{i}] missing fields {missing}")
            insts.append(InstanceResult(**{n: rec[n] for n in names}))
        return cls(config=d["config"], instances=insts, provenance=d["provenance"])


def _finite(x: float) -> float:
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("non-finite value in report")
    return x


def _residual_suite(params) -> dict:
    r = np.geomspace(DEFAULT_GRID[0], DEFAULT_GRID[1], 1000)
    pl = max(float(np.max(np.abs(plaplace_residual(params, r, BubbleFamily(delta=d)))))
             for d in (0.5, 1.0, 2.0))
    g, u = energy_integrals(params)
    out = {
        "plaplace": pl,
        "kernel_psi0": strong_residual(params, psi0_profile(params), 0, "LINEARIZED"),
        "kernel_psi1": strong_residual(params, psi1_profile(params), 1, "LINEARIZED"),
        "embedding_variant_psi0": strong_residual(params, psi0_profile(params), 0, "EMBEDDING"),
        "embedding_variant_psi1": strong_residual(params, psi1_profile(params), 1, "EMBEDDING"),
        "energy_identity": abs(g / u - 1.0),
    }
    return {k: _finite(v) for k, v in out.items()}


def _spectral_task(params, grid, k, variant, kernel_tol):
    op = assemble(params, grid, k, variant)
    sp = spectrum(op, m=4)
    extra = {}
    if variant == "LINEARIZED":
        tol = kernel_tol * (params.pstar - 1.0)
        if sp.eigenvalues[-1] > params.pstar - 1.0 + 2 * tol:
            kc = kernel_dimension(params, grid, k, tol=tol, spec=sp)
        else:
            kc = kernel_dimension(params, grid, k, tol=tol)
        extra["count"] = kc.count
        extra["verdict"] = kc.verdict
        if k == 0:
            U = bubble_profile(params).value(op.nodes)
            Z = psi0_profile(params).value(op.nodes)
            extra["cos_U"] = abs(m_cosine(op, sp.vector(0), U))
            extra["cos_psi0"] = abs(m_cosine(op, sp.vector(1), Z))
    return {"k": k, "variant": variant,
            "eigenvalues": [_finite(v) for v in sp.eigenvalues],
            "residuals": [_finite(v) for v in sp.residuals], **extra}


def _asymptotic_task(params, fit_tol):
    fits, mem = [], []
    for k in (0, 1):
        sol = second_solution(params, k)
        growth = truncated_norm_growth(params, tail_profile(params, sol), k, r_lo=sol.tail_start)
        b = 0.0 if k == 0 else 1.0
        v = membership(params, k, 0.0 if k == 0 else 1.0, b)
        failing = next(t for t in v.terms if t["term"] == v.failing_term) if v.failing_term else None
        predicted = failing["exponent"] + 1.0 if failing else float("nan")
        for name, fit, expected in (("c", sol.c_fit, sol.expected_c_exponent),
                                    ("w", sol.w_fit, sol.expected_w_exponent)):
            fits.append({"k": k, "quantity": name, "exponent": _finite(fit.exponent),
                         "expected": _finite(expected), "coefficient": _finite(fit.coefficient),
                         "window": [float(x) for x in fit.window],
                         "regression_residual": _finite(fit.regression_residual)})
        mem.append({"k": k, "profile": "second_solution", "a": 0.0 if k == 0 else 1.0, "b": b,
                    "verdict": v.member.value, "failing_term": v.failing_term,
                    "margin": _finite(v.margin), "growth_power": _finite(growth["power"]),
                    "predicted_power": _finite(predicted),
                    "wronskian_rel_dev": _finite(sol.wronskian_rel_dev),
                    "cross_check_rel_err": _finite(sol.cross_check_rel_err)})
        psi = psi0_profile(params) if k == 0 else psi1_profile(params)
        vk = membership(params, k, psi.exponent_0, psi.exponent_inf)
        mem.append({"k": k, "profile": f"psi{k}", "a": _finite(psi.exponent_0),
                    "b": _finite(psi.exponent_inf), "verdict": vk.member.value,
                    "failing_term": vk.failing_term, "margin": _finite(vk.margin),
                    "growth_power": 0.0, "predicted_power": 0.0,
                    "wronskian_rel_dev": 0.0, "cross_check_rel_err": 0.0})
    return fits, mem


def _comparison_task(params):
    idn = lagrange_identity_check(params, psi0_profile(params), psi1_profile(params), 0, 1,
                                  (1e-3, 1e3))
    st = sturm_comparison(params, 2)
    return {"identity_rel_defect_psi0_psi1": _finite(idn.relative),
            "k2_zero_found": st["zero_found"], "k2_R": _finite(st["R"]),
            "k2_lhs": _finite(st["lhs"]), "k2_rhs": _finite(st["rhs"]),
            "k2_identity_rel_defect": _finite(st["identity_rel_defect"]),
            "k2_zero_endpoint_form": _finite(st["zero_endpoint_form"]),
            "k2_ratio_increasing": st["ratio_increasing"],
            "k2_tail_exponent": _finite(st["tail_exponent"]),
            "k2_growing_root": _finite(st["growing_root"])}


def _probe_task(params, grid, K, seed):
    N, p = params.N, params.p
    alpha = N * (2.0 - p) / (2.0 * p)
    ckn_dev, ckn_holds, ckn_pert_dev = 0.0, True, math.inf
    hardy_holds = True
    s = -(N - 1.0) * (p - 2.0) / (p - 1.0)
    for kind in ("gaussian", "bump", "truncated_power"):
        if alpha > -N / 2.0:
            reps = run_family(ckn_probe, family(kind), N=N, gamma=0.0, r=params.pstar, q=2.0,
                              alpha=alpha)
            ratios = [x.ratio for x in reps]
            ckn_dev = max(ckn_dev, max(ratios) / min(ratios) - 1.0)
            ckn_holds &= all(x.verdict.value == "HOLDS" for x in reps)
            pert = run_family(ckn_probe, family(kind), N=N, gamma=0.0, r=params.pstar, q=2.0,
                              alpha=alpha + 0.1)
            pr_ = [x.ratio for x in pert]
            ckn_pert_dev = min(ckn_pert_dev, max(pr_) / min(pr_) - 1.0)
        if s > 2.0 - N:
            reps = run_family(hardy_probe, family(kind, lam_range=(2.0, 50.0)), N=N, q=2.0,
                              s=s, R=1.0)
            hardy_holds &= all(x.verdict.value == "HOLDS" for x in reps)
    emb = embedding_constant(params, K, grid)
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal(5)
    comps = [lambda r, k=k: coef[k] * np.exp(-r) * (1.0 + r) ** k for k in range(5)]
    g = build_grid(1e-2, 1e2, 64)
    dec = decompose(params, lambda r, t: synthesize(N, comps, r, t), 4, g)
    ref = np.stack([c(g.nodes) for c in comps], axis=1)
    roundtrip = float(np.max(np.abs(dec.coefficients() - ref)) / np.max(np.abs(ref)))
    return {"ckn_scale_dev": _finite(ckn_dev), "ckn_all_hold": bool(ckn_holds),
            "ckn_perturbed_scale_dev": _finite(ckn_pert_dev if math.isfinite(ckn_pert_dev) else 0.0),
            "hardy_all_hold": bool(hardy_holds),
            "embedding_constant": _finite(emb.constant), "embedding_k": emb.k_min,
            "embedding_cos_U": _finite(emb.cos_with_U),
            "embedding_per_mode": [_finite(x) for x in emb.per_mode],
            "embedding_verdict": emb.verdict.value,
            "sobolev_quotient": _finite(sobolev_quotient(params)),
            "sharp_sobolev_constant": _finite(sharp_sobolev_constant(N, p)),
            "decompose_roundtrip": roundtrip}


def analyze_instance(N: int, p: float, config: RunConfig, pool: ThreadPoolExecutor | None = None
                     ) -> InstanceResult:
    params = make_params(N, p)
    grid = build_grid(*config.grid)
    own = pool is None
    pool = pool or ThreadPoolExecutor(max_workers=config.workers)
    try:
        spec_f = [pool.submit(_spectral_task, params, grid, k, v, config.kernel_tol)
                  for v in ("LINEARIZED", "EMBEDDING") for k in range(config.K + 1)]
        res_f = pool.submit(_residual_suite, params)
        asy_f = pool.submit(_asymptotic_task, params, config.fit_tol)
        cmp_f = pool.submit(_comparison_task, params)
        prb_f = pool.submit(_probe_task, params, grid, config.K, config.seed)
        spectra = [f.result() for f in spec_f]
        fits, mem = asy_f.result()
        comparison = cmp_f.result()
        probes = prb_f.result()
        residuals = res_f.result()
    finally:
        if own:
            pool.shutdown()
    lin = [s for s in spectra if s["variant"] == "LINEARIZED"]
    counts = [s["count"] for s in lin]
    ambiguous = [s["k"] for s in lin if s["verdict"] == "AMBIGUOUS"]
    pattern = [1, 1] + [0] * (config.K - 1)
    if ambiguous:
        verdict = "INCONCLUSIVE"
    elif counts == pattern:
        verdict = "NONDEGENERATE_PATTERN"
    else:
        verdict = "DEGENERATE"
    k0 = lin[0]
    target = params.pstar - 1.0
    cert = {"k0_lowest": k0["eigenvalues"][0], "k0_second": k0["eigenvalues"][1],
            "cos_U": _finite(k0["cos_U"]), "cos_psi0": _finite(k0["cos_psi0"]),
            "k1_lowest": lin[1]["eigenvalues"][0],
            "k1_simple": bool(abs(lin[1]["eigenvalues"][1] / target - 1.0) > config.kernel_tol),
            "k2_lowest": lin[2]["eigenvalues"][0],
            "k2_gap": _finite(lin[2]["eigenvalues"][0] / target - 1.0)}
    clean = [{k: v for k, v in s.items() if k not in ("cos_U", "cos_psi0")} for s in spectra]
    return InstanceResult(N=params.N, p=params.p, verdict=verdict, kernel_counts=counts,
                          ambiguous_modes=ambiguous, spectra=clean, certification=cert,
                          residuals=residuals, tail_fits=fits, membership=mem,
                          comparison=comparison, probes=probes)


def _versions() -> dict:
    import scipy
    return {"bubblenondeg": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_sweep(config: RunConfig) -> Report:
    """Analyze every configured instance; results are ordered as configured."""
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        results = [analyze_instance(n, p, config, pool) for n, p in config.instances]
    prov = {"config_sha256": config.sha256(), "versions": _versions(),
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds")}
    return Report(config=config.asdict(), instances=results, provenance=prov)


def spectra_table(report: Report) -> str:
    rows = []
    for inst in report.instances:
        for s in inst.spectra:
            for i, (ev, res) in enumerate(zip(s["eigenvalues"], s["residuals"])):
                rows.append((inst.N, inst.p, s["variant"], s["k"], i, ev, res))
    rows.sort()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["N", "p", "variant", "k", "index", "eigenvalue", "residual"])
    for N, p, v, k, i, ev, res in rows:
        w.writerow([N, repr(p), v, k, i, repr(ev), repr(res)])
    return buf.getvalue()


def fits_table(report: Report) -> str:
    rows = []
    for inst in report.instances:
        for f in inst.tail_fits:
            rows.append((inst.N, inst.p, f["k"], f["quantity"], f["exponent"], f["expected"],
                         f["coefficient"], f["window"][0], f["window"][1],
                         f["regression_residual"]))
    rows.sort()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["N", "p", "k", "quantity", "exponent", "expected", "coefficient",
                "window_lo", "window_hi", "regression_residual"])
    for row in rows:
        w.writerow([row[0], repr(row[1]), row[2], row[3]] + [repr(float(x)) for x in row[4:]])
    return buf.getvalue()


def write_report(report: Report, out_dir) -> dict:
    """Write ``report.json``, ``spectra.csv`` and ``fits.csv``; return their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.json", "spectra": out / "spectra.csv",
             "fits": out / "fits.csv"}
    paths["report"].write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True,
                                          allow_nan=False) + "\n", encoding="utf-8")
    with open(paths["spectra"], "w", encoding="utf-8", newline="") as fh:
        fh.write(spectra_table(report))
    with open(paths["fits"], "w", encoding="utf-8", newline="") as fh:
        fh.write(fits_table(report))
    return paths


def read_report(path) -> Report:
    path = Path(path)
    if path.is_dir():
        path = path / "report.json"
    with open(path, encoding="utf-8") as fh:
        return Report.from_dict(json.load(fh))


# golden comparison ---------------------------------------------------------

def _tolerance(path: str, tols: dict):
    """(kind, value) for a leaf path.

    Eigenvalues compare relatively, fit exponents absolutely, residual-type
    quantities by which side of ``residual_tol`` they fall on, anything else
    relatively with an absolute floor of ``eigen_tol``.
    """
    if "eigenvalues" in path or path.endswith(("k0_lowest", "k0_second", "k1_lowest", "k2_lowest")):
        return "rel", tols["eigen_tol"]
    if ".residuals." in path or path.endswith(("rel_defect", "rel_dev", "rel_err", "roundtrip")) \
            or "residuals[" in path:
        return "threshold", tols["residual_tol"]
    if ".tail_fits" in path or "power" in path or "exponent" in path:
        return "abs", tols["fit_tol"]
    return "mixed", tols["eigen_tol"]


def _walk(a, b, path, tols, out):
    if isinstance(a, dict) and isinstance(b, dict):
        for key in sorted(set(a) | set(b)):
            sub = f"{path}.{key}" if path else str(key)
            if key not in a:
                out.append({"field": sub, "issue": "missing in report", "golden": b[key]})
            elif key not in b:
                out.append({"field": sub, "issue": "missing in golden", "report": a[key]})
            else:
                _walk(a[key], b[key], sub, tols, out)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            out.append({"field": path, "issue": f"length {len(a)} != {len(b)}"})
            return
        for i, (x, y) in enumerate(zip(a, b)):
            _walk(x, y, f"{path}[{i}]", tols, out)
    elif isinstance(a, bool) or isinstance(b, bool) or isinstance(a, str) or a is None:
        if a != b:
            out.append({"field": path, "issue": "value differs", "report": a, "golden": b})
    elif isinstance(a, (int, float)) and isinstance(b, (int, float)):
        kind, tol = _tolerance(path, tols)
        if kind == "threshold":
            bad = (abs(a) <= tol) != (abs(b) <= tol) or (abs(a) > tol and abs(a - b) > 1e-2 * abs(b))
        elif kind == "abs":
            bad = abs(a - b) > tol
        elif kind == "mixed":
            bad = abs(a - b) > tol * max(abs(b), 1.0)
        else:
            bad = abs(a - b) > tol * max(abs(b), 1e-300)
        if bad:
            out.append({"field": path, "issue": f"{kind} tolerance {tol:g} exceeded",
                        "report": a, "golden": b})
    else:
        out.append({"field": path, "issue": "type differs", "report": a, "golden": b})


def compare_golden(report: Report, golden: Report | dict, config: RunConfig | None = None) -> list:
    """Field-by-field differences; provenance is ignored.  Empty list means match."""
    g = golden.to_dict() if isinstance(golden, Report) else dict(golden)
    tols = (config or RunConfig.from_dict(report.config)).asdict()
    a = report.to_dict()
    a = {k: v for k, v in a.items() if k not in ("provenance", "config")}
    g = {k: v for k, v in g.items() if k not in ("provenance", "config")}
    out: list = []
    _walk(a, g, "", tols, out)
    return out


def resolve_out_dir(cli_value: str | None, config: RunConfig) -> str:
    """CLI ``--out`` beats the environment variable, which beats the config file."""
    if cli_value:
        return cli_value
    env = os.environ.get(OUT_ENV)
    return env if env else config.out_dir
