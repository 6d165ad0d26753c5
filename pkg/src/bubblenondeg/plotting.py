"""Optional figures from a sweep report.  Needs matplotlib (the ``plot`` extra)."""
from __future__ import annotations

from pathlib import Path


def _pyplot():
    try:
        import matplotlib
    except ImportError as exc:  # pragma: no cover - depends on the environment
        raise RuntimeError("figures need matplotlib; install the 'plot' extra") from exc
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def render_figures(report, out_dir) -> list:
    """Write ``spectra.png`` and ``embedding.png``; return the paths."""
    plt = _pyplot()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []

    n = max(len(report.instances), 1)
    fig, axes = plt.subplots(1, n, figsize=(3.2 * n, 3.0), squeeze=False)
    for ax, inst in zip(axes[0], report.instances):
        target = inst.N * inst.p / (inst.N - inst.p) - 1.0
        for s in inst.spectra:
            if s["variant"] != "LINEARIZED":
                continue
            ax.plot([s["k"]] * len(s["eigenvalues"]), s["eigenvalues"], "o", ms=4, color="C0")
        ax.axhline(target, color="C3", lw=0.8, ls="--")
        ax.set_yscale("log")
        ax.set_title(f"N={inst.N}, p={inst.p:g}", fontsize=9)
        ax.set_xlabel("mode k")
    axes[0][0].set_ylabel("eigenvalue")
    fig.tight_layout()
    paths.append(out / "spectra.png")
    fig.savefig(paths[-1], dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(4.0, 3.0))
    for inst in report.instances:
        per = inst.probes["embedding_per_mode"]
        ax.plot(range(len(per)), per, "o-", ms=3, label=f"({inst.N}, {inst.p:g})")
    ax.axhline(1.0, color="k", lw=0.6)
    ax.set_xlabel("mode k")
    ax.set_ylabel("lowest embedding eigenvalue")
    if report.instances:
        ax.legend(fontsize=7)
    fig.tight_layout()
    paths.append(out / "embedding.png")
    fig.savefig(paths[-1], dpi=120)
    plt.close(fig)
    return paths
