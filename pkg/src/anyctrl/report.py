"""Render report figures to files alongside the delimited output.

Purely optional: every figure redraws data that is already emitted as CSV
or JSON, so skipping this module never loses information.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .aggregate import ReturnPmf
from .certify import RegionPoint

_MODEL_STYLE = {
    "omega": dict(color="tab:blue", label="renewal certificate (buffered)"),
    "theta": dict(color="tab:green", label="renewal certificate (baseline)"),
    "upsilon": dict(color="tab:red", label="worst-case criterion"),
}


def render_region_figure(curves: dict[str, list[RegionPoint]], path: str | Path) -> Path:
    """Stability-region boundaries alpha*(rho), one curve per model."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for model, points in curves.items():
        style = _MODEL_STYLE.get(model, {"label": model})
        ax.plot([p.rho for p in points], [p.alpha_star for p in points], **style)
    ax.set_xlabel(r"contraction factor $\rho$")
    ax.set_ylabel(r"largest admissible growth factor $\alpha^*$")
    ax.set_title("Stability region boundaries")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def render_sweep_figure(records: list[dict], path: str | Path) -> Path:
    """Empirical cost versus buffer capacity, one curve per controller."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    controllers = []
    for rec in records:
        if rec["controller"] not in controllers:
            controllers.append(rec["controller"])
    for controller in controllers:
        rows = [r for r in records if r["controller"] == controller and r["j_mean"] is not None]
        rows.sort(key=lambda r: r["capacity"])
        ax.errorbar(
            [r["capacity"] for r in rows],
            [r["j_mean"] for r in rows],
            yerr=[r["j_stderr"] for r in rows],
            marker="o",
            capsize=3,
            label=controller,
        )
    ax.set_xlabel(r"buffer capacity $\Lambda$")
    ax.set_ylabel("empirical cost J")
    ax.set_title("Controller cost comparison")
    ax.grid(True, alpha=0.3)
    ax.legend()
    return _save(fig, path)


def render_pmf_figure(pmf: ReturnPmf, path: str | Path) -> Path:
    """First-return-time distribution on a log probability axis."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    js = list(range(1, pmf.j_max + 1))
    ax.bar(js, pmf.mass, width=0.8, color="tab:blue")
    ax.set_yscale("log")
    ax.set_xlabel("return time j (steps)")
    ax.set_ylabel("probability")
    kind = "buffer depletion" if pmf.kind == "delta" else "zero availability"
    ax.set_title(f"First-return-time distribution ({kind}); tail <= {pmf.tail:.3g}")
    ax.grid(True, axis="y", alpha=0.3)
    return _save(fig, path)


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
