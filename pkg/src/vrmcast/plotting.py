"""Sweep figures: one SVG line chart per metric, one series per scheme.

Output is byte-stable: regeneration from identical sweep tables produces
identical files, so charts can be diffed alongside their CSVs.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

plt.rcParams.update(
    {
        "svg.hashsalt": "vrmcast",
        "svg.fonttype": "none",
        "figure.figsize": (6.0, 4.0),
        "axes.grid": True,
        "grid.alpha": 0.3,
    }
)

SCHEME_STYLE = {
    "UREAC": dict(color="#888888", marker="s"),
    "MREAC": dict(color="#1f77b4", marker="o"),
    "MPROAC": dict(color="#2ca02c", marker="^"),
    "MPROAC+": dict(color="#d62728", marker="d"),
}

METRIC_LABELS = {
    "avg_delay_ms": "average frame delay (ms)",
    "p99_delay_ms": "99th percentile frame delay (ms)",
    "hd_delivery_rate": "HD delivery rate",
    "delivered_jaccard": "delivered-tiles overlap index",
}


def plot_sweep_metric(
    rows: list[dict],
    param: str,
    metric: str,
    out_path: str,
) -> None:
    """Seed-averaged metric vs the sweep parameter, one line per scheme."""
    fig, ax = plt.subplots()
    schemes = sorted({r["scheme"] for r in rows}, key=_scheme_order)
    for scheme in schemes:
        pts: dict[float, list[float]] = {}
        for r in rows:
            if r["scheme"] != scheme:
                continue
            pts.setdefault(float(r[param]), []).append(float(r[metric]))
        xs = sorted(pts)
        ys = [sum(pts[x]) / len(pts[x]) for x in xs]
        style = SCHEME_STYLE.get(scheme, {})
        ax.plot(xs, ys, label=scheme, **style)
    ax.set_xlabel(param)
    ax.set_ylabel(METRIC_LABELS.get(metric, metric))
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _scheme_order(name: str) -> int:
    order = ["UREAC", "MREAC", "MPROAC", "MPROAC+"]
    return order.index(name) if name in order else len(order)
