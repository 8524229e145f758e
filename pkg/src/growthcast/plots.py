"""Static chart emitters for reports and predictions.

Data lives in months; figures show years on the x axis. All functions
write an image file and return its path.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

CLUSTER_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def plot_clusters(cluster_doc: dict, out_path) -> Path:
    """Cluster mean curves on a years axis.

    Accepts either the /v1/clusters wire shape (one panel with 95% bands) or
    a cluster-sweep document (one panel per cluster count).
    """
    grid_years = np.asarray(cluster_doc["grid_months"], dtype=float) / 12.0
    if "entries" in cluster_doc:
        entries = cluster_doc["entries"]
        ncols = min(len(entries), 3)
        nrows = int(np.ceil(len(entries) / ncols))
        fig, axes = plt.subplots(nrows, ncols, figsize=(4.2 * ncols, 3.2 * nrows), sharey=True)
        for ax, entry in zip(np.atleast_1d(axes).ravel(), entries):
            for k, mean in enumerate(entry["mean_curves"]):
                ax.plot(grid_years, mean, color=CLUSTER_COLORS[k % len(CLUSTER_COLORS)], lw=1.5)
            ax.set_title(f"K = {entry['n_clusters']}", fontsize=9)
            ax.set_xlabel("age (years)", fontsize=8)
        for ax in np.atleast_1d(axes).ravel()[len(entries):]:
            ax.axis("off")
        np.atleast_1d(axes).ravel()[0].set_ylabel("BMI (kg/m$^2$)", fontsize=8)
    else:
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for k, cluster in enumerate(cluster_doc["clusters"]):
            color = CLUSTER_COLORS[k % len(CLUSTER_COLORS)]
            mean = np.asarray(cluster["mean"])
            label = f"cluster {k + 1} (w={cluster.get('weight', 0):.2f})"
            ax.plot(grid_years, mean, color=color, label=label)
            if "lower95" in cluster:
                ax.fill_between(grid_years, cluster["lower95"], cluster["upper95"], color=color, alpha=0.15)
        ax.set_xlabel("age (years)")
        ax.set_ylabel("BMI (kg/m$^2$)")
        ax.legend(loc="upper left", fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_report(report_doc: dict, out_path) -> Path:
    """MSE per condition, one line per method."""
    rows = report_doc["rows"]
    methods = sorted({r["method"] for r in rows})
    conditions = list(dict.fromkeys(r["condition"] for r in rows))
    fig, ax = plt.subplots(figsize=(7, 4.5))
    x = np.arange(len(conditions))
    for method in methods:
        values = []
        for cond in conditions:
            match = [r for r in rows if r["method"] == method and r["condition"] == cond]
            values.append(match[0]["mse_mean"] if match and match[0]["mse_mean"] is not None else np.nan)
        ax.plot(x, values, marker="o", label=method)
    ax.set_xticks(x)
    ax.set_xticklabels(conditions, rotation=20, ha="right", fontsize=8)
    ax.set_ylabel("MSE")
    ax.set_title(report_doc.get("name", "report"))
    ax.legend()
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_prediction(pred_doc: dict, out_path, threshold: float | None = None) -> Path:
    """Observed points, predictive mean, 95% band and sample spaghetti.

    With a threshold, samples crossing it at the last target age are drawn
    in black and the threshold appears as a dashed line.
    """
    t = np.asarray(pred_doc["target_ages"], dtype=float) / 12.0
    fig, ax = plt.subplots(figsize=(7, 4.5))
    samples = pred_doc.get("samples")
    if samples:
        samples = np.asarray(samples, dtype=float)
        crossing = np.zeros(len(samples), dtype=bool)
        if threshold is not None:
            crossing = samples[:, -1] > threshold
        for row, crossed in zip(samples, crossing):
            ax.plot(t, row, color="black" if crossed else "#f4a6c0", alpha=0.8 if crossed else 0.35, lw=0.7)
    ax.fill_between(t, pred_doc["mixture_lower95"], pred_doc["mixture_upper95"], color="#f4a6c0", alpha=0.3)
    ax.plot(t, pred_doc["mean"], color="purple", lw=2, label="predictive mean")
    obs = pred_doc.get("observations") or []
    if obs:
        ax.scatter(
            [o["age_months"] / 12.0 for o in obs],
            [o["bmi"] for o in obs],
            color="black",
            zorder=5,
            label="observed",
        )
    if threshold is not None:
        ax.axhline(threshold, color="grey", linestyle="--", label=f"threshold {threshold}")
    ax.set_xlabel("age (years)")
    ax.set_ylabel("BMI (kg/m$^2$)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def plot_risk_summary(risk_doc: dict, out_path) -> Path:
    """Per-horizon probability strip plots split by observed status."""
    horizons = risk_doc["horizons"]
    fig, axes = plt.subplots(1, len(horizons), figsize=(3.2 * len(horizons), 4), sharey=True)
    if len(horizons) == 1:
        axes = [axes]
    rng = np.random.default_rng(0)
    for ax, horizon in zip(axes, horizons):
        risks = horizon["risks"]
        for status, color in ((False, "#4c9f70"), (True, "#d1495b")):
            probs = [r["probability"] for r in risks if r["observed_positive"] == status]
            jitter = rng.uniform(-0.15, 0.15, size=len(probs))
            ax.scatter(np.full(len(probs), int(status)) + jitter, probs, s=12, color=color, alpha=0.6)
        ax.axhline(risk_doc["decision_cutoff"], color="grey", linestyle="--", lw=1)
        parts = [
            f"sens {horizon['sensitivity']:.2f}" if horizon["sensitivity"] is not None else "sens -",
            f"spec {horizon['specificity']:.2f}" if horizon["specificity"] is not None else "spec -",
            f"acc {horizon['accuracy']:.2f}",
        ]
        ax.set_title(f"to {horizon['horizon_months'] / 12:.0f}y\n" + ", ".join(parts), fontsize=8)
        ax.set_xticks([0, 1])
        ax.set_xticklabels(["not overweight", "overweight"], fontsize=7)
    axes[0].set_ylabel("predicted overweight probability")
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def load_json(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))
