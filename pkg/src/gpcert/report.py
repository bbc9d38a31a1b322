"""Figure rendering for result records.

The report path reads a record stream and writes PNG figures next to the CSV
projection: certified bounds against a swept parameter (with the threshold
gap for reference), per-dimension bound profiles, and pixel heat maps when
the record came from image data.
"""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .records import project_csv


def _sweep_key(records) -> str | None:
    """The single config key that varies across certify records, if any."""
    certs = [r for r in records if r.get("command") in ("certify", "sweep")]
    if len(certs) < 2:
        return None
    keys = set()
    base = certs[0].get("config", {})
    for rec in certs[1:]:
        for k, v in rec.get("config", {}).items():
            if base.get(k) != v:
                keys.add(k)
    numeric = [k for k in keys if all(isinstance(r["config"].get(k), (int, float)) for r in certs)]
    return sorted(numeric)[0] if len(numeric) == 1 else None


def render_sweep_figure(records, out_path) -> bool:
    key = _sweep_key(records)
    if key is None:
        return False
    certs = [r for r in records if r.get("command") in ("certify", "sweep") and "sorted_cumulative" in r]
    certs.sort(key=lambda r: r["config"][key])
    xs = [r["config"][key] for r in certs]
    gaps = [r.get("gap") for r in certs]
    accs = [r.get("accuracy") for r in certs]

    fig, (ax0, ax1) = plt.subplots(
        2, 1, figsize=(6.0, 6.0), sharex=True, gridspec_kw={"height_ratios": [2.2, 1.0]}
    )
    for n in range(1, 5):
        ys = [r["sorted_cumulative"][n - 1] if len(r["sorted_cumulative"]) >= n else np.nan for r in certs]
        ax0.plot(xs, ys, marker="o", ms=3, label=f"top-{n} bound sum")
    ax0.plot(xs, gaps, color="black", lw=2, label="threshold gap")
    ax0.set_ylabel("certified latent change")
    ax0.legend(fontsize=8)
    if len(xs) > 2 and min(xs) > 0 and max(xs) / max(min(xs), 1e-12) > 20:
        ax0.set_xscale("log")
    ax1.plot(xs, accs, marker="s", ms=3, color="tab:green")
    ax1.set_ylabel("test accuracy")
    ax1.set_xlabel(key)
    ax1.set_ylim(0.0, 1.05)
    for ax in (ax0, ax1):
        ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return True


def render_certificate_figure(record, out_path) -> bool:
    bounds = record.get("per_dim_bounds")
    if not bounds:
        return False
    bounds = np.asarray(bounds, dtype=float)
    order = np.argsort(-bounds)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.bar(np.arange(len(bounds)), bounds[order], width=1.0, color="tab:blue", alpha=0.8)
    ax.plot(np.arange(len(bounds)), np.cumsum(bounds[order]), color="tab:orange", lw=1.5, label="cumulative")
    gap = record.get("gap")
    if gap is not None:
        ax.axhline(gap, color="black", lw=1.5, ls="--", label="threshold gap")
    ax.set_xlabel("input rank")
    ax.set_ylabel("certified latent change")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return True


def render_pixel_figure(record, out_path) -> bool:
    info = record.get("dataset_info") or {}
    shape = info.get("image_shape")
    kept = info.get("kept_dims")
    bounds = record.get("per_dim_bounds")
    if not (shape and bounds):
        return False
    rows, cols = shape
    img = np.zeros(rows * cols)
    idx = np.asarray(kept, dtype=int) if kept is not None else np.arange(len(bounds))
    img[idx] = np.asarray(bounds, dtype=float)
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    im = ax.imshow(img.reshape(rows, cols), cmap="viridis")
    fig.colorbar(im, ax=ax, fraction=0.046, label="per-pixel bound")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return True


def render_report(records, out_dir) -> list:
    """CSV projection plus every applicable figure; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    csv_path = os.path.join(out_dir, "results.csv")
    project_csv(records, csv_path)
    written.append(csv_path)

    sweep_path = os.path.join(out_dir, "sweep.png")
    if render_sweep_figure(records, sweep_path):
        written.append(sweep_path)

    certs = [r for r in records if "per_dim_bounds" in r]
    for i, rec in enumerate(certs):
        cert_path = os.path.join(out_dir, f"certificate_{i:03d}.png")
        if render_certificate_figure(rec, cert_path):
            written.append(cert_path)
        info = rec.get("dataset_info") or {}
        if info.get("image_shape"):
            px_path = os.path.join(out_dir, f"pixel_bounds_{i:03d}.png")
            if render_pixel_figure(rec, px_path):
                written.append(px_path)
    return written
