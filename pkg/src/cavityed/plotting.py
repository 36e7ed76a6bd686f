"""Figure rendering for the CLI report path.

Every renderer writes a PNG next to the delimited output it visualizes.
The numerical core never imports this module; matplotlib stays a
reporting-layer dependency only.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_DPI = 150


def render_sweep(table, columns, path_prefix: str):
    """One panel per observable column versus the sweep axis."""
    columns = [c for c in columns if np.isfinite(table.column(c)).any()]
    if not columns:
        return []
    n_cols = min(2, len(columns))
    n_rows = math.ceil(len(columns) / n_cols)
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(5.0 * n_cols, 3.2 * n_rows),
                             squeeze=False)
    x = table.axis_values
    for ax, name in zip(axes.ravel(), columns):
        ax.plot(x, table.column(name), "o-", ms=3.5, lw=1.0)
        ax.set_xlabel(table.spec.axis)
        ax.set_ylabel(name)
        if table.spec.spacing == "log":
            ax.set_xscale("log")
        ax.grid(alpha=0.3)
    for ax in axes.ravel()[len(columns):]:
        ax.set_visible(False)
    fig.suptitle(f"{table.spec.kind}, {table.spec.geometry} N={table.spec.n_sites}")
    fig.tight_layout()
    out = f"{path_prefix}.png"
    fig.savefig(out, dpi=_DPI)
    plt.close(fig)
    return [out]


def render_histogram(histogram, path: str):
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    if histogram.weights.ndim == 1:
        ax.bar(histogram.support, histogram.weights,
               width=0.8 * (histogram.support[1] - histogram.support[0])
               if len(histogram.support) > 1 else 0.8)
        ax.set_xlabel(histogram.kind)
        ax.set_ylabel("weight")
    else:
        re_c, im_c = histogram.support
        mesh = ax.pcolormesh(re_c, im_c, histogram.weights.T, shading="nearest",
                             cmap="magma")
        fig.colorbar(mesh, ax=ax, label="weight")
        ax.set_xlabel("Re p3sl")
        ax.set_ylabel("Im p3sl")
        ax.set_aspect("equal")
    ax.set_title(histogram.kind)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return [path]


def render_cutoff_trace(trace, path: str):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    cutoffs = [level["n_ph_max"] for level in trace]
    names = trace[0]["values"].keys()
    for name in names:
        ax.plot(cutoffs, [level["values"][name] for level in trace], "o-", label=name)
    ax.set_xscale("log", base=2)
    ax.set_xlabel("photon cutoff")
    ax.set_ylabel("observable")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return [path]


def render_cascade(report, path: str):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    ax.step(report.jc_over_j, report.sx_abs, where="post")
    ax.set_xscale("log")
    ax.set_xlabel("J_c / J")
    ax.set_ylabel("|S_x| of the ground sector")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return [path]


def render_obd_sectors(spectrum, path: str):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    sx = sorted(spectrum.sector_energies)
    ax.plot(sx, [spectrum.sector_energies[s] for s in sx], "o-")
    ax.set_xlabel("|S_x| sector")
    ax.set_ylabel("minimal energy")
    ax.set_title(f"manifold dim {spectrum.manifold_dim}, ground |S_x| = {spectrum.sx_max}")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return [path]


def render_collapse(report, path: str):
    fig, ax = plt.subplots(figsize=(5.2, 3.6))
    for i, curve in enumerate(report.curves):
        marker = "-" if i == report.reference_index else "--"
        ax.plot(curve.scaled_axis, curve.scaled_values, marker,
                label=f"alpha={curve.alpha:.3f}, res={curve.residual:.1e}")
    ax.set_xlabel("alpha (J - J*) / omega_d")
    ax.set_ylabel(f"{report.which} / peak")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return [path]
