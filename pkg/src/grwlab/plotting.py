"""Minimal SVG figure rendering for the CLI report paths.

Figures are built on explicit Figure objects with an SVG canvas, so no
global backend state is touched and the module works headless.  Styling is
intentionally plain: log-log polylines and heatmaps of the scanned ratio.
"""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.colors import LogNorm
from matplotlib.figure import Figure

from .master_equation import DensityGrid
from .scan import OverlayResult, ScanResult
from .trajectories import EnsembleStats


def _new_figure(width: float = 6.0, height: float = 4.5) -> Figure:
    fig = Figure(figsize=(width, height))
    FigureCanvasSVG(fig)
    return fig


def save_width_figure(times, widths, terms: dict[str, np.ndarray], path) -> str:
    fig = _new_figure()
    ax = fig.add_subplot(111)
    ax.plot(times, widths, label="width", lw=2)
    for name, column in terms.items():
        ax.plot(times, np.sqrt(np.maximum(column, 0.0)), "--",
                label=f"sqrt({name})", lw=1)
    ax.set_xlabel("time")
    ax.set_ylabel("width")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    return str(path)


def save_ensemble_figure(stats: EnsembleStats, path,
                         reference: dict[str, np.ndarray] | None = None) -> str:
    fig = _new_figure(7.0, 4.5)
    ax = fig.add_subplot(111)
    for name, mean, se in (("<q^2>", stats.mean_q2, stats.se_q2),
                           ("<p^2>", stats.mean_p2, stats.se_p2),
                           ("<qp>_sym", stats.mean_qp, stats.se_qp)):
        ax.errorbar(stats.times, mean, yerr=3 * se, fmt="o-", ms=3,
                    capsize=2, label=name)
    if reference:
        for name, values in reference.items():
            ax.plot(stats.times, values, "k--", lw=1, alpha=0.6)
            ax.annotate(name, (stats.times[-1], values[-1]), fontsize=7)
    ax.set_xlabel("time")
    ax.set_ylabel("moment")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    return str(path)


def save_phase_diagram(scan: ScanResult, path) -> str:
    fig = _new_figure(6.5, 5.0)
    ax = fig.add_subplot(111)
    positive = scan.cqr[scan.cqr > 0]
    if positive.size:
        norm = LogNorm(vmin=positive.min(), vmax=scan.cqr.max())
        mesh = ax.pcolormesh(scan.r_cs, scan.lambdas,
                             np.where(scan.cqr > 0, scan.cqr, np.nan),
                             norm=norm, shading="nearest", cmap="coolwarm")
        fig.colorbar(mesh, ax=ax, label="collapse-to-quantum ratio")
    ax.plot(scan.coexistence_r_c, scan.coexistence_lambda, "k-", lw=2,
            label="coexistence (ratio = 1)")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("localization length r_c [m]")
    ax.set_ylabel("collapse rate lambda [1/s]")
    ax.legend(fontsize=8, loc="upper left")
    fig.tight_layout()
    fig.savefig(path)
    return str(path)


def save_bounds_figure(overlay: OverlayResult, path) -> str:
    fig = _new_figure(6.5, 5.0)
    ax = fig.add_subplot(111)
    scan = overlay.scan
    ax.plot(scan.coexistence_r_c, scan.coexistence_lambda, "k-", lw=2,
            label="coexistence")
    for curve in overlay.curves:
        ax.plot(curve.r_c, curve.lam, lw=1, label=curve.label)
    ax.plot(overlay.envelope_r_c, overlay.envelope_lambda, "r--", lw=2,
            label="envelope")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("localization length r_c [m]")
    ax.set_ylabel("collapse rate lambda [1/s]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    return str(path)


def save_density_figure(grid: DensityGrid, path) -> str:
    fig = _new_figure(5.5, 5.0)
    ax = fig.add_subplot(111)
    q = grid.positions()
    mesh = ax.pcolormesh(q, q, np.abs(grid.values), shading="nearest",
                         cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="|rho(q', q'')|")
    ax.set_xlabel("q''")
    ax.set_ylabel("q'")
    ax.set_title(f"t = {grid.time:g}")
    fig.tight_layout()
    fig.savefig(path)
    return str(path)


def save_matrix_figure(matrices: dict[str, np.ndarray], path) -> str:
    fig = _new_figure(3.2 * len(matrices), 3.2)
    for idx, (name, matrix) in enumerate(matrices.items(), start=1):
        ax = fig.add_subplot(1, len(matrices), idx)
        mesh = ax.imshow(np.abs(matrix), cmap="viridis")
        fig.colorbar(mesh, ax=ax, fraction=0.046)
        ax.set_title(name, fontsize=9)
    fig.tight_layout()
    fig.savefig(path)
    return str(path)
