"""Figure rendering for the report paths: every CSV a command emits can be
accompanied by a PNG rendered next to it."""

from __future__ import annotations

import numpy as np
import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .model import Field
from .verify import ErrorStudyReport, SmoothingReport

__all__ = [
    "render_error_study",
    "render_smoothing",
    "render_field",
]


def render_error_study(report: ErrorStudyReport, path: str) -> None:
    """Log-log error-vs-volvol plot with the fitted slope and the
    discretization floor."""
    nu = np.asarray(report.nu_values)
    err = np.asarray(report.errors)
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.loglog(nu, err, "o-", label="measured error")
    if report.fitted_slope is not None:
        ref = err[-1] * (nu / nu[-1]) ** report.fitted_slope
        ax.loglog(nu, ref, "--",
                  label=f"fit, slope {report.fitted_slope:.3f}")
    ax.axhline(report.fd_floor, color="gray", lw=0.8, ls=":",
               label=f"fd floor {report.fd_floor:.2e}")
    ax.set_xlabel("volvol")
    ax.set_ylabel("weighted L2 error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_smoothing(report: SmoothingReport, path: str) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for k, pts in report.ratios.items():
        t = np.asarray([a for a, _ in pts])
        r = np.asarray([b for _, b in pts])
        ax.loglog(t, r, "o-",
                  label=f"k={k}, exponent {report.exponents[k]:.3f}")
    ax.set_xlabel("t")
    ax.set_ylabel("derivative norm ratio")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_field(f: Field, path: str, title: str = "") -> None:
    g = f.grid
    fig, ax = plt.subplots(figsize=(5.4, 3.8))
    im = ax.pcolormesh(g.x_nodes, g.sigma_nodes, f.values, shading="auto")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("x")
    ax.set_ylabel("sigma")
    if title:
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
