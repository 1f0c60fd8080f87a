"""Figure rendering for the CLI report paths.  Everything writes PNG files
next to the delimited output; no interactive backends."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = ["field_figure", "trace_figure", "curves_figure", "loglog_figure"]


def field_figure(mesh, field, path, title=None, sampler=None):
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    tpc = ax.tripcolor(mesh.points[:, 0], mesh.points[:, 1], mesh.triangles,
                       np.asarray(field, dtype=float), shading="gouraud", cmap="viridis")
    fig.colorbar(tpc, ax=ax)
    if sampler is not None:
        poly = mesh.points[np.append(sampler.nodes, sampler.nodes[0])]
        ax.plot(poly[:, 0], poly[:, 1], "w--", lw=1.0)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def trace_figure(times, values, path, title="observations on the circle"):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    im = ax.imshow(values, aspect="auto", origin="lower",
                   extent=[times[0], times[-1], 0, values.shape[0]], cmap="RdBu_r")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("t")
    ax.set_ylabel("node index along the circle")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def curves_figure(x, curves, path, xlabel="t", ylabel="", title=None, logy=False):
    """curves: list of (label, values)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, y in curves:
        ax.plot(x, y, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def loglog_figure(x, curves, path, xlabel="dt", ylabel="error", title=None, order_guides=()):
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label, y in curves:
        ax.loglog(x, y, "o-", label=label)
    x = np.asarray(x, dtype=float)
    for order in order_guides:
        ref = np.asarray(curves[0][1], dtype=float)[0] * (x / x[0]) ** order
        ax.loglog(x, ref, "k--", alpha=0.5, label=f"order {order}")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    if title:
        ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
