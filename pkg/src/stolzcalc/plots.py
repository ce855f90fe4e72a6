"""Rendering of experiment CSV artifacts to figure files.

Every artifact record carries the CSV path and a kind tag; the figure is
written next to the CSV with the same stem.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def _load(csv_path):
    with open(csv_path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(csv_path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def render_artifact(artifact: dict) -> str:
    """Render one artifact record; returns the figure path."""
    csv_path = Path(artifact["csv"])
    header, data = _load(csv_path)
    kind = artifact.get("kind", "line")
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    cols = {name: data[:, i] for i, name in enumerate(header)}
    if kind == "scatter":
        xname = artifact.get("x", header[0])
        yname = artifact.get("y", header[1])
        cname = artifact.get("c")
        if cname and cname in cols:
            sc = ax.scatter(cols[xname], cols[yname], c=cols[cname], s=12, cmap="viridis")
            fig.colorbar(sc, ax=ax, label=cname)
        else:
            ax.scatter(cols[xname], cols[yname], s=12)
        ax.set_xlabel(xname)
        ax.set_ylabel(yname)
    else:
        xname = artifact.get("x", header[0])
        ynames = [artifact["y"]] if "y" in artifact else [h for h in header if h != xname]
        for yname in ynames:
            ax.plot(cols[xname], cols[yname], marker=".", label=yname)
        if kind == "loglog":
            ax.set_xscale("log")
            ax.set_yscale("log")
        elif kind == "semilogy":
            ax.set_yscale("log")
        ax.set_xlabel(xname)
        if len(ynames) > 1:
            ax.legend(fontsize=8)
        else:
            ax.set_ylabel(ynames[0])
    ax.set_title(artifact.get("title", csv_path.stem))
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    out = csv_path.with_suffix(".png")
    fig.savefig(out, dpi=130)
    plt.close(fig)
    return str(out)
