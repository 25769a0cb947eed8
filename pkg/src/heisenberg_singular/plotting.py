"""Figures and whitespace-delimited plot data for run reports."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps PNG output byte-identical between runs
_PNG_META = {"Software": "heisenberg_singular"}


def write_table(path, columns: dict[str, np.ndarray | list]) -> None:
    """One header line ``# name name ...`` then rows of %.17g numbers."""
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], dtype=float) for k in names])
    with open(path, "w") as fh:
        fh.write("# " + " ".join(names) + "\n")
        for row in data:
            fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def _save(fig, path: Path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def plot_radial_profile(path, r, u, roles, label: str = "u") -> None:
    r = np.asarray(r)
    u = np.asarray(u)
    inner = np.asarray(roles) == "interior"
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.scatter(r[inner], u[inner], s=6, label="interior")
    ax.scatter(r[~inner], u[~inner], s=6, c="0.6", label="collar")
    ax.set_xlabel("Korányi distance from centre")
    ax.set_ylabel(label)
    ax.legend(loc="best")
    _save(fig, Path(path))


def plot_levels(path, n, norms, minima) -> None:
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    a1.semilogx(n, norms, "o-", base=2)
    a1.set_xlabel("n")
    a1.set_ylabel("||u_n||")
    a2.semilogx(n, minima, "o-", base=2)
    a2.set_xlabel("n")
    a2.set_ylabel("min interior u_n")
    _save(fig, Path(path))


def plot_exponents(path, m, t, threshold: float) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(m, t, "o-")
    ax.axvline(threshold, ls="--", c="0.5", label="bounded beyond Q/(sp)")
    ax.set_xlabel("m")
    ax.set_ylabel("t")
    ax.legend(loc="best")
    _save(fig, Path(path))
