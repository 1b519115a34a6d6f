"""Report writers: delimited files, JSON sidecars, and figures.

Every artifact is written atomically (temp file + rename) and with
deterministic bytes so identical runs produce identical output trees.
Figures render through the Agg backend with pinned metadata; numbers are
serialized with ``repr`` so formatting never depends on locale.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_PNG_METADATA = {"Software": "forkscope"}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return ""
    return str(value)


def atomic_write_text(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(cell) for cell in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def write_json(path: str | Path, payload) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _save_figure(fig, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, format="png", dpi=110, metadata=_PNG_METADATA)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def plot_similarity_cdf(
    points: Sequence[tuple[float, float]], path: str | Path, label: str = "score"
) -> None:
    """Step plot of an empirical CDF of similarity scores."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    xs = [s for s, _ in points]
    ys = [f for _, f in points]
    ax.step([0.0, *xs, 1.0], [0.0, *ys, ys[-1] if ys else 0.0], where="post")
    ax.set_xlabel(f"similarity {label}")
    ax.set_ylabel("cumulative fraction of pairs")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save_figure(fig, path)


def plot_silhouette_curve(
    curve: Sequence[tuple[int, float]], best_k: int, path: str | Path
) -> None:
    """Overall silhouette for each candidate cluster count."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ks = [k for k, _ in curve]
    sils = [s for _, s in curve]
    ax.plot(ks, sils, marker="o")
    ax.axvline(best_k, linestyle="--", alpha=0.6)
    ax.set_xlabel("k")
    ax.set_ylabel("overall silhouette")
    ax.set_xticks(ks)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save_figure(fig, path)


def plot_patch_days(days: Sequence[float], path: str | Path) -> None:
    """Histogram of days taken to apply each patch."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.hist(list(days), bins=min(30, max(5, len(days))), edgecolor="black", alpha=0.8)
    ax.set_xlabel("days to patch")
    ax.set_ylabel("patched findings")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save_figure(fig, path)
