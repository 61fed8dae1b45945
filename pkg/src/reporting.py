"""
CSV and SVG artifacts for the experiment CLI. Files are written to a
temporary sibling and renamed into place.
"""
import csv
import logging
import os
import tempfile
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from pydantic import BaseModel, Field  # noqa: E402

from src.errors import InvalidInputError  # noqa: E402
from src.geometry import NodeSet, interval_regions  # noqa: E402

logger = logging.getLogger(__name__)

NODE_COLUMNS = ("x1", "x2", "tag")


def _format(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (complex, np.complexfloating)):
        return repr(complex(value))
    return str(value)


def _atomic_write(path: Path, write) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as handle:
            write(handle)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    logger.debug("Wrote %s", path)
    return path


def write_csv(path, rows: Sequence[Dict[str, object]], columns: Optional[Sequence[str]] = None) -> Path:
    rows = list(rows)
    if columns is None:
        if not rows:
            raise InvalidInputError(f"No rows and no columns for {path}")
        columns = list(rows[0])

    def write(handle):
        writer = csv.DictWriter(handle, fieldnames=list(columns), extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _format(v) for k, v in row.items()})

    return _atomic_write(path, write)


def read_csv(path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def write_nodes(path, nodes: NodeSet) -> Path:
    x2 = nodes.points[:, 1] if nodes.dim == 2 else np.zeros(nodes.size)
    rows = [{"x1": a, "x2": b, "tag": int(t)} for a, b, t in zip(nodes.points[:, 0], x2, nodes.region)]
    return write_csv(path, rows, NODE_COLUMNS)


def read_nodes(path, dim: int = 2) -> NodeSet:
    """Node set from an x1,x2,tag CSV; a missing tag column is inferred for 1D files only."""
    rows = read_csv(path)
    if not rows:
        raise InvalidInputError(f"Node file {path} is empty")
    try:
        points = np.array([[float(r["x1"]), float(r.get("x2") or 0.0)] for r in rows])[:, :dim]
        if "tag" in rows[0]:
            tags = np.array([int(r["tag"]) for r in rows])
        elif dim == 1:
            tags = interval_regions(points[:, 0])
        else:
            raise InvalidInputError(f"Node file {path} has no tag column")
    except (KeyError, ValueError) as exc:
        raise InvalidInputError(f"Malformed node file {path}: {exc}") from exc
    return NodeSet.from_points(points, tags)


class Series(BaseModel):
    label: str
    x: List[float]
    y: List[float]
    style: str = "o-"
    # Optional fitted line drawn dashed, with its slope annotated
    fit_x: List[float] = Field(default_factory=list)
    fit_y: List[float] = Field(default_factory=list)
    slope: Optional[float] = None


def render_svg(path, series: Iterable[Series], xlabel: str = "", ylabel: str = "error",
               title: str = "", logx: bool = False) -> Path:
    """Log-scale plot of one or more series as a standalone SVG."""
    series = list(series)
    if not series or any(len(s.x) == 0 for s in series):
        raise InvalidInputError("render_svg needs at least one non-empty series")
    for s in series:
        if len(s.x) != len(s.y):
            raise InvalidInputError(f"Series '{s.label}' has {len(s.x)} x values and {len(s.y)} y values")

    fig, ax = plt.subplots(figsize=(7, 5))
    try:
        for s in series:
            ax.plot(s.x, s.y, s.style, label=s.label)
            if s.fit_x:
                ax.plot(s.fit_x, s.fit_y, "k--", linewidth=1)
                if s.slope is not None:
                    ax.annotate(f"C_M={s.slope:.2f}", (s.fit_x[-1], s.fit_y[-1]))
        ax.set_yscale("log")
        if logx:
            ax.set_xscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(True, which="both", ls=":")
        ax.legend()
        fig.tight_layout()
        _atomic_write(path, lambda handle: fig.savefig(handle, format="svg"))
    finally:
        plt.close(fig)
    return Path(path)
