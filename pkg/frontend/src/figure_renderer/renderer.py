"""CSV parsing and figure drawing."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

CSV_SCHEMA = "trajectory-csv/1"

# default window contains the benchmark start (1, -1), the origin, and the
# near branch of the hyperbola
DEFAULT_WINDOW = (-1.5, 2.5, -1.5, 2.5)

_SERIES_COLORS = ("tab:blue", "tab:red", "tab:green", "tab:purple")


class SchemaMismatch(ValueError):
    """Input file does not follow the versioned trajectory CSV schema."""


@dataclass(frozen=True)
class TrajectorySeries:
    """One parsed trajectory file: planar positions plus provenance."""

    path: Path
    label: str
    x: np.ndarray
    y: np.ndarray
    sha256: str

    @property
    def n_points(self) -> int:
        return len(self.x)


def load_trajectory_csv(path) -> TrajectorySeries:
    """Parse one trajectory CSV, validating the schema line and header.

    Raises :class:`FileNotFoundError` or :class:`SchemaMismatch`.  A file
    with a valid header and zero data rows is legal (empty series).
    """
    path = Path(path)
    raw = path.read_bytes()
    lines = raw.decode("utf-8").splitlines()
    if not lines or lines[0].strip() != f"# {CSV_SCHEMA}":
        raise SchemaMismatch(
            f"{path}: first line must be '# {CSV_SCHEMA}'"
        )
    if len(lines) < 2:
        raise SchemaMismatch(f"{path}: missing header row")
    header = lines[1].strip().split(",")
    if header[:1] != ["t"] or header[-2:] != ["F", "grad_norm"]:
        raise SchemaMismatch(f"{path}: unexpected header {lines[1]!r}")
    coords = header[1:-2]
    n = len(coords) // 2
    if n < 1 or coords != [f"x{i+1}" for i in range(n)] \
            + [f"v{i+1}" for i in range(n)]:
        raise SchemaMismatch(f"{path}: unexpected header {lines[1]!r}")
    if n != 2:
        raise SchemaMismatch(
            f"{path}: renderer draws planar trajectories, got {n} coordinates"
        )

    rows = [line for line in lines[2:] if line.strip()]
    try:
        data = np.array([[float(v) for v in line.split(",")] for line in rows])
    except ValueError as exc:
        raise SchemaMismatch(f"{path}: non-numeric row ({exc})") from None
    if data.size and data.shape[1] != len(header):
        raise SchemaMismatch(f"{path}: row width does not match header")
    x = data[:, 1] if data.size else np.empty(0)
    y = data[:, 2] if data.size else np.empty(0)
    return TrajectorySeries(
        path=path,
        label=path.stem.replace("_", " "),
        x=x,
        y=y,
        sha256=hashlib.sha256(raw).hexdigest(),
    )


@dataclass(frozen=True)
class RenderSpec:
    """Inputs, output path, window, and overlay toggles for one figure."""

    inputs: Sequence
    output: Path
    window: tuple = DEFAULT_WINDOW  # (xmin, xmax, ymin, ymax)
    hyperbola: bool = True
    level_sets: bool = False
    markers: bool = True
    dpi: int = 150

    def __post_init__(self):
        if len(self.window) != 4 or not (
            self.window[0] < self.window[1] and self.window[2] < self.window[3]
        ):
            raise ValueError("window must be (xmin, xmax, ymin, ymax)")


@dataclass(frozen=True)
class RenderResult:
    output: Path
    series_count: int
    points_per_series: list
    checksums: dict


def _draw_hyperbola(ax, window):
    xmin, xmax, ymin, ymax = window
    gap = 1e-3 * (xmax - xmin)  # keep clear of the pole at x = 0
    labeled = False
    for lo, hi in ((max(xmin, gap), xmax), (xmin, min(xmax, -gap))):
        if hi <= lo:
            continue
        xs = np.linspace(lo, hi, 400)
        ys = 1.0 / xs
        keep = (ys >= ymin) & (ys <= ymax)
        if np.any(keep):
            ax.plot(xs[keep], ys[keep], color="0.3", linestyle="--", lw=1.0,
                    label=None if labeled else "xy = 1")
            labeled = True


def _draw_level_sets(ax, window):
    xmin, xmax, ymin, ymax = window
    gx, gy = np.meshgrid(np.linspace(xmin, xmax, 300),
                         np.linspace(ymin, ymax, 300))
    f = (gx * gy - 1.0) ** 2
    ax.contour(gx, gy, f, levels=[0.04, 0.25, 1.0, 2.0, 4.0],
               colors="0.8", linewidths=0.6, zorder=0)


def render(spec: RenderSpec) -> RenderResult:
    """Draw the phase portrait and write the image.

    The trajectory curves come verbatim from the CSVs; nothing is
    integrated or resampled here.  Returns the series count and the
    checksum map that was embedded in the image metadata.
    """
    series = [load_trajectory_csv(p) for p in spec.inputs]

    fig, ax = plt.subplots(figsize=(6.4, 6.4))
    if spec.level_sets:
        _draw_level_sets(ax, spec.window)
    if spec.hyperbola:
        _draw_hyperbola(ax, spec.window)

    plotted = 0
    for i, s in enumerate(series):
        color = _SERIES_COLORS[i % len(_SERIES_COLORS)]
        if s.n_points:
            ax.plot(s.x, s.y, color=color, lw=1.4, label=s.label)
            plotted += 1
            if spec.markers:
                ax.plot(s.x[0], s.y[0], marker="o", color=color, ms=7,
                        mfc="white", zorder=5)
                ax.plot(s.x[-1], s.y[-1], marker="*", color=color, ms=12,
                        zorder=5)

    ax.set_xlim(spec.window[0], spec.window[1])
    ax.set_ylim(spec.window[2], spec.window[3])
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.set_aspect("equal")
    ax.axhline(0.0, color="0.85", lw=0.6, zorder=0)
    ax.axvline(0.0, color="0.85", lw=0.6, zorder=0)
    if plotted or spec.hyperbola:
        ax.legend(loc="upper left", fontsize=8)

    checksums = {s.path.name: s.sha256 for s in series}
    provenance = ";".join(f"{k}={v}" for k, v in sorted(checksums.items()))
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=spec.dpi,
                metadata={"Source": provenance, "Software": "hblab-render"})
    plt.close(fig)
    return RenderResult(out, plotted, [s.n_points for s in series], checksums)
