"""Plot-ready series (KDE, ECDF, histogram) derived from reports and comparisons.

Marginal and conditional entries are always emitted as separate series.
KDEs use a Gaussian kernel with Silverman's rule-of-thumb bandwidth,
floored at three grid steps so the 256-point grid resolves every kernel, and
boundary reflection on bounded domains (p-values live on [0, 1], distances
on [0, inf)).
"""

from __future__ import annotations

import csv
import io
import os
from collections.abc import Iterable
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from derecsim.correlation import Metric
from derecsim.errors import EmptyReport
from derecsim.fsutil import atomic_write_text
from derecsim.simpro import Comparison, SimproReport

GRID_POINTS = 256
HIST_BINS = 20
MIN_BW_STEPS = 3.0
KINDS = ("kde", "ecdf", "histogram")


@dataclass(frozen=True)
class PlotSeries:
    kind: str
    x: np.ndarray
    y: np.ndarray
    label: str
    subset: str
    metric: str
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def stem(self) -> str:
        return f"{self.label}.{self.metric}.{self.subset}.{self.kind}"

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        buf.write(f"# kind={self.kind} label={self.label} metric={self.metric} subset={self.subset}\n")
        for k, v in self.meta.items():
            buf.write(f"# {k}={v}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y"])
        for x, y in zip(self.x.tolist(), self.y.tolist()):
            w.writerow([repr(float(x)), repr(float(y))])
        return buf.getvalue()


def read_series_csv(text: str) -> tuple[dict[str, str], np.ndarray, np.ndarray]:
    """Parse a series file back into (header fields, x, y)."""
    meta: dict[str, str] = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            for tok in line[1:].split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
        else:
            body.append(line)
    rows = list(csv.reader(body))[1:]
    x = np.array([float(r[0]) for r in rows])
    y = np.array([float(r[1]) for r in rows])
    return meta, x, y


def silverman_bandwidth(values: np.ndarray) -> float:
    n = values.size
    if n < 2:
        return 0.0
    std = float(np.std(values, ddof=1))
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25) / 1.34
    spread = min(std, iqr) if iqr > 0 else std
    return 0.9 * spread * n ** (-0.2)


def kde_series(
    values: np.ndarray, bounds: tuple[float | None, float | None]
) -> tuple[np.ndarray, np.ndarray, dict[str, Any]]:
    """Gaussian KDE on a 256-point grid, reflected at finite bounds.

    Open ends extend four bandwidths past the data. The bandwidth is the
    Silverman value, floored at three grid steps; since the grid span itself
    depends on the bandwidth at open ends, the floor is solved for directly.
    """
    values = np.asarray(values, dtype=float)
    silver = silverman_bandwidth(values)
    vmin, vmax = float(values.min()), float(values.max())
    lo0 = vmin if bounds[0] is None else bounds[0]
    hi0 = vmax if bounds[1] is None else bounds[1]
    open_ends = (bounds[0] is None) + (bounds[1] is None)
    step = MIN_BW_STEPS / (GRID_POINTS - 1)
    bw = max(silver, step * (hi0 - lo0) / (1 - 4 * open_ends * step))
    if bw == 0:
        # a single repeated value on an unbounded axis
        bw = 0.05 * max(1.0, abs(vmin))
    lo = lo0 - 4 * bw if bounds[0] is None else lo0
    hi = hi0 + 4 * bw if bounds[1] is None else hi0
    grid = np.linspace(lo, hi, GRID_POINTS)
    centres = [values]
    if bounds[0] is not None:
        centres.append(2 * bounds[0] - values)
    if bounds[1] is not None:
        centres.append(2 * bounds[1] - values)
    c = np.concatenate(centres)
    z = (grid[:, None] - c[None, :]) / bw
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (values.size * bw * np.sqrt(2 * np.pi))
    meta = {
        "kernel": "gaussian",
        "bandwidth_rule": "silverman",
        "silverman_bandwidth": repr(silver),
        "bandwidth": repr(bw),
        "bandwidth_floor_grid_steps": repr(MIN_BW_STEPS),
        "grid_points": GRID_POINTS,
        "boundary": "reflect",
        "domain": f"[{lo!r},{hi!r}]",
    }
    return grid, dens, meta


def ecdf_series(values: np.ndarray, lower: float) -> tuple[np.ndarray, np.ndarray]:
    """Right-continuous ECDF at the lower bound and at every distinct value."""
    values = np.sort(np.asarray(values, dtype=float))
    x = np.unique(np.concatenate([[min(lower, values[0])], values]))
    y = np.searchsorted(values, x, side="right") / values.size
    return x, y


def histogram_series(values: np.ndarray, bounds: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    counts, edges = np.histogram(values, bins=HIST_BINS, range=bounds, density=True)
    return (edges[:-1] + edges[1:]) / 2, counts


_BOUNDS: dict[str, tuple[float | None, float | None]] = {
    Metric.KS.value: (0.0, 1.0),
    Metric.W.value: (0.0, None),
    "delta_p": (-1.0, 1.0),
    "delta_w": (None, None),
}


def _emit(values: np.ndarray, label: str, subset: str, metric: str, kinds: Iterable[str]) -> list[PlotSeries]:
    bounds = _BOUNDS[metric]
    out = []
    for kind in kinds:
        if kind == "kde":
            x, y, meta = kde_series(values, bounds)
        elif kind == "ecdf":
            lower = bounds[0] if bounds[0] is not None else float(values.min())
            x, y = ecdf_series(values, lower)
            meta = {"n": values.size}
        elif kind == "histogram":
            lo = bounds[0] if bounds[0] is not None else float(values.min())
            hi = bounds[1] if bounds[1] is not None else max(float(values.max()), lo + 1e-12)
            if hi <= lo:
                hi = lo + 1.0
            x, y = histogram_series(values, (lo, hi))
            meta = {"bins": HIST_BINS, "range": f"[{lo!r},{hi!r}]", "density": "true"}
        else:
            raise ValueError(f"unknown plot kind {kind!r}")
        out.append(PlotSeries(kind, x, y, label, subset, metric, meta))
    return out


def plot_data(source: SimproReport | Comparison, kinds: Iterable[str] = KINDS) -> list[PlotSeries]:
    kinds = tuple(kinds)
    series: list[PlotSeries] = []
    if isinstance(source, SimproReport):
        if not source.pairs:
            raise EmptyReport(f"report {source.label!r} has no entries")
        for s in (source.ks, source.w):
            for subset in ("marginal", "conditional"):
                vals = s.scores(subset)
                if vals.size:
                    series += _emit(vals, source.label, subset, s.metric.value, kinds)
        return series
    if not source.rows:
        raise EmptyReport("comparison has no entries")
    label = f"{source.label_a}_vs_{source.label_b}"
    for subset in ("marginal", "conditional"):
        rows = [r for r in source.rows if r.pair.is_marginal == (subset == "marginal")]
        if not rows:
            continue
        series += _emit(np.array([r.delta_p for r in rows]), label, subset, "delta_p", kinds)
        series += _emit(np.array([r.delta_w for r in rows]), label, subset, "delta_w", kinds)
    return series


def write_plot_data(series: Iterable[PlotSeries], out_dir: str | os.PathLike) -> list[Path]:
    out = Path(out_dir)
    return [atomic_write_text(out / f"{s.stem}.csv", s.to_csv_text()) for s in series]
