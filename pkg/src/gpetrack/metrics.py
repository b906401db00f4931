"""Shape precision/recall, center-of-object errors, RMSE, and improvement
percentages.

Polygon overlap is computed on a deterministic raster (even-odd scanline
fill at cell centers) instead of exact clipping: the library shapes are
non-convex and an explicit resolution gives an explicit error bound, which
is at most about ``2 * perimeter / resolution`` in area.  Both polygons of a
comparison are rasterized on one shared grid so the precision/recall ratios
are self-consistent.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateEstimate, InvalidArgument

DEFAULT_RESOLUTION = 100.0  # cells per meter

ERROR_MEASURES = ("rmse_x", "rmse_y", "rmse_vx", "rmse_vy")
SCORE_MEASURES = ("precision", "recall")
ALL_MEASURES = SCORE_MEASURES + ERROR_MEASURES


def _as_polygon(poly):
    p = np.asarray(poly, dtype=float)
    if p.ndim != 2 or p.shape[1] != 2 or p.shape[0] < 3:
        raise InvalidArgument("polygon must be an (n, 2) array with n >= 3")
    if not np.isfinite(p).all():
        raise InvalidArgument("polygon vertices must be finite")
    # drop an explicit closing vertex; closure is implicit
    if np.allclose(p[0], p[-1]) and p.shape[0] > 3:
        p = p[:-1]
    return p


def _raster_mask(poly, x0, y0, nx, ny, h):
    """Boolean inside-mask of the polygon at cell centers (even-odd rule)."""
    xs, ys = poly[:, 0], poly[:, 1]
    xe, ye = np.roll(xs, -1), np.roll(ys, -1)
    yc = y0 + (np.arange(ny) + 0.5) * h
    counts = np.zeros((ny, nx + 1), dtype=np.int32)
    for xa, ya, xb, yb in zip(xs, ys, xe, ye):
        if ya == yb:
            continue
        ylo, yhi = (ya, yb) if ya < yb else (yb, ya)
        rows = np.nonzero((yc >= ylo) & (yc < yhi))[0]
        if rows.size == 0:
            continue
        xc = xa + (yc[rows] - ya) / (yb - ya) * (xb - xa)
        cols = np.ceil((xc - x0) / h - 0.5).astype(np.int64)
        np.clip(cols, 0, nx, out=cols)
        np.add.at(counts, (rows, cols), 1)
    return np.cumsum(counts[:, :-1], axis=1) % 2 == 1


def _shared_masks(a, b, resolution):
    if resolution <= 0:
        raise InvalidArgument("resolution must be > 0")
    h = 1.0 / resolution
    lo = np.minimum(a.min(axis=0), b.min(axis=0)) - h
    hi = np.maximum(a.max(axis=0), b.max(axis=0)) + h
    nx = int(np.ceil((hi[0] - lo[0]) / h)) + 1
    ny = int(np.ceil((hi[1] - lo[1]) / h)) + 1
    if nx * ny > 50_000_000:
        raise InvalidArgument(
            "raster grid too large; lower the resolution or shrink the input")
    mask_a = _raster_mask(a, lo[0], lo[1], nx, ny, h)
    mask_b = _raster_mask(b, lo[0], lo[1], nx, ny, h)
    return mask_a, mask_b, h


def polygon_intersection_area(a, b, resolution=DEFAULT_RESOLUTION) -> float:
    """Area of the intersection of two closed polygons, in m^2."""
    a = _as_polygon(a)
    b = _as_polygon(b)
    mask_a, mask_b, h = _shared_masks(a, b, resolution)
    return float(np.count_nonzero(mask_a & mask_b)) * h * h


def precision_recall_frame(est, truth, resolution=DEFAULT_RESOLUTION):
    """Shape precision |est & truth| / |est| and recall |est & truth| / |truth|."""
    est = _as_polygon(est)
    truth = _as_polygon(truth)
    mask_e, mask_t, _ = _shared_masks(est, truth, resolution)
    n_est = np.count_nonzero(mask_e)
    n_truth = np.count_nonzero(mask_t)
    if n_est == 0:
        raise DegenerateEstimate("estimated contour has zero area")
    if n_truth == 0:
        raise DegenerateEstimate("true contour has zero area")
    inter = np.count_nonzero(mask_e & mask_t)
    return inter / n_est, inter / n_truth


def coo_from_contour(contour) -> np.ndarray:
    """Area centroid of a closed polygon (shoelace formula)."""
    p = _as_polygon(contour)
    x, y = p[:, 0], p[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    if abs(area) < 1e-12:
        raise DegenerateEstimate("polygon area is numerically zero")
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def rmse_series(errors) -> float:
    """Root mean square of a series of scalar errors."""
    e = np.asarray(errors, dtype=float)
    if e.size == 0:
        raise InvalidArgument("rmse of an empty series is undefined")
    return float(np.sqrt(np.mean(e ** 2)))


def mean_percentage_improvement(baseline: float, method: float,
                                kind: str) -> float:
    """Improvement of `method` over `baseline` in percent; positive is better.

    For error-like measures lower is better, for score-like measures higher
    is better; the sign convention makes both comparable.
    """
    if baseline <= 0:
        raise InvalidArgument("baseline must be > 0")
    if kind == "error-like":
        return 100.0 * (baseline - method) / baseline
    if kind == "score-like":
        return 100.0 * (method - baseline) / baseline
    raise InvalidArgument(f"kind must be error-like or score-like, not {kind!r}")


def measure_kind(measure: str) -> str:
    return "error-like" if measure in ERROR_MEASURES else "score-like"


@dataclass(frozen=True)
class FrameEval:
    """Per-frame evaluation: shape overlap and center-of-object errors."""

    time: float
    precision: float
    recall: float
    coo_est: np.ndarray
    coo_true: np.ndarray
    vel_est: np.ndarray
    vel_true: np.ndarray


@dataclass(frozen=True)
class MethodMetrics:
    """Aggregated measures of one method on one scenario."""

    method: str
    mean_precision: float
    mean_recall: float
    rmse_x: float
    rmse_y: float
    rmse_vx: float
    rmse_vy: float
    n_runs: int
    n_failed: int = 0

    def value(self, measure: str) -> float:
        return {
            "precision": self.mean_precision,
            "recall": self.mean_recall,
            "rmse_x": self.rmse_x,
            "rmse_y": self.rmse_y,
            "rmse_vx": self.rmse_vx,
            "rmse_vy": self.rmse_vy,
        }[measure]


def summarize_run(frame_evals) -> dict:
    """Per-run scalar summary: frame-mean P/R and per-axis RMSE."""
    if not frame_evals:
        raise InvalidArgument("need at least one evaluated frame")
    pos_err = np.array([fe.coo_est - fe.coo_true for fe in frame_evals])
    vel_err = np.array([fe.vel_est - fe.vel_true for fe in frame_evals])
    return {
        "precision": float(np.mean([fe.precision for fe in frame_evals])),
        "recall": float(np.mean([fe.recall for fe in frame_evals])),
        "rmse_x": rmse_series(pos_err[:, 0]),
        "rmse_y": rmse_series(pos_err[:, 1]),
        "rmse_vx": rmse_series(vel_err[:, 0]),
        "rmse_vy": rmse_series(vel_err[:, 1]),
    }


def aggregate_runs(method: str, run_summaries, n_failed=0) -> MethodMetrics:
    """Average per-run summaries over Monte Carlo runs."""
    if not run_summaries:
        raise InvalidArgument("no successful runs to aggregate")
    mean = {k: float(np.mean([s[k] for s in run_summaries]))
            for k in run_summaries[0]}
    return MethodMetrics(method=method,
                         mean_precision=mean["precision"],
                         mean_recall=mean["recall"],
                         rmse_x=mean["rmse_x"], rmse_y=mean["rmse_y"],
                         rmse_vx=mean["rmse_vx"], rmse_vy=mean["rmse_vy"],
                         n_runs=len(run_summaries), n_failed=n_failed)


@dataclass
class MetricsReport:
    """Measures per (method, scenario), plus an optional improvement table.

    ``tables[method][scenario]`` holds a MethodMetrics; the improvement table
    against a named baseline method is derived on demand.
    """

    tables: dict = field(default_factory=dict)
    baseline: str | None = None

    def add(self, method: str, scenario: str, metrics: MethodMetrics):
        self.tables.setdefault(method, {})[scenario] = metrics

    @property
    def methods(self):
        return list(self.tables)

    @property
    def scenarios(self):
        seen = []
        for per_scenario in self.tables.values():
            for name in per_scenario:
                if name not in seen:
                    seen.append(name)
        return seen

    def mpi(self, method: str, scenario: str, measure: str) -> float:
        if self.baseline is None:
            raise InvalidArgument("no baseline method named")
        if self.baseline not in self.tables:
            raise InvalidArgument(f"unknown baseline {self.baseline!r}")
        base = self.tables[self.baseline][scenario].value(measure)
        val = self.tables[method][scenario].value(measure)
        return mean_percentage_improvement(base, val, measure_kind(measure))
