"""Synthetic scenarios: star-convex shapes, trajectories, scans, Monte Carlo.

Shapes are radial functions of the local angle, either from a small
parametric library or from a lookup table with periodic linear
interpolation.  The library presets S1..S5 are project-defined stand-ins
(star, cross, ellipse, rounded rectangle, three-lobe blob); every experiment
refers to shapes by id so the definitions can be swapped without touching
the protocol.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .tracker import Scan, TrackerParams, track_scans


def _rect_radius(theta, half_w, half_h):
    """Radial support of an axis-aligned rectangle centered at the origin."""
    c = np.abs(np.cos(theta))
    s = np.abs(np.sin(theta))
    with np.errstate(divide="ignore"):
        return np.minimum(np.where(c > 0, half_w / c, np.inf),
                          np.where(s > 0, half_h / s, np.inf))


@dataclass(frozen=True)
class ShapeModel:
    """Star-convex extent as a positive, 2*pi-periodic radial function."""

    id: str
    kind: str  # circle | ellipse | rectangle | cross | star | blob | table
    params: dict = field(default_factory=dict)

    def radius(self, theta_local):
        theta = np.asarray(theta_local, dtype=float)
        p = self.params
        if self.kind == "circle":
            r = np.full_like(theta, p["r"], dtype=float)
        elif self.kind == "ellipse":
            a, b = p["a"], p["b"]
            r = a * b / np.sqrt((b * np.cos(theta)) ** 2
                                + (a * np.sin(theta)) ** 2)
        elif self.kind == "rectangle":
            r = _rect_radius(theta, p["half_w"], p["half_h"])
        elif self.kind == "cross":
            arm_l, arm_w = p["arm_length"], p["arm_width"]
            r = np.maximum(_rect_radius(theta, arm_l, arm_w),
                           _rect_radius(theta, arm_w, arm_l))
        elif self.kind == "star":
            r = p["r0"] * (1.0 + p["amp"] * np.cos(p.get("lobes", 5) * theta))
        elif self.kind == "blob":
            r = p["r0"] * (1.0 + p["amp"] * np.cos(3 * theta)
                           + p.get("amp2", 0.0) * np.sin(2 * theta))
        elif self.kind == "rounded_rectangle":
            # superellipse: exponent > 2 squares off the sides
            a, b, n = p["a"], p["b"], p.get("exponent", 4.0)
            r = (np.abs(np.cos(theta) / a) ** n
                 + np.abs(np.sin(theta) / b) ** n) ** (-1.0 / n)
        elif self.kind == "table":
            ang = np.asarray(p["angles"], dtype=float)
            rad = np.asarray(p["radii"], dtype=float)
            wrapped = np.mod(theta, 2.0 * np.pi)
            r = np.interp(wrapped, np.append(ang, ang[0] + 2.0 * np.pi),
                          np.append(rad, rad[0]))
        else:
            raise InvalidArgument(f"unknown shape kind {self.kind!r}")
        return r if np.ndim(theta_local) else float(r)

    def contour(self, n=360):
        theta = np.arange(n) * (2.0 * np.pi / n)
        r = self.radius(theta)
        return r[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])


_LIBRARY = {
    "S1": ("star", {"r0": 1.0, "amp": 0.3, "lobes": 5}),
    "S2": ("cross", {"arm_length": 1.2, "arm_width": 0.4}),
    "S3": ("ellipse", {"a": 1.5, "b": 1.0}),
    "S4": ("rounded_rectangle", {"a": 1.4, "b": 0.9, "exponent": 4.0}),
    "S5": ("blob", {"r0": 1.0, "amp": 0.25, "amp2": 0.1}),
}


def library_shape(shape_id: str) -> ShapeModel:
    """One of the named library presets S1..S5."""
    try:
        kind, params = _LIBRARY[shape_id]
    except KeyError:
        raise InvalidArgument(
            f"unknown shape id {shape_id!r}; known: {sorted(_LIBRARY)}")
    return ShapeModel(shape_id, kind, params)


def shape_radius(shape: ShapeModel, theta_local):
    return shape.radius(theta_local)


@dataclass(frozen=True)
class PointSampler:
    """Number of contour points per scan: a fixed count or a Poisson draw."""

    kind: str = "fixed"  # fixed | poisson
    count: int = 20
    mean: float = 20.0

    def draw(self, rng):
        if self.kind == "fixed":
            return self.count
        if self.kind == "poisson":
            # clamp so a scan is never empty
            return max(1, int(rng.poisson(self.mean)))
        raise InvalidArgument(f"unknown sampler kind {self.kind!r}")


@dataclass(frozen=True)
class Scenario:
    shape: ShapeModel
    waypoints: tuple  # ((t, x, y), ...) strictly increasing in t
    orientation: float = 0.0
    scan_rate: float = 1.0
    points_per_scan: PointSampler = PointSampler()
    noise_std: float = 0.1
    duration: float | None = None

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        if wp.ndim != 2 or wp.shape[1] != 3 or wp.shape[0] < 2:
            raise InvalidArgument("need >= 2 waypoints of (t, x, y)")
        if np.any(np.diff(wp[:, 0]) <= 0):
            raise InvalidArgument("waypoint times must be strictly increasing")
        if self.scan_rate <= 0:
            raise InvalidArgument("scan_rate must be > 0")
        dur = self.duration if self.duration is not None else float(
            wp[-1, 0] - wp[0, 0])
        if dur <= 0:
            raise InvalidArgument("duration must be > 0")
        object.__setattr__(self, "duration", dur)
        object.__setattr__(self, "waypoints",
                           tuple(tuple(row) for row in wp))


@dataclass(frozen=True)
class GroundTruthFrame:
    time: float
    center: np.ndarray
    velocity: np.ndarray
    psi: float
    contour: np.ndarray  # (k, 2), closed implicitly


def generate_trajectory(scenario: Scenario, contour_points=360):
    """Ground truth at scan times: piecewise-linear waypoint interpolation.

    Velocity is the active segment's slope; orientation is fixed.
    """
    wp = np.asarray(scenario.waypoints, dtype=float)
    t0, t_end = wp[0, 0], wp[-1, 0]
    if scenario.duration > (t_end - t0) + 1e-9:
        raise InvalidArgument("duration exceeds the waypoint time span")
    n_frames = int(np.floor(scenario.duration * scenario.scan_rate)) + 1
    times = t0 + np.arange(n_frames) / scenario.scan_rate

    seg_v = np.diff(wp[:, 1:3], axis=0) / np.diff(wp[:, 0])[:, None]
    base = scenario.shape.contour(contour_points)
    psi = scenario.orientation
    rot = np.array([[np.cos(psi), -np.sin(psi)],
                    [np.sin(psi), np.cos(psi)]])
    rotated = base @ rot.T

    frames = []
    for t in times:
        cx = np.interp(t, wp[:, 0], wp[:, 1])
        cy = np.interp(t, wp[:, 0], wp[:, 2])
        seg = min(np.searchsorted(wp[:, 0], t, side="right") - 1,
                  len(seg_v) - 1)
        center = np.array([cx, cy])
        frames.append(GroundTruthFrame(
            time=float(t), center=center, velocity=seg_v[seg].copy(),
            psi=psi, contour=center + rotated))
    return frames


def generate_scan(frame: GroundTruthFrame, scenario: Scenario, rng_seed,
                  ) -> Scan:
    """Noisy contour points of one frame, deterministic given the seed.

    Local angles are uniform on [0, 2*pi); points sit on the true contour at
    those angles plus isotropic Gaussian noise.
    """
    rng = np.random.default_rng(rng_seed)
    count = scenario.points_per_scan.draw(rng)
    theta_l = rng.uniform(0.0, 2.0 * np.pi, count)
    r = scenario.shape.radius(theta_l)
    ang = theta_l + frame.psi
    pts = frame.center + r[:, None] * np.column_stack(
        [np.cos(ang), np.sin(ang)])
    if scenario.noise_std > 0:
        pts = pts + rng.normal(0.0, scenario.noise_std, pts.shape)
    return Scan(time=frame.time, points=pts)


def derive_seed(master_seed: int, *key) -> np.random.SeedSequence:
    """Stateless per-run / per-frame seed derivation from a master seed."""
    return np.random.SeedSequence(master_seed, spawn_key=tuple(key))


def generate_scans(frames, scenario: Scenario, run_seed_key):
    """One scan per frame; frame i draws from derive_seed(*run_seed_key, i)."""
    master, *rest = run_seed_key
    return [generate_scan(frame, scenario, derive_seed(master, *rest, i))
            for i, frame in enumerate(frames)]


@dataclass(frozen=True)
class RunResult:
    """One Monte Carlo run: truth, scans, and tracker output (or failure)."""

    run_index: int
    frames: tuple
    scans: tuple
    filtered: tuple = ()
    smoothed: tuple | None = None
    failed: bool = False
    error: str = ""


def run_single(scenario: Scenario, params: TrackerParams, master_seed: int,
               run_index: int = 0) -> RunResult:
    frames = generate_trajectory(scenario)
    scans = generate_scans(frames, scenario, (master_seed, run_index))
    try:
        result = track_scans(scans, params)
    except Exception as exc:  # noqa: BLE001 - a failed run is data, not a crash
        return RunResult(run_index, tuple(frames), tuple(scans),
                         failed=True, error=f"{type(exc).__name__}: {exc}")
    return RunResult(run_index, tuple(frames), tuple(scans),
                     filtered=result.filtered, smoothed=result.smoothed)


def run_monte_carlo(scenario: Scenario, params: TrackerParams, n_runs: int,
                    master_seed: int, workers: int = 1):
    """Independent seeded runs of the same scenario, in deterministic order.

    Run i derives its seeds from (master_seed, i) only, so results do not
    depend on execution order or worker count.  Failed runs are returned
    flagged rather than raised; aggregation excludes them.
    """
    if n_runs < 1:
        raise InvalidArgument("n_runs must be >= 1")
    indices = list(range(n_runs))
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_mc_task,
                                    [(scenario, params, master_seed, i)
                                     for i in indices]))
    else:
        results = [run_single(scenario, params, master_seed, i)
                   for i in indices]
    return sorted(results, key=lambda r: r.run_index)


def _run_mc_task(args):
    scenario, params, master_seed, run_index = args
    return run_single(scenario, params, master_seed, run_index)
