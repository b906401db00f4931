"""Extended object tracker: GP extent EKF and a fixed-lag RTS smoother.

The augmented state is ``[x, y, vx, vy, psi, f_1 .. f_N]``: planar position
and velocity of the internal reference point, object orientation, and the
extent radii at N fixed local basis angles.  Orientation is a first-class
state variable; every measurement's local angle is computed relative to it
and the analytic Jacobian carries the full dependence on position and
orientation (checked against finite differences in the test suite).
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometry, InvalidArgument
from .gp import (GaussianBelief, GpHyperParams, InputGrid,
                 conditional_projection, kernel_deriv, kernel_matrix,
                 spd_solve)

_PSI = 4
_NKIN = 5  # kinematic + orientation block ahead of the extent values


def wrap_angle(a):
    """Wrap angle(s) onto [-pi, pi)."""
    return np.mod(np.asarray(a) + np.pi, 2.0 * np.pi) - np.pi


@dataclass(frozen=True)
class ProcessNoiseConfig:
    """White-acceleration position noise and orientation random-walk noise."""

    sigma_q: float = 1.0
    sigma_q_psi: float = 1e-4

    def __post_init__(self):
        if self.sigma_q < 0 or self.sigma_q_psi < 0:
            raise InvalidArgument("process noise stds must be >= 0")


@dataclass(frozen=True)
class Scan:
    """All contour point measurements of one frame."""

    time: float
    points: np.ndarray  # (n, 2)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 1:
            raise InvalidArgument("scan needs an (n, 2) array with n >= 1")
        if not np.isfinite(pts).all() or not np.isfinite(self.time):
            raise InvalidArgument("scan fields must be finite")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)


@dataclass(frozen=True)
class TrackState:
    """Gaussian over the augmented state at a point in time."""

    mean: np.ndarray
    cov: np.ndarray
    basis: InputGrid
    hp: GpHyperParams
    time: float = 0.0

    def __post_init__(self):
        n = len(self.basis)
        if n < 3:
            raise InvalidArgument("need at least 3 basis angles")
        dim = _NKIN + n
        mean = np.asarray(self.mean, dtype=float).copy()
        cov = np.asarray(self.cov, dtype=float)
        if mean.shape != (dim,) or cov.shape != (dim, dim):
            raise InvalidArgument(
                f"state dimension mismatch: expected {dim}, got "
                f"mean {mean.shape}, cov {cov.shape}")
        mean[_PSI] = wrap_angle(mean[_PSI])
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def center(self):
        return self.mean[0:2]

    @property
    def velocity(self):
        return self.mean[2:4]

    @property
    def psi(self):
        return float(self.mean[_PSI])

    @property
    def extent(self):
        return self.mean[_NKIN:]

    @property
    def dim(self):
        return self.mean.size


def initial_state(points, basis: InputGrid, hp: GpHyperParams, time=0.0,
                  pos_var=4.0, vel_var=1.0, psi_var=(np.pi / 4) ** 2,
                  ) -> TrackState:
    """Weakly informative start: centroid of the first scan's points, zero
    velocity, zero orientation, extent at the prior mean with K_bb spread."""
    pts = np.asarray(points, dtype=float)
    n = len(basis)
    mean = np.zeros(_NKIN + n)
    mean[0:2] = pts.mean(axis=0)
    mean[_NKIN:] = hp.prior_mean
    cov = np.zeros((_NKIN + n, _NKIN + n))
    cov[0, 0] = cov[1, 1] = pos_var
    cov[2, 2] = cov[3, 3] = vel_var
    cov[_PSI, _PSI] = psi_var
    cov[_NKIN:, _NKIN:] = kernel_matrix(basis.points, basis.points, hp,
                                        basis.kind)
    return TrackState(mean, cov, basis, hp, time)


def make_process_model(dt: float, pn: ProcessNoiseConfig, hp: GpHyperParams,
                       basis: InputGrid):
    """Transition matrix F and process noise Q for an interval dt.

    Blocks: constant velocity for position, a random walk for orientation,
    and mean-reverting extent dynamics with decay lam = exp(-alpha*dt) whose
    stationary covariance is K_bb.  The reversion of the extent mean toward
    the prior mean is an affine offset applied by ekf_predict.
    """
    if dt <= 0:
        raise InvalidArgument("dt must be > 0")
    n = len(basis)
    dim = _NKIN + n
    lam = float(np.exp(-hp.alpha * dt))

    f = np.eye(dim)
    f[0, 2] = dt
    f[1, 3] = dt
    f[_NKIN:, _NKIN:] *= lam

    q = np.zeros((dim, dim))
    q2 = pn.sigma_q ** 2
    q[0, 0] = q[1, 1] = q2 * dt ** 3 / 3.0
    q[0, 2] = q[2, 0] = q[1, 3] = q[3, 1] = q2 * dt ** 2 / 2.0
    q[2, 2] = q[3, 3] = q2 * dt
    q[_PSI, _PSI] = pn.sigma_q_psi ** 2 * dt
    k_bb = kernel_matrix(basis.points, basis.points, hp, basis.kind)
    q[_NKIN:, _NKIN:] = (1.0 - lam ** 2) * k_bb
    return f, q


def ekf_predict(state: TrackState, dt: float, pn: ProcessNoiseConfig,
                ) -> TrackState:
    """Time update; the extent mean reverts toward the prior mean."""
    f, q = make_process_model(dt, pn, state.hp, state.basis)
    lam = float(np.exp(-state.hp.alpha * dt))
    mean = f @ state.mean
    mean[_NKIN:] += (1.0 - lam) * state.hp.prior_mean
    cov = f @ state.cov @ f.T + q
    return TrackState(mean, cov, state.basis, state.hp, state.time + dt)


def _radial_projection(thetas, basis: InputGrid, hp: GpHyperParams):
    """Projection of extent values onto local angles, with its angle
    derivative and the per-angle residual variance.

    Returns (H, dH/dtheta, r_extra) with shapes (m, N), (m, N), (m,).
    """
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    k_bb = kernel_matrix(basis.points, basis.points, hp, basis.kind)
    k_bq = kernel_matrix(basis.points, thetas, hp, basis.kind)
    dk_qb = kernel_deriv(thetas, basis.points, hp, basis.kind)
    sol = spd_solve(k_bb, np.hstack([k_bq, dk_qb.T]), hp.sigma_f ** 2)
    m = thetas.size
    h = sol[:, :m].T
    dh = sol[:, m:].T

    # exact selector rows where a local angle coincides with a basis angle
    diff = np.abs(wrap_angle(thetas[:, None] - basis.points[None, :]))
    hit_q, hit_b = np.nonzero(diff < 1e-12)
    if hit_q.size:
        h[hit_q, :] = 0.0
        h[hit_q, hit_b] = 1.0

    r_extra = hp.sigma_f ** 2 - np.einsum("ij,ji->i", h, k_bq)
    return h, dh, r_extra


def _scan_model(state: TrackState, points):
    """Stacked predicted points, Jacobian, and per-point 2x2 noise blocks."""
    hp = state.hp
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n_pts = pts.shape[0]
    c = state.center
    d = pts - c
    rho = np.hypot(d[:, 0], d[:, 1])
    if np.any(rho <= 1e-9):
        raise DegenerateGeometry("measurement coincides with object center")
    theta_g = np.arctan2(d[:, 1], d[:, 0])
    theta_l = wrap_angle(theta_g - state.psi)

    h_f, dh_f, r_extra = _radial_projection(theta_l, state.basis, hp)
    f_centered = state.extent - hp.prior_mean
    radius = hp.prior_mean + h_f @ f_centered
    dradius = dh_f @ f_centered  # d r / d theta_local

    cos_g, sin_g = np.cos(theta_g), np.sin(theta_g)
    u = np.column_stack([cos_g, sin_g])
    uperp = np.column_stack([-sin_g, cos_g])
    # d theta_g / d center = -uperp / rho
    dthg_dc = -uperp / rho[:, None]

    h_pred = c + radius[:, None] * u

    dim = state.dim
    jac = np.zeros((n_pts, 2, dim))
    jac[:, :, 0:2] = (np.eye(2)
                      + u[:, :, None] * (dradius[:, None] * dthg_dc)[:, None, :]
                      + (radius[:, None] * uperp)[:, :, None]
                      * dthg_dc[:, None, :])
    jac[:, :, _PSI] = -dradius[:, None] * u
    jac[:, :, _NKIN:] = u[:, :, None] * h_f[:, None, :]

    r_blocks = (hp.sigma_r ** 2 * np.eye(2)[None, :, :]
                + np.maximum(r_extra, 0.0)[:, None, None]
                * u[:, :, None] * u[:, None, :])
    return h_pred, jac, r_blocks


def measurement_model(state: TrackState, z):
    """Predicted contour point and its Jacobian for one measurement.

    The predicted point lies on the ray from the object center through z at
    the projected extent radius for the measurement's local angle.  The
    Jacobian covers position, orientation, and extent values; velocity
    columns are zero.
    """
    z = np.asarray(z, dtype=float)
    h_pred, jac, _ = _scan_model(state, z[None, :])
    return h_pred[0], jac[0]


def ekf_update_scan(state: TrackState, scan: Scan, point_model=None,
                    ) -> TrackState:
    """Joint EKF update over all points of one scan.

    The measurement noise per point is the isotropic sensor noise plus the
    GP projection residual acting along the ray direction only.  The Joseph
    form keeps the covariance symmetric.  ``point_model`` may substitute a
    callable ``(state, z) -> (h, J, R)`` for the contour model, e.g. for
    verification against a plain Kalman filter.
    """
    if scan.time < state.time:
        raise InvalidArgument(
            f"scan time {scan.time} precedes state time {state.time}")
    pts = scan.points
    n_pts = pts.shape[0]
    dim = state.dim

    if point_model is None:
        h_pred, jac, r_blocks = _scan_model(state, pts)
    else:
        h_pred = np.zeros((n_pts, 2))
        jac = np.zeros((n_pts, 2, dim))
        r_blocks = np.zeros((n_pts, 2, 2))
        for i, z in enumerate(pts):
            h_pred[i], jac[i], r_blocks[i] = point_model(state, z)

    h_stack = h_pred.reshape(-1)
    j_stack = jac.reshape(2 * n_pts, dim)
    r_stack = np.zeros((2 * n_pts, 2 * n_pts))
    for i in range(n_pts):
        r_stack[2 * i:2 * i + 2, 2 * i:2 * i + 2] = r_blocks[i]

    p = state.cov
    innov = pts.reshape(-1) - h_stack
    s = j_stack @ p @ j_stack.T + r_stack
    s = 0.5 * (s + s.T)
    gain = spd_solve(s, j_stack @ p, float(np.trace(s)) / s.shape[0]).T

    mean = state.mean + gain @ innov
    ikj = np.eye(dim) - gain @ j_stack
    cov = ikj @ p @ ikj.T + gain @ r_stack @ gain.T
    return TrackState(mean, cov, state.basis, state.hp, scan.time)


def contour_estimate(state: TrackState, n_vertices: int) -> np.ndarray:
    """Closed contour polygon implied by the state, as (n_vertices, 2).

    Vertices sit at uniform local angles; radii are floored at zero so the
    output stays physical even if the unconstrained state dips negative.
    """
    if n_vertices < 3:
        raise InvalidArgument("a polygon needs at least 3 vertices")
    theta_l = np.arange(n_vertices) * (2.0 * np.pi / n_vertices)
    h, _ = conditional_projection(theta_l, state.basis, state.hp)
    radius = state.hp.prior_mean + h @ (state.extent - state.hp.prior_mean)
    radius = np.maximum(radius, 0.0)
    ang = theta_l + state.psi
    return state.center + radius[:, None] * np.column_stack(
        [np.cos(ang), np.sin(ang)])


# ---------------------------------------------------------------------------
# fixed-lag RTS smoothing
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LagEntry:
    filtered: TrackState
    predicted: TrackState
    transition: np.ndarray


@dataclass(frozen=True)
class LagWindow:
    """Sliding window of the last lag+1 scans' filter output."""

    lag: int
    entries: tuple = ()

    def __post_init__(self):
        if self.lag < 0:
            raise InvalidArgument("lag must be >= 0")
        if len(self.entries) > self.lag + 1:
            raise InvalidArgument("window holds at most lag+1 entries")


def _smooth_entries(entries):
    """Backward RTS pass over the window; newest smoothed equals filtered."""
    smoothed = [entries[-1].filtered]
    for k in range(len(entries) - 2, -1, -1):
        nxt = entries[k + 1]
        cur = entries[k].filtered
        p_pred = nxt.predicted.cov
        f = nxt.transition
        gain = spd_solve(p_pred, f @ cur.cov,
                         float(np.trace(p_pred)) / p_pred.shape[0]).T
        diff = smoothed[0].mean - nxt.predicted.mean
        diff[_PSI] = wrap_angle(diff[_PSI])
        mean = cur.mean + gain @ diff
        cov = cur.cov + gain @ (smoothed[0].cov - p_pred) @ gain.T
        smoothed.insert(0, TrackState(mean, cov, cur.basis, cur.hp, cur.time))
    return smoothed


def smoother_push(window: LagWindow, filtered: TrackState,
                  predicted: TrackState, transition: np.ndarray):
    """Append one scan's filter output; returns the new window and the
    smoothed state exiting it.

    A scan exits once exactly ``lag`` newer scans have arrived, so its
    smoothed estimate is fixed-lag: None is returned while the window is
    still filling.  Emitted estimates leave the window and never change.
    """
    entries = window.entries + (LagEntry(filtered, predicted,
                                         np.asarray(transition, dtype=float)),)
    emitted = None
    if len(entries) == window.lag + 1:
        emitted = _smooth_entries(entries)[0]
        entries = entries[1:]
    return LagWindow(window.lag, entries), emitted


def window_smoothed(window: LagWindow):
    """Smoothed states over the scans currently retained, oldest first."""
    if not window.entries:
        return []
    return _smooth_entries(window.entries)


def smoother_flush(window: LagWindow):
    """Smoothed states for the scans still in the window, oldest first.

    Call once after the last scan; the retained scans get smoothed with
    whatever future is available (less than the full lag)."""
    return window_smoothed(window)


# ---------------------------------------------------------------------------
# whole-track driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackerParams:
    """Everything the tracker needs besides the scans themselves."""

    hp: GpHyperParams
    pn: ProcessNoiseConfig
    n_basis: int = 20
    lag: int = 10
    use_smoother: bool = False


@dataclass(frozen=True)
class TrackResult:
    filtered: tuple
    smoothed: tuple | None = None


def track_scans(scans, params: TrackerParams) -> TrackResult:
    """Run the filter (and optionally the fixed-lag smoother) over scans.

    The state is initialized from the first scan's centroid and updated with
    every scan including the first.  Smoothed estimates are emitted with a
    delay of ``lag`` scans and flushed at the end, so both output sequences
    have one state per scan.
    """
    if not scans:
        raise InvalidArgument("need at least one scan")
    basis = InputGrid.uniform_circle(params.n_basis)
    state = None
    window = LagWindow(params.lag) if params.use_smoother else None
    filtered = []
    smoothed = []

    for scan in scans:
        if state is None:
            state = initial_state(scan.points, basis, params.hp,
                                  time=scan.time)
            predicted, transition = state, np.eye(state.dim)
        else:
            dt = scan.time - state.time
            if dt <= 0:
                raise InvalidArgument("scan times must be strictly increasing")
            transition, _ = make_process_model(dt, params.pn, params.hp, basis)
            predicted = ekf_predict(state, dt, params.pn)
            state = predicted
        state = ekf_update_scan(state, scan)
        filtered.append(state)
        if window is not None:
            window, emitted = smoother_push(window, state, predicted,
                                            transition)
            if emitted is not None:
                smoothed.append(emitted)

    if window is not None:
        smoothed.extend(smoother_flush(window))
        return TrackResult(tuple(filtered), tuple(smoothed))
    return TrackResult(tuple(filtered))
