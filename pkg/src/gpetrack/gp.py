"""Kernels, batch Gaussian-process regression, and the conditional projection.

Two kernel families are supported:

* ``"scalar-line"``   squared exponential on the real line,
  ``k(a, b) = sigma_f^2 * exp(-(a - b)^2 / (2 l^2))``
* ``"angle-circle"``  periodic squared exponential on angles (period 2*pi),
  ``k(a, b) = sigma_f^2 * exp(-2 sin^2((a - b) / 2) / l^2)``

The conditional projection ``H = K_qb K_bb^{-1}`` maps latent function values
held at a fixed grid of basis points onto arbitrary query inputs; it is the
single approximation every recursive component of the package is built on.
When a query input coincides with a basis point the projection row is an
exact selector and the residual variance vanishes.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InvalidArgument, NumericalFailure

SCALAR_LINE = "scalar-line"
ANGLE_CIRCLE = "angle-circle"
_KINDS = (SCALAR_LINE, ANGLE_CIRCLE)

# Jitter ladder applied to basis/training Gram matrices before Cholesky:
# start at 1e-9*sigma_f^2, escalate tenfold up to 1e-3*sigma_f^2, then fail.
_JITTER_START = 1e-9
_JITTER_STOP = 1e-3

# Query inputs closer than this to a basis point are treated as identical.
_SNAP_TOL = 1e-12


@dataclass(frozen=True)
class GpHyperParams:
    """Hyperparameters of the latent-function GP.

    sigma_f: kernel amplitude (units of the latent function)
    length_scale: kernel length scale (radians for angle-circle inputs)
    sigma_r: measurement noise standard deviation
    alpha: forgetting factor (1/time); 0 means a static function
    prior_mean: constant prior mean of the latent function
    """

    sigma_f: float
    length_scale: float
    sigma_r: float
    alpha: float = 0.0
    prior_mean: float = 0.0

    def __post_init__(self):
        if not np.isfinite([self.sigma_f, self.length_scale, self.sigma_r,
                            self.alpha, self.prior_mean]).all():
            raise InvalidArgument("hyperparameters must be finite")
        if self.sigma_f <= 0:
            raise InvalidArgument(f"sigma_f must be > 0, got {self.sigma_f}")
        if self.length_scale <= 0:
            raise InvalidArgument(
                f"length_scale must be > 0, got {self.length_scale}")
        if self.sigma_r < 0:
            raise InvalidArgument(f"sigma_r must be >= 0, got {self.sigma_r}")
        if self.alpha < 0:
            raise InvalidArgument(f"alpha must be >= 0, got {self.alpha}")


@dataclass(frozen=True)
class InputGrid:
    """Ordered input locations the latent function is represented on."""

    kind: str
    points: np.ndarray

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidArgument(f"unknown grid kind {self.kind!r}")
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1 or pts.size == 0:
            raise InvalidArgument("grid points must be a non-empty 1-D array")
        if not np.isfinite(pts).all():
            raise InvalidArgument("grid points must be finite")
        if np.any(np.diff(pts) <= 0):
            raise InvalidArgument("grid points must be strictly increasing")
        if self.kind == ANGLE_CIRCLE and (pts[0] < 0 or pts[-1] >= 2 * np.pi):
            raise InvalidArgument("angle grid points must lie in [0, 2*pi)")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return self.points.size

    @classmethod
    def line(cls, points):
        return cls(SCALAR_LINE, np.asarray(points, dtype=float))

    @classmethod
    def circle(cls, points):
        return cls(ANGLE_CIRCLE, np.asarray(points, dtype=float))

    @classmethod
    def uniform_circle(cls, n):
        """n basis angles uniformly spaced on [0, 2*pi)."""
        if n < 1:
            raise InvalidArgument("need at least one basis angle")
        return cls(ANGLE_CIRCLE, np.arange(n) * (2 * np.pi / n))


@dataclass(frozen=True)
class GaussianBelief:
    """Gaussian over latent function values on a grid (mean vector, covariance)."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).copy()
        cov = np.asarray(self.cov, dtype=float)
        if mean.ndim != 1:
            raise InvalidArgument("mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise InvalidArgument(
                f"cov shape {cov.shape} does not match mean size {mean.size}")
        cov = 0.5 * (cov + cov.T)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def stddev(self):
        return np.sqrt(np.maximum(np.diag(self.cov), 0.0))


def _check_inputs(x):
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if not np.isfinite(x).all():
        raise InvalidArgument("kernel inputs must be finite")
    return x


def kernel_eval(a, b, hp: GpHyperParams, kind: str) -> float:
    """Evaluate the kernel at a single pair of inputs."""
    return float(kernel_matrix([a], [b], hp, kind)[0, 0])


def kernel_matrix(a, b, hp: GpHyperParams, kind: str) -> np.ndarray:
    """Gram matrix K[i, j] = k(a[i], b[j])."""
    if kind not in _KINDS:
        raise InvalidArgument(f"unknown grid kind {kind!r}")
    a = _check_inputs(a)
    b = _check_inputs(b)
    if a.size == 0 or b.size == 0:
        raise InvalidArgument("kernel inputs must be non-empty")
    diff = a[:, None] - b[None, :]
    sf2 = hp.sigma_f ** 2
    l2 = hp.length_scale ** 2
    if kind == SCALAR_LINE:
        return sf2 * np.exp(-0.5 * diff ** 2 / l2)
    return sf2 * np.exp(-2.0 * np.sin(0.5 * diff) ** 2 / l2)


def kernel_deriv(a, b, hp: GpHyperParams, kind: str) -> np.ndarray:
    """Derivative of the Gram matrix with respect to the first input,
    d k(a[i], b[j]) / d a[i]."""
    k = kernel_matrix(a, b, hp, kind)
    a = _check_inputs(a)
    b = _check_inputs(b)
    diff = a[:, None] - b[None, :]
    l2 = hp.length_scale ** 2
    if kind == SCALAR_LINE:
        return -k * diff / l2
    return -k * np.sin(diff) / l2


def spd_solve(a: np.ndarray, b: np.ndarray, scale: float) -> np.ndarray:
    """Solve the symmetric positive-definite system a @ x = b.

    A jitter of ``scale * 1e-9`` is added to the diagonal before the Cholesky
    factorization and escalated tenfold on failure up to ``scale * 1e-3``;
    beyond that a NumericalFailure is raised.  ``scale`` should be the
    natural magnitude of the diagonal (sigma_f^2 for Gram matrices).
    """
    a = np.asarray(a, dtype=float)
    jitter = _JITTER_START * scale
    eye = np.eye(a.shape[0])
    while jitter <= _JITTER_STOP * scale * (1 + 1e-12):
        try:
            factor = cho_factor(a + jitter * eye, lower=True)
        except np.linalg.LinAlgError:
            jitter *= 10.0
            continue
        return cho_solve(factor, b)
    raise NumericalFailure(
        f"matrix not positive definite after jitter escalation to {jitter:g}")


def _grid_distance(q, pts, kind):
    """Pairwise |q_i - pts_j|, wrapped onto [-pi, pi) for angular inputs."""
    diff = q[:, None] - pts[None, :]
    if kind == ANGLE_CIRCLE:
        diff = np.mod(diff + np.pi, 2 * np.pi) - np.pi
    return np.abs(diff)


def conditional_projection(query_inputs, basis: InputGrid, hp: GpHyperParams,
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Projection of basis-point function values onto query inputs.

    Returns ``(H, R_extra)`` with ``H = K_qb K_bb^{-1}`` and
    ``R_extra = K_qq - K_qb K_bb^{-1} K_bq``.  Means are handled by the
    caller, which applies H to mean-centered values.  Query inputs that
    coincide with a basis point get an exact one-hot selector row, so the
    subset case is exact irrespective of the conditioning of K_bb.
    """
    q = _check_inputs(query_inputs)
    if q.size == 0:
        raise InvalidArgument("query inputs must be non-empty")
    kind = basis.kind
    k_bq = kernel_matrix(basis.points, q, hp, kind)
    k_qq = kernel_matrix(q, q, hp, kind)
    k_bb = kernel_matrix(basis.points, basis.points, hp, kind)
    h = spd_solve(k_bb, k_bq, hp.sigma_f ** 2).T

    dist = _grid_distance(q, basis.points, kind)
    hit_q, hit_b = np.nonzero(dist < _SNAP_TOL)
    if hit_q.size:
        h[hit_q, :] = 0.0
        h[hit_q, hit_b] = 1.0

    r_extra = k_qq - h @ k_bq
    r_extra = 0.5 * (r_extra + r_extra.T)
    return h, r_extra


def gp_regress(train_inputs, train_outputs, query_inputs, hp: GpHyperParams,
               kind: str) -> GaussianBelief:
    """Batch GP regression with a constant prior mean.

    Conditions the prior ``GP(prior_mean, k)`` on noisy observations
    ``y = f(x) + e``, ``e ~ N(0, sigma_r^2)``, and returns the posterior at
    the query inputs.  With no training data the prior itself is returned.
    """
    q = _check_inputs(query_inputs)
    x = np.atleast_1d(np.asarray(train_inputs, dtype=float))
    y = np.atleast_1d(np.asarray(train_outputs, dtype=float))
    if x.size != y.size:
        raise InvalidArgument("training inputs and outputs differ in length")
    k_qq = kernel_matrix(q, q, hp, kind)
    if x.size == 0:
        return GaussianBelief(np.full(q.size, hp.prior_mean), k_qq)
    if not np.isfinite(x).all() or not np.isfinite(y).all():
        raise InvalidArgument("training data must be finite")

    k_tt = kernel_matrix(x, x, hp, kind) + hp.sigma_r ** 2 * np.eye(x.size)
    k_tq = kernel_matrix(x, q, hp, kind)
    w = spd_solve(k_tt, np.column_stack([k_tq, (y - hp.prior_mean)]),
                  hp.sigma_f ** 2)
    mean = hp.prior_mean + k_tq.T @ w[:, -1]
    cov = k_qq - k_tq.T @ w[:, :-1]
    return GaussianBelief(mean, cov)
