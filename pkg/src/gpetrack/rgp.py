"""Recursive GP regression over a fixed grid of basis points.

The latent function values at the basis points form the state of a Kalman
filter.  Each scalar measurement is folded in through the conditional
projection onto the basis, so when measurement inputs coincide with basis
points the recursion reproduces batch GP regression exactly; otherwise it is
an approximation that improves as the basis is refined relative to the
kernel length scale.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument, NumericalFailure
from .gp import (GaussianBelief, GpHyperParams, InputGrid,
                 conditional_projection, kernel_matrix)


@dataclass(frozen=True)
class RgpState:
    basis: InputGrid
    belief: GaussianBelief
    hp: GpHyperParams
    time: float = 0.0

    def __post_init__(self):
        if self.belief.mean.size != len(self.basis):
            raise InvalidArgument("belief dimension does not match basis size")


@dataclass(frozen=True)
class ScalarMeasurement:
    input: float
    value: float
    time: float = 0.0

    def __post_init__(self):
        if not np.isfinite([self.input, self.value, self.time]).all():
            raise InvalidArgument("measurement fields must be finite")


def rgp_init(basis: InputGrid, hp: GpHyperParams) -> RgpState:
    """Prior state: mean at prior_mean everywhere, covariance K_bb."""
    k_bb = kernel_matrix(basis.points, basis.points, hp, basis.kind)
    belief = GaussianBelief(np.full(len(basis), hp.prior_mean), k_bb)
    return RgpState(basis, belief, hp)


def rgp_time_update(state: RgpState, dt: float) -> RgpState:
    """Mean-reverting forgetting step over an interval dt.

    With lam = exp(-alpha*dt) the mean decays toward the prior mean and the
    covariance relaxes toward the prior covariance K_bb, which makes the GP
    prior the stationary distribution of the extent dynamics.
    """
    if dt < 0:
        raise InvalidArgument("dt must be >= 0")
    hp = state.hp
    lam = float(np.exp(-hp.alpha * dt))
    k_bb = kernel_matrix(state.basis.points, state.basis.points, hp,
                         state.basis.kind)
    mean = hp.prior_mean + lam * (state.belief.mean - hp.prior_mean)
    cov = lam ** 2 * state.belief.cov + (1.0 - lam ** 2) * k_bb
    return RgpState(state.basis, GaussianBelief(mean, cov), hp,
                    state.time + dt)


def rgp_measurement_update(state: RgpState, m: ScalarMeasurement) -> RgpState:
    """Kalman update with one scalar observation of the latent function.

    The observation row H and the projection residual come from the
    conditional projection at the measurement input; the residual adds to
    the sigma_r^2 observation noise.  The covariance is updated in Joseph
    form to keep it symmetric under round-off.
    """
    if m.time < state.time:
        raise InvalidArgument(
            f"measurement time {m.time} precedes state time {state.time}")
    hp = state.hp
    h, r_extra = conditional_projection([m.input], state.basis, hp)
    h = h[0]
    noise = hp.sigma_r ** 2 + float(r_extra[0, 0])

    p = state.belief.cov
    mean = state.belief.mean
    innov = m.value - (hp.prior_mean + h @ (mean - hp.prior_mean))
    s = float(h @ p @ h + noise)
    if s <= 0:
        raise NumericalFailure(f"innovation variance {s:g} is not positive")
    gain = (p @ h) / s
    mean = mean + gain * innov
    ikh = np.eye(mean.size) - np.outer(gain, h)
    cov = ikh @ p @ ikh.T + noise * np.outer(gain, gain)
    return RgpState(state.basis, GaussianBelief(mean, cov), hp, m.time)


def rgp_predict_at(state: RgpState, query_inputs) -> GaussianBelief:
    """Posterior over the latent function at arbitrary query inputs."""
    hp = state.hp
    h, r_extra = conditional_projection(query_inputs, state.basis, hp)
    mean = hp.prior_mean + h @ (state.belief.mean - hp.prior_mean)
    cov = h @ state.belief.cov @ h.T + r_extra
    return GaussianBelief(mean, cov)
