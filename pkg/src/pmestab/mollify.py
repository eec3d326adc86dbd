"""Exponential time mollification u*(x, t) = (1/σ) ∫_0^t e^((s-t)/σ) u(x, s) ds.

The kernel is integrated exactly against the piecewise-linear-in-time
interpolant of the stored levels. On each interval [t_k, t_k + h] with
slope b = (u_{k+1} - u_k)/h, u* solves σ y' = u - y and equals

    y(t_k + τ) = (u_k - bσ) + bτ + (y_k - u_k + bσ) e^(-τ/σ),

so norms of u* over Ω_T can also be computed in closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyTrajectory(ValueError):
    pass


def _pieces(times, values, sigma):
    """Per-interval coefficients (alpha, beta, gamma, h) of the closed form."""
    y = mollify_values(times, values, sigma)
    h = np.diff(times).reshape((-1,) + (1,) * (values.ndim - 1))
    b = np.diff(values, axis=0) / h
    alpha = values[:-1] - b * sigma
    gamma = y[:-1] - values[:-1] + b * sigma
    return alpha, b, gamma, h, y


def mollify_values(times, values, sigma: float) -> np.ndarray:
    """u* at the stored times; ``values`` has time as its first axis."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.shape[0] == 0:
        raise EmptyTrajectory("nothing to mollify")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    out = np.empty_like(values)
    out[0] = 0.0  # the integral starts at t = times[0]
    for k in range(len(times) - 1):
        h = times[k + 1] - times[k]
        e = np.exp(-h / sigma)
        one_minus_e = -np.expm1(-h / sigma)
        b = (values[k + 1] - values[k]) / h
        out[k + 1] = out[k] * e + (values[k] - b * sigma) * one_minus_e + b * h
    return out


@dataclass(frozen=True, eq=False)
class MollifiedTrajectory:
    source: object
    sigma: float
    values: np.ndarray

    @property
    def times(self):
        return self.source.times

    def lp_norm(self, p: float) -> float:
        """‖u*‖ in L^p(Ω_T), exact for the piecewise-linear source (p in {1, 2, inf})."""
        alpha, beta, gamma, h, y = _pieces(self.times, self.source.fields, self.sigma)
        s = self.sigma
        V = self.source.grid.volumes
        if p == np.inf:
            # interior extremum of alpha + beta*tau + gamma*exp(-tau/s)
            with np.errstate(divide="ignore", invalid="ignore"):
                ratio = beta * s / gamma
                tau = -s * np.log(ratio)
            ok = (ratio > 0) & (tau > 0) & (tau < h)
            interior = np.where(ok, np.abs(alpha + beta * tau + gamma * np.exp(-tau / s)), 0.0)
            return float(max(np.abs(y).max(), interior.max(initial=0.0)))
        e = np.exp(-h / s)
        E1 = s * (1 - e)  # ∫ e^(-τ/s)
        if p == 1:
            if np.any(self.source.fields < 0):
                raise ValueError("closed-form L1 norm needs a nonnegative source")
            per = alpha * h + beta * h**2 / 2 + gamma * E1
        elif p == 2:
            e2 = np.exp(-2 * h / s)
            Etau = s**2 * (1 - e) - s * h * e  # ∫ τ e^(-τ/s)
            per = (alpha**2 * h + alpha * beta * h**2 + beta**2 * h**3 / 3
                   + 2 * gamma * (alpha * E1 + beta * Etau) + gamma**2 * s / 2 * (1 - e2))
        else:
            raise ValueError("closed-form norms are available for p in {1, 2, inf}")
        return float(np.sum(per * V) ** (1.0 / p))


def source_lp_norm(traj, p: float) -> float:
    """‖u‖ in L^p(Ω_T) of the piecewise-linear-in-time interpolant (p in {1, 2, inf})."""
    u = np.asarray(traj.fields, dtype=float)
    V = traj.grid.volumes
    h = np.diff(traj.times)[:, None]
    a, b = u[:-1], u[1:]
    if p == np.inf:
        return float(np.abs(u).max())
    if p == 1:
        if np.any(u < 0):
            raise ValueError("closed-form L1 norm needs a nonnegative source")
        return float(np.sum(h * (a + b) / 2 * V))
    if p == 2:
        return float(np.sqrt(np.sum(h * (a * a + a * b + b * b) / 3 * V)))
    raise ValueError("p must be 1, 2 or inf")


def mollify(traj, sigma: float) -> MollifiedTrajectory:
    if len(traj.times) == 0:
        raise EmptyTrajectory("trajectory has no levels")
    return MollifiedTrajectory(traj, float(sigma), mollify_values(traj.times, traj.fields, sigma))


def time_derivative_identity_defect(mt: MollifiedTrajectory) -> float:
    """max over interior levels of |∂t u* - (u - u*)/σ|, ∂t by centred differences."""
    t = np.asarray(mt.times)
    if len(t) < 3:
        raise ValueError("need at least three time levels")
    y = mt.values
    u = np.asarray(mt.source.fields)
    dt = (t[2:] - t[:-2]).reshape((-1,) + (1,) * (y.ndim - 1))
    dydt = (y[2:] - y[:-2]) / dt
    return float(np.max(np.abs(dydt - (u[1:-1] - y[1:-1]) / mt.sigma)))


def uniform_limit_defect(mt: MollifiedTrajectory) -> float:
    """max |u* + e^(-t/σ) u(., 0) - u| over the stored levels."""
    t = np.asarray(mt.times) - mt.times[0]
    u = np.asarray(mt.source.fields)
    decay = np.exp(-t / mt.sigma).reshape((-1,) + (1,) * (u.ndim - 1))
    return float(np.max(np.abs(mt.values + decay * u[0] - u)))
