"""Self-similar source solutions of u_t = Δ(u^m) for m > 1 and m_c < m < 1.

With ``lam = barenblatt_lambda`` and ``xi = |x| t^(-lam/n)``::

    m > 1:   B(x, t) = t^-lam (C - kp xi^2)_+^(1/(m-1)),   kp = lam (m-1) / (2 m n)
    m < 1:   B(x, t) = t^-lam (C + k  xi^2)^(-1/(1-m)),    k  = lam (1-m) / (2 m n)

and B = 0 for t <= 0. The mass is independent of t; :func:`normalize`
picks C by root finding on the mass computed with adaptive quadrature.
:func:`cumulative_mass` uses the incomplete beta function instead, which
gives exact cell averages for finite-volume initial data.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import inf, sqrt

import numpy as np
from scipy import integrate as spi
from scipy import optimize, special

from .grid import DimensionMismatch, IntervalGrid, unit_ball_volume
from .params import Exponent, derive_constants


class NormalizationFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class BarenblattProfile:
    exponent: Exponent
    C: float
    total_mass: float

    def __post_init__(self):
        if self.exponent.m == 1.0:
            raise ValueError("m = 1 has no Barenblatt profile here; use the heat kernel")
        if not self.C > 0:
            raise ValueError(f"profile constant must be positive, got {self.C}")

    @property
    def lam(self) -> float:
        return derive_constants(self.exponent).barenblatt_lambda

    @property
    def k(self) -> float:
        """Coefficient of xi^2, taken positive on both branches."""
        m, n = self.exponent.m, self.exponent.n
        return self.lam * abs(m - 1.0) / (2.0 * m * n)

    def profile(self, xi):
        """B(x, 1) as a function of xi = |x|."""
        xi = np.asarray(xi, dtype=float)
        m = self.exponent.m
        if m > 1.0:
            base = np.maximum(self.C - self.k * xi**2, 0.0)
            return base ** (1.0 / (m - 1.0))
        return (self.C + self.k * xi**2) ** (-1.0 / (1.0 - m))

    def support_radius(self, t: float) -> float:
        """Front position for m > 1; ``inf`` for fast diffusion."""
        if self.exponent.m < 1.0:
            return inf
        if t <= 0:
            return 0.0
        return sqrt(self.C / self.k) * t ** (self.lam / self.exponent.n)

    def peak(self, t: float) -> float:
        """sup_x B(x, t) = B(0, t)."""
        return float(self.evaluate(0.0, t))

    def evaluate(self, x, t: float):
        x = np.asarray(x, dtype=float)
        if t <= 0:
            return np.zeros(x.shape[:-1] if x.ndim > 1 else x.shape)
        r = np.linalg.norm(x, axis=-1) if x.ndim > 1 else np.abs(x)
        return t ** (-self.lam) * self.profile(r * t ** (-self.lam / self.exponent.n))

    def cumulative_mass(self, r, t: float):
        """Mass of B(., t) inside the ball of radius r (closed form)."""
        r = np.asarray(r, dtype=float)
        m, n = self.exponent.m, self.exponent.n
        a = 0.5 * n
        area = n * unit_ball_volume(n)
        xi = r * t ** (-self.lam / n)
        u = self.k * xi**2 / self.C
        scale = 0.5 * area * (self.C / self.k) ** a
        if m > 1.0:
            q = 1.0 / (m - 1.0)
            z = np.minimum(u, 1.0)
            return scale * self.C**q * special.beta(a, q + 1) * special.betainc(a, q + 1, z)
        p = 1.0 / (1.0 - m)
        with np.errstate(invalid="ignore"):
            w = np.where(np.isinf(u), 1.0, u / (1.0 + u))
        return scale * self.C ** (-p) * special.beta(a, p - a) * special.betainc(a, p - a, w)

    def cell_averages(self, grid, t: float) -> np.ndarray:
        """Exact cell averages of B(., t) on a radial grid."""
        if isinstance(grid, IntervalGrid) or grid.n != self.exponent.n:
            raise DimensionMismatch("cell averages need a radial grid of the profile's dimension")
        if t <= 0:
            return np.zeros(grid.cells)
        return np.diff(self.cumulative_mass(grid.faces, t)) / grid.volumes

    def sample(self, grid, t: float) -> np.ndarray:
        """Point values at the cell centres."""
        if grid.n != self.exponent.n:
            raise DimensionMismatch("grid and profile dimensions differ")
        return self.evaluate(grid.distance(), t)


def _mass_by_quadrature(e: Exponent, C: float) -> float:
    m, n = e.m, e.n
    lam = derive_constants(e).barenblatt_lambda
    k = lam * abs(m - 1.0) / (2.0 * m * n)
    area = n * unit_ball_volume(n)
    if m > 1.0:
        q = 1.0 / (m - 1.0)
        xi0 = sqrt(C / k)
        f = lambda s: s ** (n - 1) * max(C - k * s * s, 0.0) ** q
        val, _ = spi.quad(f, 0.0, xi0, epsabs=0.0, epsrel=1e-13, limit=200)
    else:
        p = 1.0 / (1.0 - m)
        # split at the profile scale so quad sees the bulk and the power tail separately
        xs = sqrt(C / k)
        f = lambda s: s ** (n - 1) * (C + k * s * s) ** (-p)
        head, _ = spi.quad(f, 0.0, xs, epsabs=0.0, epsrel=1e-13, limit=200)
        tail, _ = spi.quad(f, xs, inf, epsabs=0.0, epsrel=1e-12, limit=400)
        val = head + tail
    return area * val


def profile_mass(e: Exponent, C: float) -> float:
    """Mass of the profile with constant C, by adaptive quadrature."""
    return _mass_by_quadrature(e, C)


def normalize(e: Exponent, mass: float = 1.0) -> BarenblattProfile:
    """Profile whose total mass equals ``mass`` (1 by default).

    The mass is increasing in C for m > 1 and decreasing for m < 1, so the
    root is unique in both cases.
    """
    if e.m == 1.0:
        raise ValueError("m = 1 has no Barenblatt profile here; use the heat kernel")
    if e.m < 1.0 and 1.0 / (1.0 - e.m) <= 0.5 * e.n:
        raise NormalizationFailed("infinite mass: exponent at or below m_c")
    g = lambda logC: np.log(_mass_by_quadrature(e, np.exp(logC))) - np.log(mass)
    lo, hi = -5.0, 5.0
    for _ in range(40):
        if g(lo) * g(hi) < 0:
            break
        lo, hi = 2 * lo, 2 * hi
    else:
        raise NormalizationFailed(f"could not bracket the mass for m={e.m}, n={e.n}")
    logC = optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    C = float(np.exp(logC))
    return BarenblattProfile(e, C, _mass_by_quadrature(e, C))


def lp_distance(p1: BarenblattProfile, p2: BarenblattProfile, t: float, p: float, g) -> float:
    """(∫ |B1 - B2|^p dx)^(1/p) by cell sums of point values on g."""
    if p1.exponent.n != p2.exponent.n or g.n != p1.exponent.n:
        raise DimensionMismatch("profiles and grid must share the dimension")
    if not t > 0 or p < 1:
        raise ValueError("need t > 0 and p >= 1")
    diff = np.abs(p1.sample(g, t) - p2.sample(g, t))
    return float(np.dot(diff**p, g.volumes) ** (1.0 / p))


def lp_distance_exact(p1: BarenblattProfile, p2: BarenblattProfile, t: float, p: float = 1.0) -> float:
    """(∫ |B1 - B2|^p dx)^(1/p) by adaptive quadrature in r, split at the fronts."""
    n = p1.exponent.n
    if p2.exponent.n != n:
        raise DimensionMismatch("profiles must share the dimension")
    if not t > 0 or p < 1:
        raise ValueError("need t > 0 and p >= 1")
    f = lambda r: r ** (n - 1) * abs(float(p1.evaluate(r, t)) - float(p2.evaluate(r, t))) ** p
    fronts = sorted(x for x in (p1.support_radius(t), p2.support_radius(t)) if np.isfinite(x))
    scale = max(sqrt(q.C / q.k) * t ** (q.lam / n) for q in (p1, p2))
    edges = [0.0] + fronts
    if len(fronts) < 2:
        edges.append(max(edges[-1], scale))
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        if hi > lo:
            total += spi.quad(f, lo, hi, epsabs=0.0, epsrel=1e-12, limit=400)[0]
    if len(fronts) < 2:
        total += spi.quad(f, edges[-1], inf, epsabs=0.0, epsrel=1e-10, limit=400)[0]
    return float((n * unit_ball_volume(n) * total) ** (1.0 / p))


def radial_laplacian_of(fun, r, n: int, h: float):
    """Centred second difference of the radial Laplacian f'' + (n-1) f'/r."""
    fp, f0, fm = fun(r + h), fun(r), fun(r - h)
    lap = (fp - 2 * f0 + fm) / h**2
    if n > 1:
        lap = lap + (n - 1) * (fp - fm) / (2 * h * r)
    return lap


def residual_check(p: BarenblattProfile, g, t: float, margin_cells: int = 3) -> float:
    """max |u_t - Δu^m| over interior cells, by centred differences of the closed form.

    Cells within ``margin_cells`` of the free boundary (m > 1) and the cell
    nearest the origin are excluded; the PDE only holds classically away
    from the front.
    """
    if not t > 0:
        raise ValueError("need t > 0")
    h = g.spacing
    m, n = p.exponent.m, p.exponent.n
    r = g.distance()
    keep = r > h
    front = p.support_radius(t)
    if np.isfinite(front):
        keep &= r < front - margin_cells * h
    r = r[keep]
    if r.size == 0:
        return 0.0
    dt = h
    u_t = (p.evaluate(r, t + dt) - p.evaluate(r, t - dt)) / (2 * dt) if t > dt else (
        p.evaluate(r, t + dt) - p.evaluate(r, t)) / dt
    lap = radial_laplacian_of(lambda s: p.evaluate(s, t) ** m, r, n, h)
    return float(np.max(np.abs(u_t - lap)))


def field_residual(u_prev, u_now, u_next, dt: float, g, m: float) -> float:
    """max |u_t - Δu^m| of a sampled field sequence on a radial grid (interior cells)."""
    w = np.asarray(u_now, dtype=float) ** m
    h = g.spacing
    r = g.distance()
    lap = np.zeros_like(w)
    lap[1:-1] = (w[2:] - 2 * w[1:-1] + w[:-2]) / h**2
    if g.n > 1:
        lap[1:-1] += (g.n - 1) * (w[2:] - w[:-2]) / (2 * h * r[1:-1])
    ut = (np.asarray(u_next) - np.asarray(u_prev)) / (2 * dt)
    return float(np.max(np.abs(ut[1:-1] - lap[1:-1]), initial=0.0))
