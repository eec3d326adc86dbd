"""Both sides of the a-priori estimates, evaluated on computed trajectories.

All integrals are cell sums against the finite-volume measures; gradients
are face differences (boundary faces use the prescribed values of u^m);
time integrals use the backward-Euler weights dt_k at levels k >= 1, and
an essential supremum in time is the maximum over stored levels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import inf, log

import numpy as np
from scipy import integrate as spi

from .grid import IntervalGrid, face_gradients, unit_ball_volume
from .params import derive_constants
from .solver import DirichletProblem, SolverConfig, _run


class ZeroData(ValueError):
    """lhs > 0 against a vanishing right-hand side: a discretisation bug."""


class CylinderOutOfRange(ValueError):
    pass


class ExponentOutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class EstimateReport:
    name: str
    lhs: float
    rhs_without_constant: float
    realized_constant: float
    satisfied_with: float
    stated_constant: float | None = None
    metadata: dict = field(default_factory=dict)

    @property
    def holds_with_stated(self) -> bool | None:
        if self.stated_constant is None:
            return None
        return self.lhs <= self.stated_constant * self.rhs_without_constant * (1 + 1e-12)


def make_report(name, lhs, rhs, stated_constant=None, **metadata) -> EstimateReport:
    lhs, rhs = float(lhs), float(rhs)
    if rhs <= 0:
        if lhs > 0:
            raise ZeroData(f"{name}: lhs = {lhs:g} but the data term vanishes")
        realized = 0.0
    else:
        realized = lhs / rhs
    satisfied = realized
    if rhs > 0 and lhs > satisfied * rhs:
        satisfied = np.nextafter(realized, inf)
    return EstimateReport(name, lhs, rhs, realized, float(satisfied), stated_constant, metadata)


def time_weights(times) -> np.ndarray:
    """Backward-Euler quadrature weights: dt_k on level k >= 1, 0 on level 0."""
    w = np.zeros(len(times))
    w[1:] = np.diff(times)
    return w


def dirichlet_energy(grid, w, boundary_values=None) -> float:
    grad, weight = face_gradients(grid, w, boundary_values)
    return float(np.sum(weight * grad**2))


def spacetime_energy(traj, boundary: bool = True) -> float:
    """∫∫ |∇u^m|^2 over the trajectory."""
    W = traj.powers()
    tw = time_weights(traj.times)
    return float(sum(
        tw[k] * dirichlet_energy(traj.grid, W[k], traj.boundary_values[k] if boundary else None)
        for k in range(1, len(tw))
    ))


def energy_estimate_report(traj, problem: DirichletProblem) -> EstimateReport:
    grid, m = traj.grid, traj.exponent.m
    V = grid.volumes
    U = traj.fields
    lhs = float((U ** (m + 1) @ V).max()) + spacetime_energy(traj)
    tw = time_weights(traj.times)
    x = grid.centers
    G = np.array([problem.boundary_g(x, t) for t in traj.times], dtype=float)
    Gb = traj.boundary_values
    grad_g = sum(tw[k] * dirichlet_energy(grid, G[k], Gb[k]) for k in range(1, len(tw)))
    if len(traj.times) > 1:
        dG = np.gradient(G, traj.times, axis=0)
    else:
        dG = np.zeros_like(G)
    dgdt = float(tw @ (np.abs(dG) ** (1 + 1 / m) @ V))
    init = float(problem.initial_u0 ** (m + 1) @ V)
    rhs = grad_g + dgdt + init
    return make_report("energy", lhs, rhs, m=m, grad_g=grad_g, dgdt=dgdt, initial=init)


def _ball(grid, radius, center):
    if isinstance(grid, IntervalGrid):
        if center - radius < grid.a - 1e-12 or center + radius > grid.b + 1e-12:
            raise CylinderOutOfRange(f"ball of radius {radius} about {center} leaves [{grid.a}, {grid.b}]")
    elif center != 0 or radius > grid.r_max + 1e-12:
        raise CylinderOutOfRange("radial grids only admit centred balls inside r_max")
    return grid.distance(center) <= radius


def local_sup_bound_report(traj, rho: float, t0: float, center: float = 0.0) -> EstimateReport:
    """sup over B_(rho/2) x [t0 - rho^2/2, t0] against (mean over B_rho x [t0 - rho^2, t0])^(2/λ) + 1."""
    t = np.asarray(traj.times)
    eps = 1e-12 * max(1.0, abs(t[-1]))
    if t0 - rho**2 < t[0] - eps or t0 > t[-1] + eps:
        raise CylinderOutOfRange(f"[{t0 - rho**2}, {t0}] is not inside [{t[0]}, {t[-1]}]")
    full_x = _ball(traj.grid, rho, center)
    half_x = traj.grid.distance(center) <= rho / 2
    full_t = (t >= t0 - rho**2 - eps) & (t <= t0 + eps)
    half_t = (t >= t0 - rho**2 / 2 - eps) & (t <= t0 + eps)
    if not (full_x.any() and half_x.any() and half_t.any()):
        raise CylinderOutOfRange("cylinder contains no cells or levels")
    U = traj.fields
    lhs = float(U[np.ix_(half_t, half_x)].max())
    V = traj.grid.volumes[full_x]
    block = U[np.ix_(full_t, full_x)]
    mean = float((block @ V).sum() / (V.sum() * full_t.sum()))
    lam = derive_constants(traj.exponent).smoothing_lambda
    rhs = mean ** (2 / lam) + 1
    return make_report("local_sup", lhs, rhs, rho=rho, t0=t0, mean=mean, smoothing_lambda=lam)


def _slope(x, y) -> float:
    return float(np.polyfit(x, y, 1)[0])


def cauchy_estimates_report(traj, problem, S_radius: float, q: float):
    """Reports for the L1 bound, the smoothing effect and the L^(mq) bound up to t = 0."""
    e = traj.exponent
    m, n = e.m, e.n
    if q >= 1 + 2 / (m * n) or q < 1:
        raise ExponentOutOfRange(f"q = {q} outside [1, 1 + 2/(mn)) = [1, {1 + 2 / (m * n)})")
    lam = derive_constants(e).smoothing_lambda
    mass = problem.mass
    V = traj.grid.volumes
    U = traj.fields
    t = np.asarray(traj.times)

    l1 = U @ V
    r1 = make_report("cauchy_l1", l1.max(), mass, stated_constant=1.0, mass=mass)

    pos = t > 0
    sup = U.max(axis=1)
    slope = _slope(np.log(t[pos]), np.log(sup[pos]))
    scaled = sup[pos] * t[pos] ** (n / lam)
    r2 = make_report("cauchy_smoothing", scaled.max(), mass ** (2 / lam),
                     fitted_slope=slope, expected_slope=-n / lam)

    inside = traj.grid.distance() < S_radius
    tw = time_weights(t)
    lq = float(tw @ (U[:, inside] ** (m * q) @ V[inside]))
    T = t[-1]
    rhs = mass ** (2 / lam * (m * q - 1) + 1) * T ** (-n / lam * (m * q - 1) + 1)
    r3 = make_report("cauchy_lq", lq, rhs, q=q, S_radius=S_radius, T=T,
                     time_exponent=-n / lam * (m * q - 1) + 1)
    return r1, r2, r3


def barenblatt_power_integral(profile, S_radius: float, power: float, t: float) -> float:
    """∫_{|x| < S} B(x, t)^power dx by adaptive quadrature in the similarity variable."""
    slope, log_j = _log_power_integral(profile, S_radius, power, np.log(t))
    return float(np.exp(slope * np.log(t) + log_j))


def _log_power_integral(profile, S_radius, power, log_t):
    # B(x, t) = t^-lam F(|x| t^(-lam/n)), so the integral is
    # t^(lam (1 - power)) ∫_{|xi| < S t^(-lam/n)} F^power dxi; returns the
    # exponent of t and the log of the xi-integral
    n, lam = profile.exponent.n, profile.lam
    with np.errstate(over="ignore"):
        xi_max = S_radius * np.exp(-lam / n * log_t)
    scale = np.sqrt(profile.C / profile.k)
    f = lambda s: s ** (n - 1) * float(profile.profile(s)) ** power
    val, _ = spi.quad(f, 0.0, min(xi_max, scale), epsabs=0.0, epsrel=1e-12, limit=200)
    if profile.exponent.m < 1 and xi_max > scale:
        # power tail, in the variable log(s / scale)
        g = lambda v: f(scale * np.exp(v)) * scale * np.exp(v)
        v_max = min(np.log(xi_max / scale), 60.0)
        tail, _ = spi.quad(g, 0.0, v_max, epsabs=0.0, epsrel=1e-10, limit=400)
        val += tail
    return lam * (1 - power), np.log(n * unit_ball_volume(n) * val)


def barenblatt_lq_integral(profile, S_radius: float, q: float, T: float) -> float:
    """∫_0^T ∫_S B^(mq) dx dt, with t = T e^(-y) to resolve the singularity at t = 0."""
    p = profile.exponent.m * q
    lT = np.log(T)

    def f(y):
        slope, log_j = _log_power_integral(profile, S_radius, p, lT - y)
        return np.exp((slope + 1) * (lT - y) + log_j)
    val, _ = spi.quad(f, 0.0, inf, epsabs=0.0, epsrel=1e-10, limit=400)
    return val


def barenblatt_lq_bands(profile, S_radius: float, q: float, T: float, bands: int) -> np.ndarray:
    """Contributions of the dyadic time bands (T 2^-(j+1), T 2^-j], j = 0 .. bands-1."""
    p = profile.exponent.m * q
    out = np.empty(bands)
    for j in range(bands):
        hi, lo = T * 2.0**-j, T * 2.0 ** -(j + 1)
        g = lambda s: barenblatt_power_integral(profile, S_radius, p, s)
        out[j], _ = spi.quad(g, lo, hi, epsabs=0.0, epsrel=1e-11, limit=200)
    return out


def _subgrid(grid, i0, i1):
    if isinstance(grid, IntervalGrid):
        return IntervalGrid(grid.faces[i0], grid.faces[i1], i1 - i0)
    if i0 != 0:
        raise ValueError("radial sub-domains must contain the origin")
    from .grid import RadialGrid
    return RadialGrid(grid.n, grid.faces[i1], i1)


def oleinik_defect(u, delta: float, problem: DirichletProblem, config: SolverConfig,
                   cells=None, levels=None) -> EstimateReport:
    """Pairing ∫∫ (u_δ - u)(u_δ^m - u^m) over U x (t1, t2] for the lifted solution u_δ.

    u_δ solves the equation in U x (t1, t2] with u_δ^m = u^m + δ^m on ∂U and
    u_δ(t1) = u(t1) + δ. ``cells`` = (i0, i1) selects U (defaults to the
    middle half of an interval, or the inner half of a ball), ``levels`` =
    (k1, k2) the time window (defaults to the last three quarters).
    """
    if not 0 < delta < 1:
        raise ValueError("need 0 < delta < 1")
    grid = u.grid
    m = u.exponent.m
    N = grid.cells
    if cells is None:
        cells = (N // 4, N - N // 4) if isinstance(grid, IntervalGrid) else (0, N // 2)
    if levels is None:
        levels = (len(u.times) // 4, len(u.times) - 1)
    i0, i1 = cells
    k1, k2 = levels
    sub = _subgrid(grid, i0, i1)
    W = u.powers()
    # u^m on the faces of U: mean of the two neighbouring cells, or the
    # prescribed boundary value where ∂U meets ∂Ω
    faces = []
    if isinstance(grid, IntervalGrid):
        faces.append(W[:, i0 - 1:i0 + 1].mean(axis=1) if i0 > 0 else u.boundary_values[:, 0])
    faces.append(W[:, i1 - 1:i1 + 1].mean(axis=1) if i1 < N else u.boundary_values[:, -1])
    faces = np.stack(faces, axis=1) + delta**m
    times = u.times
    def lifted_g(x, t, faces=faces):
        return np.array([np.interp(t, times, faces[:, j]) for j in range(faces.shape[1])])
    t1, t2 = times[k1], times[k2]
    u_init = u.fields[k1, i0:i1] + delta
    sub_problem = DirichletProblem(u.exponent, sub, t2 - t1, lifted_g, u_init)
    dt = float(np.diff(times[k1:k2 + 1]).max())
    cfg = SolverConfig(dt, config.newton_tol, config.newton_max_iters, config.jacobian_floor,
                       config.positivity_clip_tol, config.max_halvings)
    lifted = _run(sub_problem, cfg, t1, u_init, lambda t: lifted_g(None, t))
    base = u.fields[k1:k2 + 1, i0:i1]
    if lifted.fields.shape != base.shape:
        raise ValueError("lifted run did not reproduce the trajectory's time levels")
    Ud = lifted.fields
    pairing = (Ud - base) * (Ud**m - base**m)
    tw = time_weights(times[k1:k2 + 1])
    lhs = float(tw @ (pairing @ sub.volumes))
    M = max(1.0, float(base.max()))
    cyl = sub.measure if isinstance(sub, IntervalGrid) else float(sub.volumes.sum())
    cyl *= t2 - t1
    stated = 2 ** (m + 1) * (M**m + M + 1) * cyl
    return make_report("oleinik", lhs, delta + delta**m, stated_constant=stated,
                       delta=delta, M=M, cylinder_measure=cyl, lifted_min=float(Ud.min()))


def sobolev_report(traj) -> EstimateReport:
    """∫∫ |u^m|^(2κ) against ∫∫ |∇u^m|^2 (sup_t ∫ u^(m+1))^(2/n), κ = 1 + 1/n + 1/(mn)."""
    e = traj.exponent
    kappa = derive_constants(e).kappa_sobolev
    V = traj.grid.volumes
    W = traj.powers()
    tw = time_weights(traj.times)
    lhs = float(tw @ (W ** (2 * kappa) @ V))
    sup = float((traj.fields ** (e.m + 1) @ V).max())
    rhs = spacetime_energy(traj) * sup ** (2 / e.n)
    return make_report("sobolev", lhs, rhs, kappa=kappa)


def quartic_cutoff(d, R):
    """η = ((1 - (d/R)^2)_+)^2 and its radial derivative."""
    s = np.clip(1 - (np.asarray(d, dtype=float) / R) ** 2, 0.0, None)
    return s**2, -4 * np.asarray(d) / R**2 * s


def caccioppoli_report(traj, radius: float | None = None, center: float = 0.0) -> EstimateReport:
    """∫∫ η^2 |∇u^m|^2 against 2 M^(m+1) ∫ η^2 + 16 M^(2m) ∫∫ |∇η|^2, η a quartic cutoff."""
    grid = traj.grid
    m = traj.exponent.m
    if radius is None:
        radius = 0.9 * (0.5 * grid.measure if isinstance(grid, IntervalGrid) else grid.r_max)
        if isinstance(grid, IntervalGrid):
            center = 0.5 * (grid.a + grid.b)
    _ball(grid, radius, center)
    faces = grid.faces[1:-1]
    dist = np.abs(faces - center) if isinstance(grid, IntervalGrid) else faces
    eta_f, deta_f = quartic_cutoff(dist, radius)
    eta_c, _ = quartic_cutoff(grid.distance(center), radius)
    W = traj.powers()
    tw = time_weights(traj.times)
    h = grid.spacing
    weight = grid.face_trans * h**2
    grads = np.diff(W, axis=1) / h
    lhs = float(tw @ ((grads**2 * eta_f**2) @ weight))
    M = max(1.0, float(traj.fields.max()))
    span = float(traj.times[-1] - traj.times[0])
    rhs = 2 * M ** (m + 1) * float(eta_c**2 @ grid.volumes) + 16 * M ** (2 * m) * span * float(deta_f**2 @ weight)
    return make_report("caccioppoli", lhs, rhs, stated_constant=1.0, M=M, radius=radius)


def fitted_order(x, y) -> float:
    """Least-squares slope of log y against log x."""
    return _slope(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)))
