"""Backward-Euler finite-volume solver for u_t = Δ(u^m).

Each step solves, cell by cell,

    V_i (u_i - u_i^old) - dt * [ sum_faces T_f (w_j - w_i) + T_b (g - w_i) ] = 0,
    w = max(u, 0)^m,

by a projected Newton iteration with a tridiagonal Jacobian. Boundary faces
carry the prescribed value g of u^m (not of u) exactly on the face. The
scheme is monotone, so discrete solutions are nonnegative and ordered data
give ordered solutions.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg, special

from .grid import DimensionMismatch, IntervalGrid, RadialGrid, integrate
from .params import Exponent


class NewtonDiverged(RuntimeError):
    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (at t = {time:.6g})")
        self.time = time


class NegativeOvershoot(RuntimeError):
    pass


class TruncationViolation(RuntimeError):
    pass


class TruncationWarning(UserWarning):
    pass


class _NotConverged(Exception):
    pass


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    newton_tol: float = 1e-10
    newton_max_iters: int = 60
    jacobian_floor: float = 1e-12
    positivity_clip_tol: float = 1e-9
    max_halvings: int = 4
    strict_truncation: bool = False

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.newton_tol > 0:
            raise ValueError(f"newton_tol must be positive, got {self.newton_tol}")
        if self.jacobian_floor < 0:
            raise ValueError("jacobian_floor must be nonnegative")
        if self.newton_max_iters < 1:
            raise ValueError("newton_max_iters must be at least 1")


def constant_boundary(value: float) -> Callable:
    """Boundary data g(x, t) = value, extended constantly into the domain."""
    return lambda x, t: np.full(np.shape(x), float(value))


@dataclass(frozen=True, eq=False)
class DirichletProblem:
    """u_t = Δu^m in Ω x (0, T], u^m = g on the boundary, u(., 0) = u0.

    ``boundary_g(x, t)`` must accept arrays of points; it is evaluated at the
    boundary faces by the solver and at cell centres by the energy estimate,
    which needs an extension of g into Ω.
    """

    exponent: Exponent
    grid: RadialGrid | IntervalGrid
    T: float
    boundary_g: Callable
    initial_u0: np.ndarray

    def __post_init__(self):
        u0 = np.asarray(self.initial_u0, dtype=float)
        if u0.shape != (self.grid.cells,):
            raise DimensionMismatch(f"u0 has shape {u0.shape}, grid has {self.grid.cells} cells")
        if np.any(u0 < 0):
            raise ValueError("initial data must be nonnegative")
        if not self.T > 0:
            raise ValueError("T must be positive")
        if self.grid.n != self.exponent.n:
            raise DimensionMismatch("grid dimension differs from the exponent's n")
        if np.any(self.boundary_values(0.0) < 0):
            raise ValueError("boundary data must be nonnegative")
        object.__setattr__(self, "initial_u0", u0)

    def boundary_values(self, t: float) -> np.ndarray:
        return np.asarray(self.boundary_g(self.grid.boundary_points, t), dtype=float)

    def with_exponent(self, exponent: Exponent) -> "DirichletProblem":
        return DirichletProblem(exponent, self.grid, self.T, self.boundary_g, self.initial_u0)


@dataclass(frozen=True, eq=False)
class CauchyProblem:
    """Whole-space problem with finite-mass initial trace, truncated to a ball.

    ``mu_approx`` is the finite-volume approximation of the initial measure,
    imposed at ``t_start``; the run ends at the absolute time ``T``. Zero
    Dirichlet data are used at r_max.
    """

    exponent: Exponent
    mass: float
    mu_approx: np.ndarray
    grid: RadialGrid
    T: float
    t_start: float = 0.0
    truncation_tol: float = 1e-10

    def __post_init__(self):
        mu = np.asarray(self.mu_approx, dtype=float)
        if mu.shape != (self.grid.cells,):
            raise DimensionMismatch("mu_approx does not match the grid")
        if np.any(mu < 0):
            raise ValueError("mu_approx must be nonnegative")
        if self.grid.n != self.exponent.n:
            raise DimensionMismatch("grid dimension differs from the exponent's n")
        if abs(integrate(self.grid, mu) - self.mass) > 1e-10 * max(1.0, self.mass):
            raise ValueError(
                f"mu_approx carries mass {integrate(self.grid, mu)!r}, expected {self.mass!r}"
            )
        if not self.T > self.t_start >= 0:
            raise ValueError("need 0 <= t_start < T")
        object.__setattr__(self, "mu_approx", mu)

    def as_dirichlet(self) -> DirichletProblem:
        return DirichletProblem(
            self.exponent, self.grid, self.T - self.t_start, constant_boundary(0.0), self.mu_approx
        )

    def with_exponent(self, exponent: Exponent) -> "CauchyProblem":
        return CauchyProblem(
            exponent, self.mass, self.mu_approx, self.grid, self.T, self.t_start, self.truncation_tol
        )


def barenblatt_cauchy(profile, grid: RadialGrid, t_start: float, T: float, **kw) -> CauchyProblem:
    """Initial data B(., t_start) as exact cell averages: the self-similar clock started late."""
    mu = profile.cell_averages(grid, t_start)
    return CauchyProblem(profile.exponent, integrate(grid, mu), mu, grid, T, t_start, **kw)


def indicator_cauchy(exponent: Exponent, grid: RadialGrid, mass: float, radius: float, T: float,
                     **kw) -> CauchyProblem:
    """Initial data mass * (normalised indicator of the cells with centre below ``radius``)."""
    inside = grid.centers < radius
    if not inside.any():
        inside[0] = True
    mu = np.where(inside, 1.0, 0.0)
    mu *= mass / integrate(grid, mu)
    return CauchyProblem(exponent, mass, mu, grid, T, 0.0, **kw)


def heat_kernel(r, t: float, n: int):
    r = np.asarray(r, dtype=float)
    return (4 * np.pi * t) ** (-n / 2) * np.exp(-(r**2) / (4 * t))


def heat_kernel_cell_averages(grid: RadialGrid, t: float, mass: float = 1.0) -> np.ndarray:
    """Exact cell averages of mass * heat kernel on a radial grid."""
    cum = special.gammainc(grid.n / 2, grid.faces**2 / (4 * t))
    return mass * np.diff(cum) / grid.volumes


@dataclass(frozen=True, eq=False)
class Trajectory:
    grid: RadialGrid | IntervalGrid
    exponent: Exponent
    times: np.ndarray
    fields: np.ndarray
    newton_iters: np.ndarray
    residual_norms: np.ndarray
    boundary_values: np.ndarray
    clip_count: int = 0
    truncation_flag: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.fields.shape != (len(self.times), self.grid.cells):
            raise DimensionMismatch("fields do not match times x cells")

    def __len__(self):
        return len(self.times)

    @classmethod
    def from_fields(cls, grid, times, fields, exponent=None, boundary_values=None):
        """Wrap externally produced levels (no solver metadata)."""
        times = np.asarray(times, dtype=float)
        fields = np.asarray(fields, dtype=float)
        nlev = len(times)
        if boundary_values is None:
            boundary_values = np.zeros((nlev, len(grid.boundary_cells)))
        return cls(grid, exponent, times, fields, np.zeros(nlev, dtype=int), np.zeros(nlev),
                   np.asarray(boundary_values, dtype=float))

    @property
    def final(self) -> np.ndarray:
        return self.fields[-1]

    def masses(self) -> np.ndarray:
        return self.fields @ self.grid.volumes

    def powers(self) -> np.ndarray:
        """u^m on every level."""
        return self.fields**self.exponent.m


@dataclass
class StepInfo:
    u: np.ndarray
    iterations: int
    residual: float
    history: list
    clipped: int
    substeps: int = 1


class _Operator:
    """Residual and Jacobian of one backward-Euler step on a fixed grid."""

    def __init__(self, grid, m: float, floor: float):
        self.m = m
        self.floor = floor
        self.V = np.asarray(grid.volumes, dtype=float)
        self.T = np.asarray(grid.face_trans, dtype=float)
        self.bc = np.asarray(grid.boundary_cells)
        self.Tb = np.asarray(grid.boundary_trans, dtype=float)
        self.diag_T = np.zeros_like(self.V)
        self.diag_T[:-1] += self.T
        self.diag_T[1:] += self.T
        np.add.at(self.diag_T, self.bc, self.Tb)

    def w(self, u):
        return np.maximum(u, 0.0) ** self.m

    def divergence(self, w, gb):
        """sum over faces of T (w_nb - w_i), with boundary faces at value gb."""
        flux = self.T * np.diff(w)  # flux from i+1 into i across face i+1/2
        div = np.zeros_like(w)
        div[:-1] += flux
        div[1:] -= flux
        np.add.at(div, self.bc, self.Tb * (gb - w[self.bc]))
        return div

    def residual(self, u, u_old, dt, gb):
        return self.V * (u - u_old) - dt * self.divergence(self.w(u), gb)

    def norm(self, F):
        return float(np.sqrt(np.sum(F**2 / self.V) / np.sum(self.V)))

    def jacobian(self, u, dt):
        if self.m == 1.0:
            D = np.ones_like(u)
        else:
            D = self.m * np.maximum(u, self.floor) ** (self.m - 1.0)
        ab = np.zeros((3, u.size))
        ab[0, 1:] = -dt * self.T * D[1:]
        ab[1] = self.V + dt * self.diag_T * D
        ab[2, :-1] = -dt * self.T * D[:-1]
        return ab


def _newton(op: _Operator, u_old, dt, gb, config: SolverConfig) -> StepInfo:
    u = np.maximum(u_old, 0.0)
    history = []
    last_raw = None
    for it in range(config.newton_max_iters + 1):
        F = op.residual(u, u_old, dt, gb)
        r = op.norm(F)
        history.append(r)
        if r <= config.newton_tol:
            clipped = 0
            if last_raw is not None:
                if last_raw.min() < -config.positivity_clip_tol:
                    raise NegativeOvershoot(f"converged Newton update reached {last_raw.min():.3e}")
                clipped = int(np.count_nonzero(last_raw < 0))
            return StepInfo(u, it, r, history, clipped)
        if it == config.newton_max_iters or not np.isfinite(r):
            break
        du = linalg.solve_banded((1, 1), op.jacobian(u, dt), -F, check_finite=False)
        # backtracking on the projected update
        alpha = 1.0
        while True:
            raw = u + alpha * du
            trial = np.maximum(raw, 0.0)
            if op.norm(op.residual(trial, u_old, dt, gb)) < r or alpha < 2.0**-10:
                break
            alpha *= 0.5
        last_raw = raw
        u = trial
    raise _NotConverged(history)


def _advance(op, u_old, t_old, dt, boundary, config: SolverConfig) -> StepInfo:
    """One step of size dt; on Newton failure retry with 2, 4, ... substeps."""
    for level in range(config.max_halvings + 1):
        k = 2**level
        h = dt / k
        u = u_old
        iters = 0
        clipped = 0
        try:
            for j in range(1, k + 1):
                info = _newton(op, u, h, boundary(t_old + j * h), config)
                u = info.u
                iters += info.iterations
                clipped += info.clipped
        except _NotConverged:
            continue
        info.u, info.iterations, info.clipped, info.substeps = u, iters, clipped, k
        return info
    raise NewtonDiverged(
        f"Newton did not converge after {config.max_halvings} step halvings", t_old + dt
    )


def step(u_old, t_old: float, problem, config: SolverConfig) -> np.ndarray:
    """One backward-Euler step of size config.dt; returns the new field."""
    return step_info(u_old, t_old, problem, config).u


def step_info(u_old, t_old: float, problem, config: SolverConfig, dt: float | None = None) -> StepInfo:
    if isinstance(problem, CauchyProblem):
        problem = problem.as_dirichlet()
    u_old = np.asarray(u_old, dtype=float)
    if np.any(u_old < 0):
        raise ValueError("u_old must be nonnegative")
    op = _Operator(problem.grid, problem.exponent.m, config.jacobian_floor)
    return _advance(op, u_old, t_old, config.dt if dt is None else dt, problem.boundary_values,
                    config)


def _time_levels(t0: float, t1: float, dt: float) -> np.ndarray:
    nsteps = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    times = t0 + dt * np.arange(nsteps + 1)
    times[-1] = t1
    return times


def _run(problem: DirichletProblem, config: SolverConfig, t0: float, u0, boundary,
         watch_cell=None, watch_tol=None):
    grid = problem.grid
    op = _Operator(grid, problem.exponent.m, config.jacobian_floor)
    times = _time_levels(t0, t0 + problem.T, config.dt)
    fields = np.empty((len(times), grid.cells))
    bvals = np.empty((len(times), len(grid.boundary_cells)))
    iters = np.zeros(len(times), dtype=int)
    res = np.zeros(len(times))
    fields[0] = u0
    bvals[0] = boundary(times[0])
    clips = 0
    flagged = False
    u = np.asarray(u0, dtype=float)
    for k in range(1, len(times)):
        try:
            info = _advance(op, u, times[k - 1], times[k] - times[k - 1], boundary, config)
        except NegativeOvershoot as exc:
            raise NegativeOvershoot(f"{exc} (at t = {times[k]:.6g})") from None
        u = info.u
        fields[k] = u
        bvals[k] = boundary(times[k])
        iters[k] = info.iterations
        res[k] = info.residual
        clips += info.clipped
        if watch_cell is not None and u[watch_cell] > watch_tol:
            flagged = True
    return Trajectory(grid, problem.exponent, times, fields, iters, res, bvals, clips, flagged)


def solve_dirichlet(problem: DirichletProblem, config: SolverConfig) -> Trajectory:
    return _run(problem, config, 0.0, problem.initial_u0, problem.boundary_values)


def solve_cauchy(problem: CauchyProblem, config: SolverConfig) -> Trajectory:
    """Run on the truncated ball; flags (and optionally rejects) mass reaching r_max."""
    dp = problem.as_dirichlet()
    traj = _run(
        dp, config, problem.t_start, problem.mu_approx,
        lambda t: np.zeros(len(problem.grid.boundary_cells)),
        watch_cell=problem.grid.cells - 1, watch_tol=problem.truncation_tol,
    )
    if traj.truncation_flag:
        msg = (f"solution exceeds {problem.truncation_tol:g} in the outermost cell "
               f"(m = {problem.exponent.m}); mass leaks through the truncation radius")
        if config.strict_truncation:
            raise TruncationViolation(msg)
        warnings.warn(msg, TruncationWarning, stacklevel=2)
    return traj
