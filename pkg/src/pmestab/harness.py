"""Exponent sweeps m_i = m + δ_i with fixed data, and empirical rate fits."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .grid import IntervalGrid, RadialGrid, face_gradients
from .params import derive_constants, make_exponent
from .solver import (CauchyProblem, DirichletProblem, NegativeOvershoot, NewtonDiverged,
                     SolverConfig, solve_cauchy, solve_dirichlet)


class InsufficientData(ValueError):
    pass


THREADS_ENV = "PMESTAB_THREADS"

SOLVER_ERRORS = (NewtonDiverged, NegativeOvershoot, FloatingPointError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class SweepSpec:
    target_m: float
    deltas: tuple
    problem_template: object
    config: SolverConfig
    norms: tuple = ((2.0, 2.0),)  # (q, s): L^q error of u, L^s error of u^m
    S_radius: float | None = None  # Cauchy window
    two_resolutions: bool = True
    fine_reference: bool = False
    agreement: float = 0.2
    require_m_at_least_one: bool = False

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        object.__setattr__(self, "norms", tuple((float(q), float(s)) for q, s in self.norms))
        n = self.problem_template.grid.n
        for d in self.deltas:
            make_exponent(self.target_m + d, n)  # raises SubcriticalExponent
            if self.require_m_at_least_one and self.target_m + d < 1:
                raise ValueError(f"m_i = {self.target_m + d} < 1 in a rate experiment")
        if not 0 < self.agreement:
            raise ValueError("agreement tolerance must be positive")


@dataclass(frozen=True)
class SweepRow:
    delta: float
    m_i: float
    q: float
    s: float
    error_Lq: float
    error_power_Ls: float
    weak_defects: tuple
    resolution_tag: str
    failed: bool = False
    message: str = ""

    @property
    def weak_defect_max(self) -> float:
        return max(self.weak_defects) if self.weak_defects else float("nan")


@dataclass(frozen=True)
class SweepResult:
    rows: tuple
    accepted: dict = field(default_factory=dict)  # (delta, q) -> bool
    order: float = float("nan")
    constant: float = float("nan")
    fit_residual: float = float("nan")

    def table(self, tag: str = "base", q: float | None = None):
        out = [r for r in self.rows if r.resolution_tag == tag and (q is None or r.q == q)]
        return sorted(out, key=lambda r: (abs(r.delta), r.delta))

    def errors(self, tag: str = "base", q: float | None = None, accepted_only: bool = False):
        """(deltas, L^q errors) of the successful rows."""
        rows = [r for r in self.table(tag, q) if not r.failed]
        if accepted_only:
            rows = [r for r in rows if self.accepted.get((r.delta, r.q), False)]
        return np.array([r.delta for r in rows]), np.array([r.error_Lq for r in rows])


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def test_fields(grid, radius: float | None = None) -> np.ndarray:
    """Five smooth test fields at the cell centres, vanishing on the boundary of the window.

    Polynomial multiples of the first eigenfunction; none of them is odd
    about the centre, so symmetric data do not make a pairing vanish.
    """
    if isinstance(grid, IntervalGrid):
        xi = (grid.centers - grid.a) / grid.measure
        return np.array([np.sin(np.pi * xi) * xi**j for j in range(5)])
    R = grid.r_max if radius is None else radius
    s = grid.distance() / R
    return np.array([np.where(s < 1, np.cos(0.5 * np.pi * s) * s ** (2 * j), 0.0) for j in range(5)])


def _spacetime_norm(diff, V, tw, p):
    return float((tw @ (np.abs(diff) ** p @ V)) ** (1 / p))


def compare(traj, ref, norms, window=None, fields=None):
    """Errors (q, s, ‖u_i - u‖_q, ‖u_i^{m_i} - u^m‖_s) for each norm pair and the weak defects."""
    if traj.fields.shape != ref.fields.shape:
        raise ValueError("trajectories are not on the same space-time grid")
    g = ref.grid
    V = g.volumes if window is None else np.where(window, g.volumes, 0.0)
    tw = np.zeros(len(ref.times))
    tw[1:] = np.diff(ref.times)
    du = traj.fields - ref.fields
    dw = traj.powers() - ref.powers()
    out = [(q, s, _spacetime_norm(du, V, tw, q), _spacetime_norm(dw, V, tw, s)) for q, s in norms]
    if fields is None:
        fields = test_fields(g)
    zero_b = np.zeros(len(g.boundary_cells))
    defects = []
    for phi in fields:
        gphi, weight = face_gradients(g, phi, zero_b)
        pair = 0.0
        for k in range(1, len(tw)):
            # boundary data are shared, so the boundary face of the difference vanishes
            gdw, _ = face_gradients(g, dw[k], zero_b)
            pair += tw[k] * float(np.sum(weight * gdw * gphi))
        defects.append(abs(pair))
    return out, tuple(defects)


def _validate_dirichlet_norms(spec):
    c = derive_constants(make_exponent(spec.target_m, spec.problem_template.grid.n))
    m = spec.target_m
    s_max = 2 * min(c.kappa_sobolev, c.kappa_stability)
    for q, s in spec.norms:
        # q = 1 + m is the quantitative-rate norm, admissible when every m_i >= 1
        endpoint_ok = spec.require_m_at_least_one and q == 1 + m
        if not (1 <= q < 1 + m or endpoint_ok):
            raise ValueError(f"q = {q} outside [1, 1 + m)")
        if not 1 <= s < s_max:
            raise ValueError(f"s = {s} outside [1, {s_max})")


def _validate_cauchy_norms(spec):
    m, n = spec.target_m, spec.problem_template.grid.n
    for q, s in spec.norms:
        if not 1 <= q < m + 2 / n:
            raise ValueError(f"q = {q} outside [1, m + 2/n)")
        if not 1 <= s < 1 + 2 / (m * n):
            raise ValueError(f"s = {s} outside [1, 1 + 2/(mn))")
    if spec.S_radius is None or not 0 < spec.S_radius < spec.problem_template.grid.r_max:
        raise ValueError("S_radius must lie inside the truncated domain")


def _refine_dirichlet(problem: DirichletProblem, config: SolverConfig, u0_fn):
    grid = problem.grid.refined(2)
    u0 = u0_fn(grid) if u0_fn is not None else np.repeat(problem.initial_u0, 2)
    return replace(problem, grid=grid, initial_u0=u0), replace(config, dt=config.dt / 2)


def _refine_cauchy(problem: CauchyProblem, config: SolverConfig, u0_fn):
    grid = problem.grid.refined(2)
    if u0_fn is not None:
        mu = u0_fn(grid)
    else:
        # cell averages on the refined cells reproduce the coarse cell masses only
        # if the coarse field is piecewise constant, which it is
        mu = np.repeat(problem.mu_approx, 2)
    return replace(problem, grid=grid, mu_approx=mu), replace(config, dt=config.dt / 2)


def _solve_all(problems, config, solve, workers):
    def one(p):
        try:
            return solve(p, config), ""
        except SOLVER_ERRORS as exc:
            return None, f"{type(exc).__name__}: {exc}"
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, problems))
    return [one(p) for p in problems]


def _sweep_at(spec, problem, config, tag, solve, window_fn, fields_fn, workers, ref_traj=None):
    n = problem.grid.n
    if ref_traj is None:
        ref_traj = solve(problem.with_exponent(make_exponent(spec.target_m, n)), config)
    probs = [problem.with_exponent(make_exponent(spec.target_m + d, n)) for d in spec.deltas]
    runs = _solve_all(probs, config, solve, workers)
    window = window_fn(problem.grid)
    fields = fields_fn(problem.grid)
    rows = []
    for d, (traj, msg) in zip(spec.deltas, runs):
        m_i = spec.target_m + d
        if traj is None:
            rows += [SweepRow(d, m_i, q, s, np.nan, np.nan, (), tag, True, msg) for q, s in spec.norms]
            continue
        errs, defects = compare(traj, ref_traj, spec.norms, window, fields)
        rows += [SweepRow(d, m_i, q, s, eq, es, defects, tag) for q, s, eq, es in errs]
    return rows


def _run_sweep(spec, solve, refine, window_fn, fields_fn, u0_fn, workers):
    workers = default_workers() if workers is None else workers
    problem, config = spec.problem_template, spec.config
    rows = _sweep_at(spec, problem, config, "base", solve, window_fn, fields_fn, workers)
    accepted = {}
    if spec.two_resolutions:
        fp, fc = refine(problem, config, u0_fn)
        fine = _sweep_at(spec, fp, fc, "fine", solve, window_fn, fields_fn, workers)
        lookup = {(r.delta, r.q): r for r in fine}
        for r in rows:
            f = lookup[(r.delta, r.q)]
            if r.failed or f.failed:
                accepted[(r.delta, r.q)] = False
            elif f.error_Lq == 0:
                accepted[(r.delta, r.q)] = r.error_Lq == 0
            else:
                accepted[(r.delta, r.q)] = abs(r.error_Lq - f.error_Lq) <= spec.agreement * f.error_Lq
        rows += fine
    else:
        accepted = {(r.delta, r.q): not r.failed for r in rows}
    if spec.fine_reference:
        # reference at doubled resolution, restricted to the base space-time grid
        fp, fc = refine(problem, config, u0_fn)
        fine_ref = solve(fp.with_exponent(make_exponent(spec.target_m, problem.grid.n)), fc)
        coarse = _restrict(fine_ref, problem.grid)
        rows += _sweep_at(spec, problem, config, "fine_reference", solve, window_fn, fields_fn,
                          workers, ref_traj=coarse)
    result = SweepResult(tuple(sorted(rows, key=lambda r: (r.resolution_tag != "base", r.resolution_tag,
                                                           abs(r.delta), r.delta, r.q))), accepted)
    q0 = spec.norms[0][0]
    try:
        order, const, resid = _fit(*result.errors("base", q0, accepted_only=True), reference_exponent=None)
        result = replace(result, order=order, constant=const, fit_residual=resid)
    except InsufficientData:
        pass
    return result


def _restrict(traj, grid):
    """Average a doubled-resolution trajectory onto ``grid`` at every other level."""
    from .solver import Trajectory
    f = traj.fields[::2]
    V = traj.grid.volumes
    fields = (f[:, 0::2] * V[0::2] + f[:, 1::2] * V[1::2]) / (V[0::2] + V[1::2])
    return Trajectory.from_fields(grid, traj.times[::2], fields, traj.exponent, traj.boundary_values[::2])


def run_dirichlet_sweep(spec: SweepSpec, workers: int | None = None, u0_fn=None) -> SweepResult:
    """Reference and perturbed runs on identical grids; errors in discrete space-time norms.

    ``u0_fn(grid)`` resamples the initial datum for the refined resolution;
    without it the coarse cell values are repeated.
    """
    if not isinstance(spec.problem_template, DirichletProblem):
        raise TypeError("run_dirichlet_sweep needs a DirichletProblem template")
    _validate_dirichlet_norms(spec)
    return _run_sweep(spec, solve_dirichlet, _refine_dirichlet, lambda g: None, test_fields, u0_fn, workers)


def run_cauchy_sweep(spec: SweepSpec, workers: int | None = None, u0_fn=None) -> SweepResult:
    """As :func:`run_dirichlet_sweep`, with norms over the window |x| < S_radius."""
    if not isinstance(spec.problem_template, CauchyProblem):
        raise TypeError("run_cauchy_sweep needs a CauchyProblem template")
    if not isinstance(spec.problem_template.grid, RadialGrid):
        raise TypeError("Cauchy problems live on radial grids")
    _validate_cauchy_norms(spec)
    S = spec.S_radius
    window_fn = lambda g: g.distance() < S
    fields_fn = lambda g: test_fields(g, S)
    return _run_sweep(spec, solve_cauchy, _refine_cauchy, window_fn, fields_fn, u0_fn, workers)


def _fit(deltas, errors, reference_exponent=None):
    deltas = np.abs(np.asarray(deltas, dtype=float))
    errors = np.asarray(errors, dtype=float)
    keep = (deltas > 0) & np.isfinite(errors) & (errors > 0)
    if keep.sum() < 3:
        raise InsufficientData(f"need at least 3 nonzero deltas, have {int(keep.sum())}")
    x, y = np.log(deltas[keep]), np.log(errors[keep])
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    order = float(coef[0])
    p = order if reference_exponent is None else reference_exponent
    const = float(np.max(errors[keep] / deltas[keep] ** p))
    resid = float(np.sqrt(res[0] / keep.sum())) if len(res) else 0.0
    return order, const, resid


def fit_power_law(deltas, errors, reference_exponent: float):
    """(least-squares order, max error/|δ|^reference_exponent)."""
    order, const, _ = _fit(deltas, errors, reference_exponent)
    return order, const


def fit_rate(result: SweepResult, reference_exponent: float, q: float | None = None,
             tag: str = "base", accepted_only: bool = True):
    """Fitted order and realized constant of a sweep's L^q errors."""
    if q is None and result.rows:
        q = result.table(tag)[0].q if result.table(tag) else None
    only = accepted_only and bool(result.accepted)
    return fit_power_law(*result.errors(tag, q, accepted_only=only), reference_exponent)


def realized_constants(result: SweepResult, reference_exponent: float, q: float | None = None,
                       tag: str = "base") -> dict:
    """error/|δ|^p for every successful nonzero delta."""
    d, e = result.errors(tag, q)
    return {float(a): float(b / abs(a) ** reference_exponent) for a, b in zip(d, e) if a != 0}


def grid_consistency(result: SweepResult, q: float | None = None) -> dict:
    """Per delta: (|e_base - e_fine|, decrease of e_fine from 2|δ| to |δ|), where available."""
    fine = {r.delta: r.error_Lq for r in result.table("fine", q) if not r.failed}
    base = {r.delta: r.error_Lq for r in result.table("base", q) if not r.failed}
    out = {}
    for d, ef in fine.items():
        if d == 0 or d not in base or 2 * d not in fine:
            continue
        out[d] = (abs(base[d] - ef), fine[2 * d] - ef)
    return out
