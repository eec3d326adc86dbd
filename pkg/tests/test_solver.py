import warnings

import numpy as np
import pytest

from conftest import bump, bump_problem
from pmestab.barenblatt import normalize
from pmestab.grid import DimensionMismatch, make_interval, make_radial
from pmestab.params import make_exponent
from pmestab.solver import (CauchyProblem, DirichletProblem, NewtonDiverged, SolverConfig, TruncationViolation,
                            TruncationWarning, barenblatt_cauchy, constant_boundary, heat_kernel_cell_averages,
                            indicator_cauchy, solve_cauchy, solve_dirichlet, step, step_info)


@pytest.mark.parametrize("m", [0.7, 1.0, 2.0])
@pytest.mark.parametrize("grid", [make_interval(-1, 1, 16), make_radial(2, 1.0, 16)])
def test_constant_is_fixed_point(m, grid):
    c = 1.7
    p = DirichletProblem(make_exponent(m, grid.n), grid, 1.0, constant_boundary(c**m), np.full(16, c))
    u = step(p.initial_u0, 0.0, p, SolverConfig(0.1))
    np.testing.assert_allclose(u, c, rtol=1e-12)


def _heat_matrix(grid, dt):
    # independent dense assembly of I - dt * L with face-ghost Dirichlet data
    N, h = grid.cells, grid.spacing
    A = np.eye(N)
    for i in range(N - 1):
        c = dt / h**2
        A[i, i] += c
        A[i + 1, i + 1] += c
        A[i, i + 1] -= c
        A[i + 1, i] -= c
    for i in (0, N - 1):
        A[i, i] += dt / (h * h / 2)
    return A


def test_heat_step_matches_linear_solve():
    g = make_interval(0.0, 1.0, 40)
    rng = np.random.default_rng(0)
    u0 = rng.random(40)
    gb = 0.3
    p = DirichletProblem(make_exponent(1.0, 1), g, 1.0, constant_boundary(gb), u0)
    dt = 0.01
    u = step(u0, 0.0, p, SolverConfig(dt, newton_tol=1e-13))
    rhs = u0.copy()
    rhs[[0, -1]] += dt * gb / (g.spacing * g.spacing / 2)
    np.testing.assert_allclose(u, np.linalg.solve(_heat_matrix(g, dt), rhs), rtol=1e-11, atol=1e-13)


def test_barenblatt_step_error_first_order():
    p = normalize(make_exponent(2.0, 1))
    errs = []
    for cells, dt in ((256, 1 / 256), (512, 1 / 1024)):
        g = make_radial(1, 2.5, cells)
        prob = barenblatt_cauchy(p, g, 0.5, 0.5 + 1 / 16)
        tr = solve_cauchy(prob, SolverConfig(dt))
        errs.append(np.abs(tr.final - p.cell_averages(g, tr.times[-1])) @ g.volumes)
    assert 2.5 < errs[0] / errs[1] < 5.5


def test_zero_and_constant_trajectories():
    z = bump_problem(2.0)
    z = DirichletProblem(z.exponent, z.grid, 0.25, constant_boundary(0.0), np.zeros(z.grid.cells))
    assert np.all(solve_dirichlet(z, SolverConfig(1 / 64)).fields == 0)
    one = DirichletProblem(z.exponent, z.grid, 0.25, constant_boundary(1.0), np.ones(z.grid.cells))
    np.testing.assert_allclose(solve_dirichlet(one, SolverConfig(1 / 64)).fields, 1.0, rtol=1e-13)


def test_mass_balance_with_outflow():
    p = bump_problem(2.0, cells=64, T=2.0, g=0.0)
    tr = solve_dirichlet(p, SolverConfig(1 / 64))
    mass = tr.masses()
    assert np.all(np.diff(mass) <= 1e-13)
    # mass lost equals the boundary flux: sum over steps of dt * trans * (u^m - g) on both ends
    w = tr.powers()
    flux = sum((tr.times[k] - tr.times[k - 1]) * (w[k, 0] + w[k, -1]) * p.grid.boundary_trans[0]
               for k in range(1, len(tr.times)))
    assert mass[0] - mass[-1] == pytest.approx(flux, rel=1e-8)


def test_cauchy_mass_conserved_before_exit():
    p = normalize(make_exponent(2.0, 1))
    prob = barenblatt_cauchy(p, make_radial(1, 4.0, 256), 0.5, 2.0)
    tr = solve_cauchy(prob, SolverConfig(1 / 128))
    np.testing.assert_allclose(tr.masses(), prob.mass, rtol=1e-10)
    assert not tr.truncation_flag


def test_heat_kernel_oracle():
    errs = []
    for cells, dt in ((256, 1 / 128), (512, 1 / 256)):
        g = make_radial(3, 8.0, cells)
        mu = heat_kernel_cell_averages(g, 0.1)
        prob = CauchyProblem(make_exponent(1.0, 3), float(mu @ g.volumes), mu, g, 0.6, 0.1)
        tr = solve_cauchy(prob, SolverConfig(dt))
        errs.append(np.abs(tr.final - heat_kernel_cell_averages(g, 0.6)) @ g.volumes)
    assert errs[0] < 0.01 and 1.6 < errs[0] / errs[1] < 2.6


def test_fde_truncation_flagged():
    prob = indicator_cauchy(make_exponent(0.5, 3), make_radial(3, 3.0, 64), 1.0, 0.5, 0.2)
    with pytest.warns(TruncationWarning):
        tr = solve_cauchy(prob, SolverConfig(1 / 64))
    assert tr.truncation_flag
    with pytest.raises(TruncationViolation):
        solve_cauchy(prob, SolverConfig(1 / 64, strict_truncation=True))


def test_newton_failure_reports_time():
    p = bump_problem(3.0, cells=32)
    with pytest.raises(NewtonDiverged) as exc:
        solve_dirichlet(p, SolverConfig(0.1, newton_max_iters=1, max_halvings=0))
    assert exc.value.time is not None


def test_newton_superlinear():
    p = bump_problem(2.0, cells=128)
    info = step_info(p.initial_u0, 0.0, p, SolverConfig(1 / 64, newton_tol=1e-13))
    h = [r for r in info.history if r > 0]
    assert len(h) >= 3
    # the last ratios shrink: each contraction factor is smaller than the previous one
    ratios = np.array(h[1:]) / h[:-1]
    assert ratios[-1] < ratios[-2] < 1


@pytest.mark.parametrize("bad", [dict(dt=0), dict(dt=0.1, newton_tol=0), dict(dt=0.1, jacobian_floor=-1)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        SolverConfig(**bad)


def test_problem_validation():
    g = make_interval(0, 1, 8)
    e = make_exponent(2, 1)
    with pytest.raises(DimensionMismatch):
        DirichletProblem(e, g, 1.0, constant_boundary(0), np.zeros(7))
    with pytest.raises(ValueError):
        DirichletProblem(e, g, 1.0, constant_boundary(0), -np.ones(8))
    with pytest.raises(ValueError):
        DirichletProblem(e, g, 1.0, constant_boundary(-1), np.ones(8))
    with pytest.raises(ValueError):
        CauchyProblem(make_exponent(2, 1), 3.0, np.ones(8), make_radial(1, 1.0, 8), 1.0)


@pytest.mark.parametrize("m", [0.7, 1.0, 2.0])
def test_l1_contraction_between_solutions(m):
    rng = np.random.default_rng(11)
    g = make_interval(-1, 1, 48)
    cfg = SolverConfig(1 / 64)
    for _ in range(5):
        ua = rng.random(48) * bump(g, 0.8)
        ub = rng.random(48) * bump(g, 0.8)
        ta = solve_dirichlet(DirichletProblem(make_exponent(m, 1), g, 0.25, constant_boundary(0.0), ua), cfg)
        tb = solve_dirichlet(DirichletProblem(make_exponent(m, 1), g, 0.25, constant_boundary(0.0), ub), cfg)
        d = np.abs(ta.fields - tb.fields) @ g.volumes
        assert np.all(np.diff(d) <= 1e-6 * d[0])


def test_positivity_and_clip_count():
    p = bump_problem(0.7, cells=64)
    tr = solve_dirichlet(p, SolverConfig(1 / 64))
    assert tr.fields.min() >= 0
    assert tr.clip_count >= 0
