import numpy as np
import pytest

from conftest import bump, bump_problem
from pmestab.barenblatt import lp_distance, normalize
from pmestab.grid import make_radial
from pmestab.harness import (InsufficientData, SweepResult, SweepRow, SweepSpec, fit_power_law, fit_rate,
                             grid_consistency, realized_constants, run_cauchy_sweep, run_dirichlet_sweep)
from pmestab.params import SubcriticalExponent, make_exponent
from pmestab.solver import SolverConfig, barenblatt_cauchy

DELTAS = (0.0, 0.2, -0.2, 0.1, -0.1, 0.05, -0.05, 0.025, -0.025)


@pytest.fixture(scope="module")
def dirichlet_sweep():
    spec = SweepSpec(2.0, DELTAS, bump_problem(2.0, cells=64, T=0.25), SolverConfig(1 / 128),
                     norms=((2.0, 2.0),))
    return spec, run_dirichlet_sweep(spec, u0_fn=bump)


def _rows(result, sign):
    return [r for r in result.table("base") if r.delta * sign > 0]


def test_control_is_zero(dirichlet_sweep):
    _, res = dirichlet_sweep
    zero = [r for r in res.table("base") if r.delta == 0][0]
    assert zero.error_Lq == 0 and zero.error_power_Ls == 0 and zero.weak_defect_max == 0


@pytest.mark.parametrize("sign", [1, -1])
def test_errors_decrease(dirichlet_sweep, sign):
    _, res = dirichlet_sweep
    rows = _rows(res, sign)
    for attr in ("error_Lq", "error_power_Ls"):
        e = [getattr(r, attr) for r in rows]
        assert all(a < b for a, b in zip(e, e[1:]))


@pytest.mark.parametrize("sign", [1, -1])
def test_weak_defects_decrease_per_field(dirichlet_sweep, sign):
    _, res = dirichlet_sweep
    D = np.array([r.weak_defects for r in _rows(res, sign)])
    assert D.shape[1] == 5
    assert np.all(np.diff(D, axis=0) > 0)


def test_table_sorted_and_nonnegative(dirichlet_sweep):
    _, res = dirichlet_sweep
    rows = res.table("base")
    assert [abs(r.delta) for r in rows] == sorted(abs(r.delta) for r in rows)
    assert all(r.error_Lq >= 0 and r.error_power_Ls >= 0 for r in res.rows)
    # both signs are reported
    assert {r.delta for r in rows} == set(DELTAS)


def test_two_resolutions_agree(dirichlet_sweep):
    _, res = dirichlet_sweep
    assert all(res.accepted.values())
    for d, (change, decrease) in grid_consistency(res).items():
        assert change < decrease, d


def test_deterministic(dirichlet_sweep):
    spec, res = dirichlet_sweep
    again = run_dirichlet_sweep(spec, u0_fn=bump)
    assert [(r.delta, r.error_Lq, r.error_power_Ls, r.weak_defects) for r in again.rows] == \
           [(r.delta, r.error_Lq, r.error_power_Ls, r.weak_defects) for r in res.rows]


def test_threaded_matches_serial(dirichlet_sweep):
    spec, res = dirichlet_sweep
    threaded = run_dirichlet_sweep(spec, workers=3, u0_fn=bump)
    assert [r.error_Lq for r in threaded.rows] == [r.error_Lq for r in res.rows]


def test_fine_reference_flag():
    spec = SweepSpec(2.0, (0.1, 0.05), bump_problem(2.0, cells=32, T=0.125), SolverConfig(1 / 64),
                     two_resolutions=False, fine_reference=True)
    res = run_dirichlet_sweep(spec, u0_fn=bump)
    tags = {r.resolution_tag for r in res.rows}
    assert tags == {"base", "fine_reference"}


def test_failed_delta_is_marked(monkeypatch):
    import pmestab.harness as harness
    from pmestab.solver import NewtonDiverged, solve_dirichlet

    def flaky(problem, config):
        if problem.exponent.m == 3.0:
            raise NewtonDiverged("forced", time=0.1)
        return solve_dirichlet(problem, config)

    monkeypatch.setattr(harness, "solve_dirichlet", flaky)
    spec = SweepSpec(2.0, (0.1, 1.0), bump_problem(2.0, cells=32, T=0.125), SolverConfig(1 / 64))
    res = run_dirichlet_sweep(spec)
    bad = [r for r in res.rows if r.delta == 1.0]
    assert bad and all(r.failed and "forced" in r.message for r in bad)
    assert not res.accepted[(1.0, 2.0)]
    assert all(not r.failed for r in res.rows if r.delta == 0.1)


def test_precondition_on_norms():
    with pytest.raises(ValueError):
        run_dirichlet_sweep(SweepSpec(2.0, (0.1,), bump_problem(2.0), SolverConfig(0.1), norms=((3.0, 2.0),)))
    with pytest.raises(ValueError):
        run_dirichlet_sweep(SweepSpec(2.0, (0.1,), bump_problem(2.0), SolverConfig(0.1), norms=((2.0, 4.5),)))


def test_subcritical_delta_rejected():
    with pytest.raises(SubcriticalExponent):
        SweepSpec(2.0, (-2.5,), bump_problem(2.0), SolverConfig(0.1))


def test_rate_experiment_needs_m_at_least_one():
    with pytest.raises(ValueError):
        SweepSpec(1.1, (-0.2,), bump_problem(1.1), SolverConfig(0.1), require_m_at_least_one=True)


def test_synthetic_fit():
    d = np.array([0.2, 0.1, 0.05, 0.025])
    order, const = fit_power_law(d, 2 * d**0.5, 0.5)
    assert order == pytest.approx(0.5, abs=1e-12)
    assert const == pytest.approx(2.0, rel=1e-12)


def test_fit_rate_on_result():
    rows = tuple(SweepRow(d, 2 + d, 2.0, 2.0, 2 * abs(d) ** 0.5, 0.0, (0.0,), "base")
                 for d in (0.2, 0.1, 0.05, 0.025))
    order, const = fit_rate(SweepResult(rows), 0.5)
    assert order == pytest.approx(0.5, abs=1e-12) and const == pytest.approx(2.0, rel=1e-12)


def test_single_delta_insufficient():
    rows = (SweepRow(0.1, 2.1, 2.0, 2.0, 0.3, 0.0, (0.0,), "base"),)
    with pytest.raises(InsufficientData):
        fit_rate(SweepResult(rows), 0.5)


def test_realized_constants(dirichlet_sweep):
    _, res = dirichlet_sweep
    c = realized_constants(res, 0.5)
    assert set(c) == set(DELTAS) - {0.0}
    assert all(v > 0 for v in c.values())


@pytest.fixture(scope="module")
def cauchy_sweep():
    p = normalize(make_exponent(2.0, 1))
    prob = barenblatt_cauchy(p, make_radial(1, 4.0, 128), 0.5, 1.5)
    q = 0.95 * (2.0 + 2.0)  # 95% of the admissible range q < m + 2/n
    spec = SweepSpec(2.0, (0.0, 0.2, 0.1, 0.05, 0.025), prob, SolverConfig(1 / 128), norms=((q, 1.5),),
                     S_radius=3.0)
    return run_cauchy_sweep(spec, u0_fn=lambda g: p.cell_averages(g, 0.5))


def test_cauchy_sweep_converges(cauchy_sweep):
    rows = cauchy_sweep.table("base")
    assert rows[0].delta == 0 and rows[0].error_Lq == 0
    e = [r.error_Lq for r in rows[1:]]
    assert all(np.isfinite(e)) and all(a < b for a, b in zip(e, e[1:]))


def test_cauchy_sweep_window():
    p = normalize(make_exponent(2.0, 1))
    prob = barenblatt_cauchy(p, make_radial(1, 4.0, 64), 0.5, 1.0)
    with pytest.raises(ValueError):
        run_cauchy_sweep(SweepSpec(2.0, (0.1,), prob, SolverConfig(0.1), S_radius=5.0))
    with pytest.raises(ValueError):
        run_cauchy_sweep(SweepSpec(2.0, (0.1,), prob, SolverConfig(0.1), norms=((4.0, 1.5),), S_radius=3.0))


def test_closed_form_distances_decrease():
    g = make_radial(1, 4.0, 2048)
    p = normalize(make_exponent(2.0, 1))
    d = [lp_distance(p, normalize(make_exponent(2 + dd, 1)), 1.0, 1, g) for dd in (0.2, 0.1, 0.05, 0.025)]
    assert all(a > b for a, b in zip(d, d[1:]))
