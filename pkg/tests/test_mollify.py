import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate as spi

from pmestab.grid import make_interval
from pmestab.mollify import (EmptyTrajectory, mollify, mollify_values, source_lp_norm,
                             time_derivative_identity_defect, uniform_limit_defect)
from pmestab.solver import Trajectory


def traj_of(fn, T=1.0, levels=33, cells=6):
    g = make_interval(0.0, 1.0, cells)
    t = np.linspace(0.0, T, levels)
    return Trajectory.from_fields(g, t, fn(g.centers[None, :], t[:, None]))


def test_constant_in_time():
    sigma = 0.2
    tr = traj_of(lambda x, t: 3.0 + 0 * x * t)
    mt = mollify(tr, sigma)
    expected = 3.0 * (1 - np.exp(-tr.times / sigma))
    np.testing.assert_allclose(mt.values, np.broadcast_to(expected[:, None], mt.values.shape), rtol=1e-13)


def test_zero_stays_zero():
    tr = traj_of(lambda x, t: 0 * x * t)
    mt = mollify(tr, 0.1)
    assert np.all(mt.values == 0)
    assert time_derivative_identity_defect(mt) == 0


def test_starts_at_zero():
    mt = mollify(traj_of(lambda x, t: 1 + x + t), 0.3)
    assert np.all(mt.values[0] == 0)


def test_empty_and_bad_sigma():
    with pytest.raises(EmptyTrajectory):
        mollify_values(np.array([]), np.zeros((0, 3)), 0.1)
    with pytest.raises(ValueError):
        mollify(traj_of(lambda x, t: 1 + x * t), 0.0)


def test_matches_quadrature_of_the_interpolant():
    tr = traj_of(lambda x, t: np.sin(3 * t + x) ** 2, levels=9)
    sigma = 0.15
    mt = mollify(tr, sigma)
    for k in (3, 8):
        t = tr.times[k]
        u = lambda s: np.interp(s, tr.times, tr.fields[:, 2])
        ref = spi.quad(lambda s: np.exp((s - t) / sigma) * u(s) / sigma, 0, t, points=tr.times[:k + 1],
                       limit=200, epsabs=1e-14)[0]
        assert mt.values[k, 2] == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("p", [1, 2, np.inf])
def test_closed_form_norms(p):
    tr = traj_of(lambda x, t: 1 + np.cos(4 * t) * x, levels=11, cells=3)
    mt = mollify(tr, 0.1)
    # brute force on a fine time sampling of the exact mollification
    fine_t = np.linspace(0, 1, 20001)
    vals = []
    for j in range(3):
        u = np.interp(fine_t, tr.times, tr.fields[:, j])
        vals.append(mollify_values(fine_t, u, 0.1))
    vals = np.array(vals).T
    V = tr.grid.volumes
    if p == np.inf:
        ref = np.abs(vals).max()
    else:
        ref = spi.trapezoid(np.abs(vals) ** p @ V, fine_t) ** (1 / p)
    assert mt.lp_norm(p) == pytest.approx(ref, rel=1e-6)


def test_convergence_as_sigma_vanishes():
    tr = traj_of(lambda x, t: 1 + np.sin(2 * t) * x, levels=4001)
    errs = []
    for sigma in (0.1, 0.01, 0.001):
        d = mollify(tr, sigma).values - tr.fields
        errs.append(np.sqrt(np.sum(np.diff(tr.times)[:, None] * d[1:] ** 2 * tr.grid.volumes)))
    assert errs[0] > errs[1] > errs[2]


@pytest.mark.parametrize("smooth", [False, True])
def test_identity_defect_second_order(smooth):
    fn = (lambda x, t: 2.0 + 0 * x * t) if not smooth else (lambda x, t: np.exp(-t) * (1 + x) + t**2)
    d = [time_derivative_identity_defect(mollify(traj_of(fn, levels=L), 0.3)) for L in (41, 81, 161)]
    rates = np.log2(np.array(d[:-1]) / d[1:])
    assert np.all(rates > 1.9)


def test_gradient_commutes():
    tr = traj_of(lambda x, t: np.exp(-t) * x**2 + t * x, cells=9)
    a = np.diff(mollify(tr, 0.2).values, axis=1)
    b = mollify_values(tr.times, np.diff(tr.fields, axis=1), 0.2)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_uniform_limit():
    tr = traj_of(lambda x, t: 1 + t + t**2 + x, levels=2001)
    d = [uniform_limit_defect(mollify(tr, s)) for s in (0.1, 0.01)]
    assert d[1] < d[0] / 5


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 2.0), st.sampled_from([1, 2, np.inf]))
def test_contraction(seed, sigma, p):
    rng = np.random.default_rng(seed)
    levels = rng.integers(2, 30)
    t = np.sort(np.r_[0.0, rng.uniform(0, 2, levels - 1)])
    t = np.unique(t)
    g = make_interval(0, 1, 5)
    tr = Trajectory.from_fields(g, t, rng.random((len(t), 5)))
    assert mollify(tr, sigma).lp_norm(p) <= source_lp_norm(tr, p) * (1 + 1e-12)
