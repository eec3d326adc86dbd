import numpy as np
import pytest
from hypothesis import given, strategies as st

from pmestab.params import SubcriticalExponent, critical_exponent, derive_constants, make_exponent


def test_m2_n1_valid():
    e = make_exponent(2, 1)
    assert e.m_c == 0.0
    assert e.is_pme and not e.is_fde


def test_critical_exponent_is_rejected():
    assert critical_exponent(3) == pytest.approx(1 / 3, abs=0)
    with pytest.raises(SubcriticalExponent):
        make_exponent(1 / 3, 3)


def test_fde_constants():
    c = derive_constants(make_exponent(0.5, 3))
    assert c.barenblatt_lambda == pytest.approx(6.0, rel=1e-15)
    assert c.barenblatt_k == pytest.approx(1.0, rel=1e-15)


def test_pme_constants():
    c = derive_constants(make_exponent(2, 1))
    assert c.barenblatt_lambda == pytest.approx(1 / 3, rel=1e-15)
    assert c.smoothing_lambda == 3.0
    assert c.kappa_sobolev == 2.5
    assert c.kappa_stability == 2.0
    assert c.sobolev_kappa == 2.0
    assert c.barenblatt_k is None


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_heat_case(n):
    c = derive_constants(make_exponent(1.0, n))
    assert c.barenblatt_lambda == n / 2
    assert c.smoothing_lambda == 2
    assert c.m_sharp == c.m_flat == 1


@pytest.mark.parametrize("n", [0, -1])
def test_bad_dimension(n):
    with pytest.raises(ValueError):
        make_exponent(2.0, n)


def _exponents():
    return st.integers(1, 6).flatmap(
        lambda n: st.floats(critical_exponent(n) + 1e-6, 10.0).map(lambda m: (m, n))
    )


@given(_exponents())
def test_constant_relations(mn):
    m, n = mn
    c = derive_constants(make_exponent(m, n))
    assert c.barenblatt_lambda > 0 and c.smoothing_lambda > 0
    assert c.barenblatt_lambda == pytest.approx(n / c.smoothing_lambda, rel=1e-14)
    assert c.m_sharp == max(m, 1.0) and c.m_flat == min(m, 1.0)
    assert c.m_sharp >= 1 >= c.m_flat
    assert (c.m_sharp == m) != (c.m_flat == m) or m == 1.0
    if m < 1:
        assert c.barenblatt_k > 0
    else:
        assert c.barenblatt_k is None


@given(_exponents())
def test_derive_is_pure(mn):
    e = make_exponent(*mn)
    assert derive_constants(e) == derive_constants(make_exponent(*mn))


@given(st.integers(1, 6), st.floats(0.0, 1.0))
def test_subcritical_always_rejected(n, frac):
    m = frac * critical_exponent(n)
    with pytest.raises(SubcriticalExponent):
        make_exponent(m, n)
