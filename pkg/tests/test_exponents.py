import math

import numpy as np
import pytest

import dnflow as d
from dnflow.exponents import LogarithmicCaseError, ParameterError


def test_canonical_singular_triple(e1):
    # independent hand/symbolic evaluation of every constant
    assert e1.q == pytest.approx(3.0, rel=1e-14)
    assert e1.gamma == pytest.approx(1.0 / 3.0, rel=1e-13)
    assert e1.m_c == pytest.approx(1.0, rel=1e-14)
    assert e1.p_c == pytest.approx(1.5, rel=1e-14)
    assert e1.delta_p == pytest.approx(0.5, rel=1e-13)
    assert e1.alpha == pytest.approx(-11.0 / 4.0, rel=1e-13)
    assert e1.theta == pytest.approx(0.4, rel=1e-13)
    assert math.isnan(e1.m_star)  # q = n makes the formula singular


def test_canonical_degenerate_triple(e2):
    assert e2.q == pytest.approx(1.5, rel=1e-14)
    assert e2.gamma == pytest.approx(0.6, rel=1e-14)
    assert e2.m_c == pytest.approx(0.0, abs=1e-15)
    assert e2.delta_p == pytest.approx(0.6, rel=1e-13)
    assert e2.alpha == pytest.approx(-13.0 / 8.0, rel=1e-13)
    assert e2.theta == pytest.approx(4.0 / 7.0, rel=1e-13)
    assert e2.m_star == pytest.approx(-0.5, rel=1e-13)


def test_logarithmic_case_rejected():
    # p=2, m=1 puts gamma at 1 (heat equation limit of the entropy density)
    with pytest.raises(LogarithmicCaseError):
        d.derive(1.0, 2.0, 3)
    with pytest.raises(LogarithmicCaseError):
        d.derive(1.0 / (1.5 - 1.0), 1.5, 4)  # m = 1/(p-1)


def test_gamma_zero_rejected():
    # m = (2-p)/(p-1) makes gamma vanish; normalization degenerates
    with pytest.raises(LogarithmicCaseError):
        d.derive(1.5, 1.4, 4)


@pytest.mark.parametrize("m,p,n", [(0.5, 1.0, 3), (0.5, 0.8, 3),
                                   (0.5, 1.5, 2), (-1.0, 1.5, 3),
                                   (0.0, 1.5, 3)])
def test_domain_rejections(m, p, n):
    with pytest.raises(ParameterError):
        d.derive(m, p, n)


def test_p2_reductions():
    # p = 2: q = 2, gamma = m, m_c = 1 - 2/n, delta_p = n(m-1) + 2
    for n in (3, 4, 5):
        for m in (1.0 - 1.8 / n, 1.0 - 1.2 / n):
            e = d.derive(m, 2.0, n)
            assert e.q == pytest.approx(2.0, rel=1e-14)
            assert e.gamma == pytest.approx(m, rel=1e-13)
            assert e.m_c == pytest.approx(1.0 - 2.0 / n, rel=1e-13)
            assert e.delta_p == pytest.approx(n * (m - 1.0) + 2.0, rel=1e-12)


def test_range_classification(e1):
    assert d.validate_range(e1) is d.RangeClass.IN_RANGE
    assert e1.m_c == pytest.approx(1.0) and e1.range_upper == pytest.approx(5.0 / 3.0)
    # below and at m_c is mass-losing (gamma < 0 is fine there)
    assert d.validate_range(d.derive(0.5, 1.5, 3)) is d.RangeClass.MASS_LOSING
    e_crit = d.derive(0.4, 2.0, 5)  # m_c = 1 - 2/5 = 0.6 > m
    assert d.validate_range(e_crit) is d.RangeClass.MASS_LOSING
    assert d.validate_range(d.derive(2.0, 2.0, 3)) is d.RangeClass.DISPLACEMENT_CONVEX
    with pytest.raises(ParameterError):
        d.require_in_range(d.derive(2.0, 2.0, 3))


def _range_lattice(count_m=8):
    """Triples spread across the studied window, skipping gamma in {0, 1}."""
    out = []
    for n in (3, 4, 5, 6):
        for p in (1.2, 1.5, 1.8, 2.0, 2.5, 3.0, 4.0):
            e_lo = (n - p) / (n * (p - 1.0))
            width = 1.0 / (n * (p - 1.0))
            for k in range(1, count_m + 1):
                m = e_lo + width * k / (count_m + 1.0)
                if m <= 0.0:
                    continue
                g = m + (p - 2.0) / (p - 1.0)
                if min(abs(g), abs(g - 1.0)) < 1e-6:
                    continue
                out.append((m, p, n))
    return out


def test_identities_and_bounds_on_lattice():
    lattice = _range_lattice()
    assert len(lattice) > 150
    for m, p, n in lattice:
        e = d.derive(m, p, n)
        assert d.validate_range(e) is d.RangeClass.IN_RANGE
        # dual formulas agree (also enforced at construction)
        delta_alt = (p - 1.0) * (n * m + 1.0) + 1.0 - n
        alpha_alt = (2.0 - e.q) / 2.0 + e.q / (2.0 * (e.gamma - 1.0))
        assert e.delta_p == pytest.approx(delta_alt, rel=1e-12, abs=1e-12)
        assert e.alpha == pytest.approx(alpha_alt, rel=1e-12, abs=1e-12)
        # in-range structural bounds
        assert e.delta_p > 0.0
        assert e.gamma < 1.0 - 1.0 / n
        assert e.theta < 1.0
        assert e.alpha < -(n - 2.0) / 2.0


def test_theta_at_critical_exponent():
    # theta evaluated at m_c equals n/(n+q)
    for n in (3, 4, 5):
        for p in (1.3, 1.7, 2.2, 3.0):
            q = p / (p - 1.0)
            m_c = (n - p) / (n * (p - 1.0))
            gamma_c = m_c + (p - 2.0) / (p - 1.0)
            theta_c = n * (1.0 - gamma_c) / (q * (2.0 - gamma_c))
            assert theta_c == pytest.approx(n / (n + q), rel=1e-12)


def test_theta_decreasing_in_m():
    for n in (3, 5):
        for p in (1.4, 2.0, 3.0):
            e_lo = (n - p) / (n * (p - 1.0))
            width = 1.0 / (n * (p - 1.0))
            ms = e_lo + width * np.linspace(0.1, 0.9, 12)
            thetas = []
            for m in ms:
                g = m + (p - 2.0) / (p - 1.0)
                if min(abs(g), abs(g - 1.0)) < 1e-6 or m <= 0:
                    continue
                thetas.append(d.derive(m, p, n).theta)
            assert all(b < a for a, b in zip(thetas, thetas[1:]))


def test_immutable():
    e = d.derive(4.0 / 3.0, 1.5, 3)
    with pytest.raises(Exception):
        e.m = 2.0
