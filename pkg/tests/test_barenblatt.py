import math

import numpy as np
import pytest
from scipy.special import betaln

import dnflow as d
from dnflow.barenblatt import MassDivergenceError, SingularWeightError
from dnflow.exponents import ParameterError, unit_sphere_area


# ---------------------------------------------------------------- energy

def test_internal_energy_values(e1):
    # F''(1) = m; F'(8) = m 8^{gamma-1}/(gamma-1) = -1/2 for (m=4/3, gamma=1/3)
    assert d.internal_energy(e1, 1.0, order=2) == pytest.approx(4.0 / 3.0, rel=1e-14)
    assert d.internal_energy(e1, 8.0, order=1) == pytest.approx(-0.5, rel=1e-13)
    assert d.internal_energy(e1, 1.0, order=0) == pytest.approx(
        e1.m / (e1.gamma * (e1.gamma - 1.0)), rel=1e-13)


def test_internal_energy_convex_and_homogeneous(e1, e2):
    rng = np.random.default_rng(7)
    for e in (e1, e2):
        x = rng.uniform(0.05, 20.0, size=40)
        assert np.all(d.internal_energy(e, x, order=2) > 0.0)
        for lam in (0.3, 2.0, 7.5):
            # F''(lam x) = lam^{gamma-2} F''(x)
            lhs = d.internal_energy(e, lam * x, order=2)
            rhs = lam ** (e.gamma - 2.0) * d.internal_energy(e, x, order=2)
            assert np.allclose(lhs, rhs, rtol=1e-12)


def test_internal_energy_rejects_nonpositive(e1):
    with pytest.raises(ParameterError):
        d.internal_energy(e1, 0.0)
    with pytest.raises(ParameterError):
        d.internal_energy(e1, np.array([1.0, -2.0]))


# ---------------------------------------------------------------- costs

def test_cost_conjugacy_at_unit_norm(e1, e2):
    for e in (e1, e2):
        assert d.cost(e, 1.0) + d.cost_conjugate(e, 1.0) == pytest.approx(1.0, rel=1e-14)
        assert d.cost(e, 1.0) == pytest.approx(1.0 / e.q, rel=1e-14)


def test_young_identity(e1, e2):
    # grad c* o grad c = id on signed radial values
    rng = np.random.default_rng(11)
    z = rng.uniform(-5.0, 5.0, size=100)
    z = z[np.abs(z) > 1e-3]
    for e in (e1, e2):
        back = d.grad_cost_conjugate(e, d.grad_cost(e, z))
        assert np.allclose(back, z, rtol=1e-11)


def test_cost_origin(e1):
    assert d.cost(e1, 0.0) == 0.0
    assert d.cost_conjugate(e1, 0.0) == 0.0
    assert d.grad_cost_conjugate(e1, 0.0) == 0.0


# ---------------------------------------------------------------- profile

def test_profile_values(e1):
    prof = d.BarenblattProfile(e1, 1.0)
    assert prof.density(0.0) == pytest.approx(1.0, rel=1e-14)  # D^{1/(gamma-1)}
    # (1 + (1/6) r^3)^{-3/2} at r = 1
    assert prof.density(1.0) == pytest.approx((7.0 / 6.0) ** -1.5, rel=1e-13)
    prof3 = d.BarenblattProfile(e1, 3.0)
    assert prof3.density(0.0) == pytest.approx(3.0 ** -1.5, rel=1e-13)


def test_profile_monotone_positive(e1, e2):
    r = np.linspace(0.0, 40.0, 400)
    for e in (e1, e2):
        u = d.BarenblattProfile(e, 0.8).density(r)
        assert np.all(u > 0.0)
        assert np.all(np.diff(u) < 0.0)


def test_profile_tail(e1, e2):
    # u_D(r) r^{q/(1-gamma)} -> ((1-gamma)/(mq))^{1/(gamma-1)} where the
    # D-term has dropped below 1e-4 of the r-term
    for e in (e1, e2):
        D = 1.3
        prof = d.BarenblattProfile(e, D)
        b = e.tail_coef
        r = (1e4 * D / b) ** (1.0 / e.q)
        limit = b ** (1.0 / (e.gamma - 1.0))
        val = prof.density(r) * r ** (e.q / (1.0 - e.gamma))
        assert val == pytest.approx(limit, rel=1e-3)


def test_equilibrium_residual_second_order(e1, e2):
    # discrete d/dr F'(u_D) + r^{q-1} on uniform grids; the natural
    # volume-weighted norm decays at second order, and so does the max norm
    # away from the origin (for q < 2 the fractional power r^q is not C^3
    # at r = 0, so the pointwise rate there is q - 1)
    for e in (e1, e2):
        prof = d.BarenblattProfile(e, 1.0)
        l1, far = [], []
        for cells in (128, 256, 512):
            grid = d.build_grid(3, 20.0, cells, 1.0)
            ref = d.ReferenceProfile(prof, grid)
            resid = np.abs(ref.s_e + grid.r_edge ** (e.q - 1.0))
            l1.append(float(grid.evol_edge @ resid))
            far.append(resid[grid.r_edge >= 2.0].max())
        for seq in (l1, far):
            orders = [math.log2(seq[i] / seq[i + 1]) for i in range(2)]
            assert orders[-1] > 1.9, (seq, orders)


# ---------------------------------------------------------------- mass

def _beta_mass(e, D):
    # independent closed form: sigma/q b^{-n/q} D^{n/q+1/(gamma-1)} B(n/q, s-n/q)
    s = 1.0 / (1.0 - e.gamma)
    b = e.tail_coef
    lnB = betaln(e.n / e.q, s - e.n / e.q)
    return (unit_sphere_area(e.n) / e.q * b ** (-e.n / e.q)
            * D ** (e.n / e.q - s) * math.exp(lnB))


def test_mass_against_closed_form(e1, e2):
    # quadrature + analytic tail vs the exact Beta-function value
    assert d.profile_mass(e1, 1.0) == pytest.approx(16.0 * math.pi, rel=1e-10)
    assert d.profile_mass(e2, 1.0) == pytest.approx(math.pi / 2.0, rel=1e-10)
    for e in (e1, e2):
        for D in (0.37, 1.0, 5.2):
            assert d.profile_mass(e, D) == pytest.approx(_beta_mass(e, D), rel=1e-9)


def test_mass_scaling_law(e1, e2):
    for e in (e1, e2):
        m1 = d.profile_mass(e, 1.0)
        for D in (0.5, 2.0, 10.0):
            expected = D ** e.mass_exponent * m1
            assert d.profile_mass(e, D) == pytest.approx(expected, rel=1e-8)


def test_mass_exponent_sign(e1):
    # (gamma=1/3, q=3, n=3): 1/(gamma-1) + n/q = -3/2 + 1 = -1/2
    assert e1.mass_exponent == pytest.approx(-0.5, rel=1e-13)
    # approaching m_c the exponent degenerates to 0
    eps_list = [1e-2, 1e-3, 1e-4]
    vals = [abs(d.derive(1.0 + t, 1.5, 3).mass_exponent) for t in eps_list]
    assert vals[0] > vals[1] > vals[2]
    assert vals[2] < 5e-4


def test_mass_divergence_at_critical(e2):
    # m = m_c exactly: mass-losing boundary, infinite mass
    e_crit = d.derive(0.6, 2.0, 5)  # m_c = 0.6 for (p=2, n=5)
    assert d.validate_range(e_crit) is d.RangeClass.MASS_LOSING
    with pytest.raises(MassDivergenceError):
        d.profile_mass(e_crit, 1.0)


def test_solve_Dstar(e1):
    m1 = 16.0 * math.pi
    assert d.solve_Dstar(e1, m1).D == pytest.approx(1.0, rel=1e-11)
    # doubling the mass with exponent -1/2 quarters D
    assert d.solve_Dstar(e1, 2.0 * m1).D == pytest.approx(0.25, rel=1e-10)
    rng = np.random.default_rng(3)
    for target in rng.uniform(0.2, 300.0, size=5):
        prof = d.solve_Dstar(e1, float(target))
        assert prof.mass == pytest.approx(target, rel=1e-10)
    with pytest.raises(ParameterError):
        d.solve_Dstar(e1, -1.0)


def test_match_grid_mass(e1):
    grid = d.build_grid(3, 18.0, 128, 1.01)
    target = 40.0
    prof = d.match_grid_mass(e1, grid.centers, grid.volumes, target)
    disc = float(grid.volumes @ prof.density(grid.centers))
    assert disc == pytest.approx(target, rel=1e-12)


# ---------------------------------------------------------------- weights

def test_weight_far_field(e1, e2):
    for e in (e1, e2):
        prof = d.BarenblattProfile(e, 0.9)
        b = e.tail_coef
        r = (1e7 * prof.D / b) ** (1.0 / e.q)
        mu_lim = b ** ((2.0 - e.gamma) / (e.gamma - 1.0)) / e.m
        nu_lim = b ** (1.0 / (e.gamma - 1.0))
        assert prof.mu_density(r) == pytest.approx(
            mu_lim * r ** (2.0 * e.alpha - 2.0), rel=1e-3)
        assert prof.nu_density(r, 0.0) == pytest.approx(
            nu_lim * r ** (2.0 * e.alpha), rel=1e-3)


def test_weight_regularization(e1):
    prof = d.BarenblattProfile(e1, 1.0)
    r = np.linspace(0.05, 10.0, 50)
    for eps in (0.01, 0.1, 1.0):
        # (eps + a)^{p-2} <= a^{p-2} for p < 2
        assert np.all(prof.nu_density(r, eps) <= prof.nu_density(r, 0.0))
    with pytest.raises(SingularWeightError):
        prof.nu_density(0.0, 0.0)
    # p >= 2: raw weight is fine at the origin
    e2 = d.derive(0.1, 3.0, 3)
    assert d.BarenblattProfile(e2, 1.0).nu_density(0.0, 0.0) >= 0.0


def test_mu_density_is_inverse_hessian(e1, ref_small):
    vals = ref_small.profile.mu_density(ref_small.grid.centers)
    assert np.allclose(vals, 1.0 / ref_small.fpp_c, rtol=1e-12)


# ---------------------------------------------------------------- sandwich

def test_sandwich_bounds_values(e1):
    sb = d.sandwich_bounds(e1, D0=4.0, D1=1.0, Dstar=2.0)
    # exponent 1/(1-gamma) = 3/2
    assert sb.W0 == pytest.approx(0.5 ** 1.5, rel=1e-13)
    assert sb.W1 == pytest.approx(2.0 ** 1.5, rel=1e-13)
    triv = d.sandwich_bounds(e1, 1.0, 1.0, 1.0)
    assert triv.W0 == triv.W1 == 1.0 and triv.is_trivial


def test_sandwich_ordering_enforced(e1):
    with pytest.raises(ParameterError):
        d.sandwich_bounds(e1, D0=1.0, D1=2.0, Dstar=1.5)
    # measured quotient ranges are clipped to straddle 1, never rejected
    mb = d.measured_bounds(1.4, 2.0)
    assert mb.W0 == 1.0 and mb.W1 == 2.0


def test_profile_quotient_attains_W0(e1):
    # u_{D0}/u_{D*} increases from W0 (at r=0) to 1 (far field)
    sb = d.sandwich_bounds(e1, D0=3.0, D1=0.5, Dstar=1.2)
    lo = d.BarenblattProfile(e1, 3.0)
    star = d.BarenblattProfile(e1, 1.2)
    r = np.linspace(0.0, 60.0, 500)
    quot = lo.density(r) / star.density(r)
    assert quot[0] == pytest.approx(sb.W0, rel=1e-12)
    assert np.all(quot >= sb.W0 - 1e-12)
    assert np.all(np.diff(quot) > 0.0)


def test_profile_sandwich_pointwise(e1):
    # D0 >= D* >= D1 implies u_{D0} <= u_{D*} <= u_{D1} pointwise
    r = np.linspace(0.0, 30.0, 300)
    lo = d.BarenblattProfile(e1, 2.5).density(r)
    mid = d.BarenblattProfile(e1, 1.0).density(r)
    hi = d.BarenblattProfile(e1, 0.4).density(r)
    assert np.all(lo <= mid) and np.all(mid <= hi)
