"""Closed-form equilibrium profiles and the structural functions around them.

In self-similar variables the equation relaxes to the one-parameter family

    u_D(r) = (D + b r^q)^{1/(gamma-1)},        b = (1-gamma)/(m q),

every member of which solves d/dr[F'(u_D)] = -r^{q-1} with the convex
internal-energy density F(x) = m x^gamma / (gamma (gamma - 1)).  The module
provides F and its derivatives, the conjugate cost pair c(z) = |z|^q/q and
c*(z) = |z|^p/p, profile evaluation and total mass (adaptive quadrature plus
an analytic power-law tail), the mass-matched parameter D*, the weighted
measure densities entering the spectral problem, and the quotient bounds
implied by initial data trapped between two profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy import integrate

from .exponents import Exponents, ParameterError, unit_sphere_area


class MassDivergenceError(ParameterError):
    """Total mass of the profile is infinite (m <= m_c)."""


class SingularWeightError(ParameterError):
    """The unregularized gradient weight is singular at the origin for p < 2."""


# ----------------------------------------------------------------------
# internal energy F and the conjugate cost pair
# ----------------------------------------------------------------------

def internal_energy(e: Exponents, x, order: int = 0):
    """F(x) = m x^gamma / (gamma (gamma-1)) and its first two derivatives.

    order 0: F, order 1: F'(x) = m x^{gamma-1}/(gamma-1),
    order 2: F''(x) = m x^{gamma-2} > 0 (strict convexity).
    Rejects nonpositive x; raises on overflow (x too close to 0 for the
    negative exponents gamma-1, gamma-2).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise ParameterError("internal_energy requires x > 0")
    g = e.gamma
    with np.errstate(over="raise"):
        if order == 0:
            out = e.m * x ** g / (g * (g - 1.0))
        elif order == 1:
            out = e.m * x ** (g - 1.0) / (g - 1.0)
        elif order == 2:
            out = e.m * x ** (g - 2.0)
        else:
            raise ParameterError(f"order must be 0, 1 or 2, got {order}")
    return out if out.ndim else float(out)


def cost(e: Exponents, z):
    """c(z) = |z|^q / q (z may be a signed radial scalar or an array)."""
    z = np.asarray(z, dtype=float)
    out = np.abs(z) ** e.q / e.q
    return out if out.ndim else float(out)


def cost_conjugate(e: Exponents, z):
    """c*(z) = |z|^p / p, the Legendre transform of c."""
    z = np.asarray(z, dtype=float)
    out = np.abs(z) ** e.p / e.p
    return out if out.ndim else float(out)


def grad_cost_conjugate(e: Exponents, z):
    """grad c*(z) = z |z|^{p-2}, extended continuously by 0 at z = 0."""
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 0.0, z * a ** (e.p - 2.0), 0.0)
    return out if out.ndim else float(out)


def grad_cost(e: Exponents, z):
    """grad c(z) = z |z|^{q-2}; inverse map of grad c* (Young equality)."""
    z = np.asarray(z, dtype=float)
    a = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 0.0, z * a ** (e.q - 2.0), 0.0)
    return out if out.ndim else float(out)


# ----------------------------------------------------------------------
# the profile family
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BarenblattProfile:
    """Equilibrium profile u_D(r) = (D + b r^q)^{1/(gamma-1)}, D > 0.

    Immutable value object; all evaluations are pure.  ``mass`` is the total
    integral over R^n, computed once and cached.
    """

    exponents: Exponents
    D: float

    def __post_init__(self) -> None:
        if not self.D > 0.0:
            raise ParameterError(f"profile parameter must be positive, got D={self.D}")

    def density(self, r):
        """Pointwise value u_D(r); strictly positive, decreasing in r."""
        e = self.exponents
        r = np.asarray(r, dtype=float)
        out = (self.D + e.tail_coef * r ** e.q) ** (1.0 / (e.gamma - 1.0))
        return out if out.ndim else float(out)

    __call__ = density

    @cached_property
    def mass(self) -> float:
        return profile_mass(self.exponents, self.D)

    def mu_density(self, r):
        """Density of d mu = dx / F''(u_D): (1/m)(D + b r^q)^{(2-gamma)/(gamma-1)}.

        Far field: ~ (1/m) b^{(2-gamma)/(gamma-1)} r^{2 alpha - 2}.
        """
        e = self.exponents
        r = np.asarray(r, dtype=float)
        expo = (2.0 - e.gamma) / (e.gamma - 1.0)
        out = (self.D + e.tail_coef * r ** e.q) ** expo / e.m
        return out if out.ndim else float(out)

    def nu_density(self, r, eps: float = 0.0):
        """Density of d nu_eps = u_D (eps + r^{q-1})^{p-2} dx.

        eps = 0 gives the raw weight u_D r^{(q-1)(p-2)} = r^{2-q} u_D, whose
        value at r = 0 is singular when p < 2; that evaluation is rejected.
        Far field (eps = 0): ~ b^{1/(gamma-1)} r^{2 alpha}.
        """
        e = self.exponents
        if eps < 0.0:
            raise ParameterError("eps must be nonnegative")
        r = np.asarray(r, dtype=float)
        if eps == 0.0 and e.p < 2.0 and np.any(r == 0.0):
            raise SingularWeightError(
                "nu-weight r^{(q-1)(p-2)} is singular at r=0 for p<2; "
                "use eps > 0 or exclude the origin"
            )
        out = self.density(r) * (eps + r ** (e.q - 1.0)) ** (e.p - 2.0)
        return out if out.ndim else float(out)


def profile_mass(e: Exponents, D: float) -> float:
    """Total mass of u_D over R^n.

    Adaptive quadrature up to R_cut, the radius where the D-term has fallen
    to 1e-8 of the b r^q term, plus the analytic integral of the binomial
    expansion of the power-law tail.  Obeys M(D) = D^{1/(gamma-1)+n/q} M(1).
    """
    if not D > 0.0:
        raise ParameterError(f"profile parameter must be positive, got D={D}")
    if e.mass_exponent >= 0.0:
        raise MassDivergenceError(
            f"profile mass diverges for m <= m_c "
            f"(mass-scaling exponent {e.mass_exponent:.6g} >= 0)"
        )
    b = e.tail_coef
    s = 1.0 / (e.gamma - 1.0)
    sigma = unit_sphere_area(e.n)
    r_knee = (D / b) ** (1.0 / e.q)
    r_cut = (1e8 * D / b) ** (1.0 / e.q)

    def f(r: float) -> float:
        return sigma * r ** (e.n - 1) * (D + b * r ** e.q) ** s

    core1, _ = integrate.quad(f, 0.0, r_knee, epsabs=0.0, epsrel=1e-12, limit=200)
    core2, _ = integrate.quad(f, r_knee, r_cut, epsabs=0.0, epsrel=1e-12, limit=500)

    # tail: (D + b r^q)^s = (b r^q)^s sum_k C(s,k) (D/(b r^q))^k, term ratio 1e-8
    tail = 0.0
    coef = 1.0
    for k in range(4):
        if k > 0:
            coef *= (s - (k - 1)) / k
        expo = e.n + e.q * (s - k)  # < 0 for every k
        tail += sigma * coef * D ** k * b ** (s - k) * r_cut ** expo / (-expo)
    return core1 + core2 + tail


def solve_Dstar(e: Exponents, target_mass: float = 1.0) -> BarenblattProfile:
    """Mass-matched profile: the unique D* with total mass equal to target.

    Closed form from the scaling law D* = (target/M(1))^{1/e_mass}, then one
    Newton polish in log D against the quadrature (d log M / d log D = e_mass
    exactly, so the polish only undoes quadrature noise).
    """
    if not (target_mass > 0.0 and math.isfinite(target_mass)):
        raise ParameterError(f"target mass must be positive, got {target_mass}")
    m1 = profile_mass(e, 1.0)
    if not math.isfinite(m1):
        raise ParameterError("unit-parameter profile mass is not finite")
    emass = e.mass_exponent
    D = (target_mass / m1) ** (1.0 / emass)
    D *= (profile_mass(e, D) / target_mass) ** (-1.0 / emass)
    return BarenblattProfile(exponents=e, D=D)


def match_grid_mass(e: Exponents, centers, volumes, target_mass: float) -> BarenblattProfile:
    """Profile whose discrete mass sum(volumes * u_D(centers)) hits target.

    This is the reference the truncated zero-flux dynamics actually relax to:
    every u_D restricted to the grid is a steady state, and the discrete mass
    picks the member.  Monotone in D, solved by bisection in log D.
    """
    centers = np.asarray(centers, dtype=float)
    volumes = np.asarray(volumes, dtype=float)

    def disc_mass(logD: float) -> float:
        return float(volumes @ BarenblattProfile(e, math.exp(logD)).density(centers))

    # discrete truncated mass still scales like D^{e_mass} to leading order
    guess = math.log((target_mass / disc_mass(0.0)) ** (1.0 / e.mass_exponent))
    lo, hi = guess - 0.7, guess + 0.7
    # disc_mass is decreasing in D (e_mass < 0); widen until bracketed
    for _ in range(60):
        if disc_mass(lo) > target_mass:
            break
        lo -= 0.7
    for _ in range(60):
        if disc_mass(hi) < target_mass:
            break
        hi += 0.7
    from scipy.optimize import brentq

    logD = brentq(lambda t: disc_mass(t) - target_mass, lo, hi, xtol=1e-15, rtol=1e-15)
    return BarenblattProfile(exponents=e, D=math.exp(logD))


# ----------------------------------------------------------------------
# sandwich bounds
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SandwichBounds:
    """Quotient bounds W0 <= u/u_{D*} <= W1 implied by trapped initial data.

    W0 = (D*/D0)^{1/(1-gamma)} <= 1 <= (D*/D1)^{1/(1-gamma)} = W1, with
    equality throughout iff D0 = D1 = D*.  May also carry a measured quotient
    range directly (D fields None), which is what the late-time comparison
    constants are built from.
    """

    W0: float
    W1: float
    D0: float | None = None
    D1: float | None = None
    Dstar: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.W0 <= 1.0 + 1e-12 and self.W1 >= 1.0 - 1e-12):
            raise ParameterError(
                f"quotient bounds must satisfy 0 < W0 <= 1 <= W1, "
                f"got ({self.W0}, {self.W1})"
            )

    @property
    def is_trivial(self) -> bool:
        return self.W0 == 1.0 and self.W1 == 1.0


def sandwich_bounds(e: Exponents, D0: float, D1: float, Dstar: float) -> SandwichBounds:
    """Bounds from a profile triple with D0 >= D* >= D1 > 0."""
    if not (D0 >= Dstar >= D1 > 0.0):
        raise ParameterError(
            f"need D0 >= D* >= D1 > 0, got D0={D0}, D*={Dstar}, D1={D1}"
        )
    expo = 1.0 / (1.0 - e.gamma)
    return SandwichBounds(
        W0=(Dstar / D0) ** expo, W1=(Dstar / D1) ** expo,
        D0=D0, D1=D1, Dstar=Dstar,
    )


def measured_bounds(w_min: float, w_max: float) -> SandwichBounds:
    """Bounds from an observed quotient range (clipped to straddle 1)."""
    return SandwichBounds(W0=min(w_min, 1.0), W1=max(w_max, 1.0))
