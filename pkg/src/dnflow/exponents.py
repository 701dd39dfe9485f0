"""Exponent algebra for the doubly nonlinear diffusion equation.

The equation rho_t = div(|grad rho^m|^{p-2} grad rho^m) on R^n is governed
by the triple (m, p, n).  Everything else downstream -- the entropy exponent
gamma, the critical mass-conservation exponent m_c, the self-similar scaling
rate delta_p, the weight-growth exponent alpha of the spectral problem, and
the tail-integrability exponent theta -- is a deterministic function of that
triple.  This module derives them once, validates the internal identities,
and classifies the triple against the mass-conserving, non-displacement-convex
window

    m_c < m < (n - p + 1) / (n (p - 1)),        m_c = (n - p) / (n (p - 1)).

All derived constants are computed at construction and frozen.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class ParameterError(ValueError):
    """Raised for parameter triples outside the admissible domain."""


class LogarithmicCaseError(ParameterError):
    """Raised when gamma in {0, 1}: the entropy density degenerates to a
    logarithmic shape and the algebraic Barenblatt branch does not apply."""


#: relative tolerance for the internal cross-formula identity checks
IDENTITY_RTOL = 1e-12


class RangeClass(enum.Enum):
    """Where (m, p, n) sits relative to the studied exponent window."""

    IN_RANGE = "in-range"
    DISPLACEMENT_CONVEX = "displacement-convex"
    MASS_LOSING = "mass-losing"


def unit_sphere_area(n: int) -> float:
    """Surface area of the unit sphere S^{n-1}: 2 pi^{n/2} / Gamma(n/2)."""
    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


@dataclass(frozen=True)
class Exponents:
    """Frozen bundle of all scalar constants derived from (m, p, n).

    Fields
    ------
    m, p, n   : defining triple (p > 1, integer n >= 3, m > 0)
    q         : Hoelder conjugate, 1/p + 1/q = 1
    gamma     : entropy exponent, gamma = m + (p-2)/(p-1)
    m_c       : critical mass-conservation exponent (n-p)/(n(p-1))
    p_c       : critical gradient exponent for m = 1, 2n/(n+1)
    delta_p   : self-similar scaling rate n(p-1)(m - m_c) > 0 in range
    alpha     : far-field weight-growth exponent, 1 + q(2-gamma)/(2(gamma-1))
    theta     : tail-integrability exponent n(1-gamma)/(q(2-gamma))
    m_star    : lower linearization exponent (informational; NaN when q = n)
    """

    m: float
    p: float
    n: int
    q: float
    gamma: float
    m_c: float
    p_c: float
    delta_p: float
    alpha: float
    theta: float
    m_star: float

    # -- convenience constants used by the profile/weight formulas --------

    @property
    def tail_coef(self) -> float:
        """Coefficient b = (1-gamma)/(m q) multiplying r^q inside the
        equilibrium profile (D + b r^q)^{1/(gamma-1)}."""
        return (1.0 - self.gamma) / (self.m * self.q)

    @property
    def mass_exponent(self) -> float:
        """Exponent of the profile-mass scaling law M(D) = D^e M(1),
        e = 1/(gamma-1) + n/q.  Negative exactly when m > m_c."""
        return 1.0 / (self.gamma - 1.0) + self.n / self.q

    @property
    def range_upper(self) -> float:
        """Upper end m_c + 1/(n(p-1)) of the studied window."""
        return self.m_c + 1.0 / (self.n * (self.p - 1.0))

    def __post_init__(self) -> None:
        _check_identities(self)


def derive(m: float, p: float, n: int) -> Exponents:
    """Derive every scalar constant from (m, p, n).

    Rejects p <= 1, n < 3, m <= 0, and the logarithmic degeneracies
    gamma = 1 (m = 1/(p-1)) and gamma = 0, which sit outside the algebraic
    profile branch handled here.
    """
    if not p > 1.0:
        raise ParameterError(f"gradient exponent must satisfy p > 1, got p={p}")
    if int(n) != n or n < 3:
        raise ParameterError(f"dimension must be an integer >= 3, got n={n}")
    if not m > 0.0:
        raise ParameterError(f"diffusion exponent must satisfy m > 0, got m={m}")
    n = int(n)

    q = p / (p - 1.0)
    gamma = m + (p - 2.0) / (p - 1.0)
    if abs(gamma - 1.0) < 1e-14:
        raise LogarithmicCaseError(
            f"gamma = m + (p-2)/(p-1) = 1 at (m={m}, p={p}): logarithmic "
            "profile branch is out of scope"
        )
    if abs(gamma) < 1e-14:
        raise LogarithmicCaseError(
            f"gamma = 0 at (m={m}, p={p}): entropy density normalization "
            "1/(gamma(gamma-1)) degenerates"
        )

    m_c = (n - p) / (n * (p - 1.0))
    p_c = 2.0 * n / (n + 1.0)
    delta_p = n * (p - 1.0) * (m - m_c)
    alpha = 1.0 + q * (2.0 - gamma) / (2.0 * (gamma - 1.0))
    if gamma == 2.0:  # far outside the studied window; informational only
        theta = math.inf if gamma > 2.0 else -math.inf
    else:
        theta = n * (1.0 - gamma) / (q * (2.0 - gamma))
    if n == q:
        m_star = math.nan  # (n-2q)/(n-q) is singular; informational only
    else:
        m_star = (n - 2.0 * q) / (n - q) + (2.0 - p) / (p - 1.0)

    return Exponents(
        m=float(m), p=float(p), n=n, q=q, gamma=gamma, m_c=m_c, p_c=p_c,
        delta_p=delta_p, alpha=alpha, theta=theta, m_star=m_star,
    )


def _check_identities(e: Exponents) -> None:
    """Cross-validate constants computed through independent formulas."""
    ok = math.isclose(1.0 / e.p + 1.0 / e.q, 1.0, rel_tol=IDENTITY_RTOL)
    if not ok:
        raise ParameterError("conjugacy identity 1/p + 1/q = 1 failed")

    delta_alt = (e.p - 1.0) * (e.n * e.m + 1.0) + 1.0 - e.n
    if not math.isclose(e.delta_p, delta_alt, rel_tol=IDENTITY_RTOL, abs_tol=1e-12):
        raise ParameterError(
            f"scaling-rate identity failed: {e.delta_p} vs {delta_alt}"
        )

    alpha_alt = (2.0 - e.q) / 2.0 + e.q / (2.0 * (e.gamma - 1.0))
    if not math.isclose(e.alpha, alpha_alt, rel_tol=IDENTITY_RTOL, abs_tol=1e-12):
        raise ParameterError(
            f"weight-exponent identity failed: {e.alpha} vs {alpha_alt}"
        )


def validate_range(e: Exponents) -> RangeClass:
    """Classify the triple; total (never raises on a well-formed bundle).

    in-range             : m_c < m < m_c + 1/(n(p-1))
    displacement-convex  : m >= m_c + 1/(n(p-1))  (transport methods apply)
    mass-losing          : m <= m_c               (solutions vanish)
    """
    if e.m <= e.m_c:
        return RangeClass.MASS_LOSING
    if e.m >= e.range_upper:
        return RangeClass.DISPLACEMENT_CONVEX
    return RangeClass.IN_RANGE


def require_in_range(e: Exponents) -> Exponents:
    """Raise ParameterError unless validate_range reports in-range."""
    cls = validate_range(e)
    if cls is not RangeClass.IN_RANGE:
        raise ParameterError(
            f"(m={e.m}, p={e.p}, n={e.n}) classified {cls.value}; the solver "
            f"and diagnostics require m in ({e.m_c:.6g}, {e.range_upper:.6g})"
        )
    return e
