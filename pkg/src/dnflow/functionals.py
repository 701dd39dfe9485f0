"""Scalar functionals of a density relative to its equilibrium profile.

Everything here is a quadrature over a radial grid: the relative entropy and
its dissipation (relative Fisher information), the quadratic forms obtained
by linearizing at the equilibrium profile (plain, projected, regularized and
gamma-variant Fisher forms), the quotient-power algebra and comparison
constants that bound one functional by another, and the two pointwise
auxiliaries (the divergence of the regularized weight field, and the
two-point ratio controlling the dissipation comparison for p > 2).

Gradient-type integrals use the same centered edge differences as the solver
flux, so the discrete entropy dissipation identity closes; cell-type
integrals use the shell-volume midpoint rule.  For p < 2 the raw gradient
weight r^{(q-1)(p-2)} blows up at the origin: edge-based sums never evaluate
it at r = 0, which amounts to excluding the innermost ball (its measure is
recorded on the reference object).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .barenblatt import BarenblattProfile, SandwichBounds
from .exponents import Exponents, ParameterError
from .fields import DensityField, RadialGrid


def _values(u) -> np.ndarray:
    return u.values if isinstance(u, DensityField) else np.asarray(u, dtype=float)


def mobility(e: Exponents, s, eps_reg: float = 0.0):
    """Regularized radial mobility s (eps + |s|)^{p-2}.

    eps_reg = 0 reproduces grad c*(s) = s |s|^{p-2} (0 at s = 0); a positive
    eps_reg caps the singular factor |s|^{p-2} near flat gradients for p < 2.
    """
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    if eps_reg == 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(a > 0.0, s * a ** (e.p - 2.0), 0.0)
    else:
        out = s * (eps_reg + a) ** (e.p - 2.0)
    return out if out.ndim else float(out)


def mobility_derivative(e: Exponents, s, eps_reg: float = 0.0):
    """d/ds of the regularized mobility: (eps+|s|)^{p-3}(eps + (p-1)|s|) > 0."""
    s = np.asarray(s, dtype=float)
    a = np.abs(s)
    if eps_reg == 0.0:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(a > 0.0, (e.p - 1.0) * a ** (e.p - 2.0), np.inf if e.p < 2.0 else 0.0)
        if e.p == 2.0:
            out = np.ones_like(a)
    else:
        out = (eps_reg + a) ** (e.p - 3.0) * (eps_reg + (e.p - 1.0) * a)
    return out if out.ndim else float(out)


class ReferenceProfile:
    """Equilibrium profile frozen onto a grid, with cached quadrature data.

    Center arrays: u*, F'(u*), F''(u*), mu-density 1/F''(u*).
    Edge arrays (interior edges only): arithmetic means of u*, the discrete
    equilibrium gradient s* = Delta F'(u*)/Delta r (= -r^{q-1} + O(h^2)),
    and the analytic edge radii powers entering the weights.
    """

    def __init__(self, profile: BarenblattProfile, grid: RadialGrid):
        if grid.n != profile.exponents.n:
            raise ParameterError("grid dimension does not match exponents")
        self.profile = profile
        self.grid = grid
        self.exponents = profile.exponents
        e = self.exponents
        c = grid.centers
        self.u_c = profile.density(c)
        self.fpp_c = e.m * self.u_c ** (e.gamma - 2.0)
        self.fp_c = e.m * self.u_c ** (e.gamma - 1.0) / (e.gamma - 1.0)
        self.mu_c = 1.0 / self.fpp_c
        self.u_e = 0.5 * (self.u_c[1:] + self.u_c[:-1])
        self.s_e = np.diff(self.fp_c) / grid.dr_edge
        self.rq1_e = grid.r_edge ** (e.q - 1.0)
        self.rq1_c = c ** (e.q - 1.0)

    @cached_property
    def origin_exclusion(self) -> dict:
        """Measure of the innermost ball skipped by edge-based nu-integrals
        (relevant for p < 2, where the raw weight is singular at r = 0)."""
        g = self.grid
        return {
            "radius": float(g.edges[1]),
            "volume": float(g.volumes[0]),
            "mu_mass": float(g.volumes[0] * self.mu_c[0]),
        }

    def field(self) -> DensityField:
        return DensityField(self.grid, self.exponents, self.u_c.copy())

    def fprime(self, u: np.ndarray) -> np.ndarray:
        e = self.exponents
        with np.errstate(divide="ignore", over="ignore"):
            return e.m * u ** (e.gamma - 1.0) / (e.gamma - 1.0)


# ----------------------------------------------------------------------
# nonlinear functionals
# ----------------------------------------------------------------------

def relative_entropy(u, ref: ReferenceProfile) -> float:
    """Bregman distance sum omega [F(u) - F(u*) - F'(u*)(u - u*)] >= 0.

    Zero iff u = u* on the grid (F strictly convex).  A mass mismatch does
    not invalidate the quadrature; it is the caller's job to compare fields
    of equal mass when the value should be interpreted as a Lyapunov
    functional.
    """
    e = ref.exponents
    uu = _values(u)
    g = e.gamma
    with np.errstate(divide="ignore", over="ignore"):
        f_u = np.where(uu > 0.0, e.m * uu ** g / (g * (g - 1.0)), 0.0 if g > 0 else np.inf)
    f_star = e.m * ref.u_c ** g / (g * (g - 1.0))
    integrand = f_u - f_star - ref.fp_c * (uu - ref.u_c)
    return float(ref.grid.volumes @ integrand)


def fisher_information(u, ref: ReferenceProfile, eps_reg: float = 0.0) -> float:
    """Dissipation rate of the relative entropy along the flow.

    Edge sum of u~ (s_u - s*) (mob(s_u) - mob(s*)) over interior edges with
    the quadrature weight A_e dr_e, where s_u and s* are the centered
    differences of F'(u) and F'(u*).  With the same eps_reg as the solver
    this is exactly the semi-discrete -dE/dtau.  Nonnegative because the
    mobility is monotone; zero iff u = u* (equal masses).
    """
    e = ref.exponents
    uu = _values(u)
    if np.any(uu < 0.0):
        raise ParameterError("fisher_information requires a nonnegative density")
    s_u = np.diff(ref.fprime(np.maximum(uu, 1e-300))) / ref.grid.dr_edge
    u_e = 0.5 * (uu[1:] + uu[:-1])
    dmob = mobility(e, s_u, eps_reg) - mobility(e, ref.s_e, eps_reg)
    return float(ref.grid.evol_edge @ (u_e * (s_u - ref.s_e) * dmob))


def l1_distance(u, ref: ReferenceProfile) -> float:
    return float(ref.grid.volumes @ np.abs(_values(u) - ref.u_c))


def ck_ratio(u, ref: ReferenceProfile) -> float:
    """||u - u*||_1^2 / relative entropy; NaN sentinel at equilibrium."""
    ent = relative_entropy(u, ref)
    if ent <= 0.0:
        return math.nan
    return l1_distance(u, ref) ** 2 / ent


# ----------------------------------------------------------------------
# linearized functionals (v = u - u*, zero mean by mass conservation)
# ----------------------------------------------------------------------

def linear_entropy(v, ref: ReferenceProfile, mean_tol: float = 1e-8) -> float:
    """Weighted L2 norm (1/2) sum omega v^2 F''(u*) of a zero-mean bump."""
    vv = _values(v)
    _require_zero_mean(vv, ref, mean_tol)
    return 0.5 * float(ref.grid.volumes @ (vv * vv * ref.fpp_c))


def _require_zero_mean(vv: np.ndarray, ref: ReferenceProfile, tol: float) -> None:
    mean = float(ref.grid.volumes @ vv)
    scale = float(ref.grid.volumes @ np.abs(vv))
    # a perturbation that is itself roundoff-level against the profile mass
    # is trivially zero-mean
    floor = 1e-13 * float(ref.grid.volumes @ ref.u_c)
    if abs(mean) > tol * scale and abs(mean) > floor:
        raise ParameterError(
            f"perturbation must have zero mean (got {mean:.3e} against "
            f"L1 scale {scale:.3e})"
        )


def linear_fisher(v, ref: ReferenceProfile, mean_tol: float = 1e-8) -> tuple[float, float]:
    """Quadratic forms (I, I0) of the linearized dissipation.

    I  = sum over edges of |d g/d r|^2 u* r^{(q-1)(p-2)},  g = v F''(u*);
    I0 is the same with the gradient projected on the radial weight
    direction, which in radial symmetry is no projection at all, so
    I0 = I here (the Cauchy-Schwarz bound I0 <= I holds with equality).
    For p < 2 the singular weight makes this the origin-excluded value.
    """
    vv = _values(v)
    _require_zero_mean(vv, ref, mean_tol)
    e = ref.exponents
    w = np.diff(vv * ref.fpp_c) / ref.grid.dr_edge
    weight = ref.u_e * ref.rq1_e ** (e.p - 2.0)
    ii = float(ref.grid.evol_edge @ (w * w * weight))
    return ii, ii


def eps_linear_fisher(v, ref: ReferenceProfile, eps: float, mean_tol: float = 1e-8) -> float:
    """Regularized linearized Fisher form with weight u* (eps + r^{q-1})^{p-2}.

    Finite down to the origin edge for every eps > 0; for p >= 2, eps = 0
    reproduces linear_fisher exactly.
    """
    e = ref.exponents
    if eps <= 0.0 and e.p < 2.0:
        raise ParameterError("eps > 0 required for p < 2 (singular origin weight)")
    vv = _values(v)
    _require_zero_mean(vv, ref, mean_tol)
    w = np.diff(vv * ref.fpp_c) / ref.grid.dr_edge
    weight = ref.u_e * (eps + ref.rq1_e) ** (e.p - 2.0)
    return float(ref.grid.evol_edge @ (w * w * weight))


def gamma_eps_fisher(u, ref: ReferenceProfile, eps: float) -> float:
    """Gamma-variant regularized form: the squared gradient of
    F'(u) - F'(u*) against the weight u* (eps + r^{q-1})^{p-2}."""
    e = ref.exponents
    if eps < 0.0 or (eps == 0.0 and e.p < 2.0):
        raise ParameterError("eps > 0 required for p < 2 (singular origin weight)")
    uu = np.maximum(_values(u), 1e-300)
    dG = np.diff(ref.fprime(uu)) / ref.grid.dr_edge - ref.s_e
    weight = ref.u_e * (eps + ref.rq1_e) ** (e.p - 2.0)
    return float(ref.grid.evol_edge @ (dG * dG * weight))


def phi_eps_max(u, ref: ReferenceProfile, eps: float) -> float:
    """Trajectory monitor |grad F'(u)| / (eps + |grad F'(u*)|), max over edges.

    Its running maximum along a run is the measured bound eta entering the
    dissipation-comparison constant for 1 < p < 2.
    """
    uu = np.maximum(_values(u), 1e-300)
    s_u = np.diff(ref.fprime(uu)) / ref.grid.dr_edge
    return float(np.max(np.abs(s_u) / (eps + ref.rq1_e)))


def grad_quotient_max(u, ref: ReferenceProfile, r_min: float = 1.0) -> float:
    """max over edges with r > r_min of |d w/d r| r / w, w = u/u*.

    Bounded along sandwiched runs (far-field gradient control); monitored,
    never asserted against a particular constant.
    """
    uu = _values(u)
    w_c = uu / ref.u_c
    dw = np.diff(w_c) / ref.grid.dr_edge
    w_e = 0.5 * (w_c[1:] + w_c[:-1])
    mask = ref.grid.r_edge > r_min
    if not mask.any():
        return math.nan
    vals = np.abs(dw[mask]) * ref.grid.r_edge[mask] / w_e[mask]
    return float(vals.max())


@dataclass(frozen=True)
class FunctionalSample:
    """One snapshot of every tracked functional (all finite and >= 0)."""

    E_rel: float
    I_rel: float
    E_lin: float
    I_lin: float
    I0_lin: float
    I_eps: float
    I_gamma_eps: float
    eps: float
    ck_ratio: float
    phi_eps_max: float = math.nan
    grad_quotient_max: float = math.nan


def sample_functionals(u, ref: ReferenceProfile, eps: float, eps_reg: float = 0.0,
                       mean_tol: float = 1e-6) -> FunctionalSample:
    """Evaluate the full functional battery for one field."""
    uu = _values(u)
    v = uu - ref.u_c
    e = ref.exponents
    eps_eff = eps if (eps > 0.0 or e.p >= 2.0) else ref.grid.h_min
    i_lin, i0_lin = linear_fisher(v, ref, mean_tol)
    return FunctionalSample(
        E_rel=relative_entropy(uu, ref),
        I_rel=fisher_information(uu, ref, eps_reg),
        E_lin=linear_entropy(v, ref, mean_tol),
        I_lin=i_lin,
        I0_lin=i0_lin,
        I_eps=eps_linear_fisher(v, ref, eps_eff, mean_tol),
        I_gamma_eps=gamma_eps_fisher(uu, ref, eps_eff),
        eps=eps_eff,
        ck_ratio=ck_ratio(uu, ref),
        phi_eps_max=phi_eps_max(uu, ref, eps_eff),
        grad_quotient_max=grad_quotient_max(uu, ref),
    )


# ----------------------------------------------------------------------
# quotient-power algebra and comparison constants
# ----------------------------------------------------------------------

def h_k(w, k: float):
    """h_k(w) = (w^{k-1} - 1)/(k - 1); h_2(w) = w - 1.  Requires w > 0."""
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0.0):
        raise ParameterError("h_k requires w > 0")
    if k == 2.0:
        out = w - 1.0
    else:
        out = (w ** (k - 1.0) - 1.0) / (k - 1.0)
    return out if out.ndim else float(out)


def _endpoint_ratio(W: float, gamma: float) -> float:
    # ((gamma-1)(W-1)/(W^{gamma-1}-1))^2 -> 1 as W -> 1
    if abs(W - 1.0) < 1e-9:
        return 1.0
    return ((gamma - 1.0) * (W - 1.0) / (W ** (gamma - 1.0) - 1.0)) ** 2


@dataclass(frozen=True)
class ComparisonConstants:
    """Constants tying linearized and nonlinear functionals together on a
    quotient range [W0, W1].

    alpha0/alpha1 are the endpoint values of (h_2/h_gamma)^2, alpha2 bounds
    (h_2'/h_gamma')^2, kappa0 = max(alpha1, alpha2), and kappa2 collects the
    divergence bound n + 2(q-2).  c_low/c_high are the two-sided entropy
    comparison constants c_low E_lin <= E_rel <= c_high E_lin; the Taylor
    argument gives (W1^{gamma-2}, W0^{gamma-2}) since F''(s u) =
    s^{gamma-2} F''(u) and gamma - 2 < 0.  eta, delta, kappa1 are filled in
    once the trajectory bound on the gradient quotient is measured.
    """

    W0: float
    W1: float
    alpha0: float
    alpha1: float
    alpha2: float
    kappa0: float
    kappa2: float
    c_low: float
    c_high: float
    divbound: float
    eta: float = math.nan
    delta: float = math.nan
    kappa1: float = math.nan


def claim1_constants(e: Exponents, bounds: SandwichBounds) -> ComparisonConstants:
    """Comparison constants from a quotient range 0 < W0 <= 1 <= W1."""
    W0, W1 = bounds.W0, bounds.W1
    g = e.gamma
    alpha0 = _endpoint_ratio(W0, g)
    alpha1 = _endpoint_ratio(W1, g)
    alpha2 = W1 ** (2.0 * (2.0 - g))
    kappa0 = max(alpha1, alpha2)
    divb = e.n + 2.0 * (e.q - 2.0)
    kappa2 = 2.0 * (kappa0 / alpha0 - 1.0) * (1.0 - g) * divb
    return ComparisonConstants(
        W0=W0, W1=W1, alpha0=alpha0, alpha1=alpha1, alpha2=alpha2,
        kappa0=kappa0, kappa2=kappa2,
        c_low=W1 ** (g - 2.0), c_high=W0 ** (g - 2.0), divbound=divb,
    )


def claim2_delta(e: Exponents, W0: float, eta: float | None = None) -> float:
    """Constant delta with I_gamma^(eps) <= delta * I_rel.

    1 < p < 2: (1/W0) max(p eta^{2-p}, q, 2 gamma (n + 2(q-2)) / n) with the
    measured gradient-quotient bound eta.  p > 2: 2/W0, from the two-point
    ratio bound >= 1/2 together with u >= W0 u*.
    """
    if not 0.0 < W0 <= 1.0 + 1e-12:
        raise ParameterError(f"W0 must lie in (0, 1], got {W0}")
    if e.p < 2.0:
        if eta is None or not eta > 0.0:
            raise ParameterError("p < 2 requires the measured eta > 0")
        return max(e.p * eta ** (2.0 - e.p), e.q,
                   2.0 * e.gamma * (e.n + 2.0 * (e.q - 2.0)) / e.n) / W0
    return 2.0 / W0


def with_eta(cc: ComparisonConstants, e: Exponents, eta: float) -> ComparisonConstants:
    """Fill in the trajectory-measured eta and the derived delta, kappa1."""
    delta = claim2_delta(e, cc.W0, eta if e.p < 2.0 else None)
    return replace(cc, eta=eta, delta=delta, kappa1=delta * cc.kappa0)


def claim1_pointwise_bounds(e: Exponents, bounds: SandwichBounds, num: int = 2001) -> dict:
    """Dense sweep of the quotient-power inequalities on [W0, W1].

    Returns the worst slack of alpha0 h_gamma^2 <= h_2^2 <= alpha1 h_gamma^2
    and of h_2'^2 <= alpha2 h_gamma'^2 (all should be >= 0 up to roundoff).
    """
    cc = claim1_constants(e, bounds)
    w = np.linspace(bounds.W0, bounds.W1, num)
    hg2 = h_k(w, e.gamma) ** 2
    h22 = h_k(w, 2.0) ** 2
    lower = h22 - cc.alpha0 * hg2
    upper = cc.alpha1 * hg2 - h22
    dh = 1.0 - cc.alpha2 * w ** (2.0 * (e.gamma - 2.0))  # h2'^2 - a2 hg'^2, sign flipped
    return {
        "lower_min": float(lower.min()),
        "upper_min": float(upper.min()),
        "derivative_min": float((-dh).min()),
    }


# ----------------------------------------------------------------------
# pointwise auxiliaries
# ----------------------------------------------------------------------

def div_weight(r, eps: float, e: Exponents):
    """div(x |x|^{q-2} (eps + |x|^{q-1})^{p-2}) in closed form.

    Using (q-1)(p-1) = 1 the whole expression collapses to a function of
    t = eps / r^{q-1} alone:

        (1 + t)^{p-3} (n + (n + q - 2) t),

    so at eps = 0 the value is the constant n, and the absolute value stays
    below n + 2(q-2) on the range 1 < p < 2.
    """
    if eps < 0.0:
        raise ParameterError("eps must be nonnegative")
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0.0):
        raise ParameterError("div_weight requires r > 0")
    t = eps / r ** (e.q - 1.0)
    out = (1.0 + t) ** (e.p - 3.0) * (e.n + (e.n + e.q - 2.0) * t)
    return out if out.ndim else float(out)


def fp_ratio(r, x, p: float):
    """Two-point dissipation ratio (1 + r^p - (r + r^{p-1}) x)/(1 + r^2 - 2 r x).

    Defined for r >= 0 and x in [-1, 1] except at (r, x) = (1, 1), where the
    denominator vanishes (the limit along x = 1 is p - 1).  Identically 1
    when p = 2; for p > 2 it stays >= 1 at x = 1 and >= 1/2 everywhere.
    """
    r = np.asarray(r, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0 + 1e-12):
        raise ParameterError("fp_ratio requires x in [-1, 1]")
    denom = 1.0 + r * r - 2.0 * r * x
    if np.any(denom == 0.0):
        raise ParameterError("fp_ratio is singular at (r, x) = (1, 1)")
    num = 1.0 + r ** p - (r + r ** (p - 1.0)) * x
    out = num / denom
    return out if out.ndim else float(out)


def H_ratio_pair(a, astar, p: float):
    """H/|a*|^{p-2} from raw radial gradients a = dF'(u)/dr, a* = dF'(u*)/dr.

    H = (a - a*)(grad c*(a) - grad c*(a*)) / (a - a*)^2; division by
    |a*|^{p-2} reduces it to fp_ratio(|a|/|a*|, sign(a a*)).  Both paths are
    computed from the same inputs and agree to roundoff.
    """
    a = np.asarray(a, dtype=float)
    astar = np.asarray(astar, dtype=float)
    if np.any(astar == 0.0):
        raise ParameterError("H_ratio_pair requires a* != 0")
    diff = a - astar
    if np.any(diff == 0.0):
        raise ParameterError("H_ratio_pair requires a != a* (set K)")
    mob = lambda z: z * np.abs(z) ** (p - 2.0)
    h = diff * (mob(a) - mob(astar)) / diff ** 2
    out = h / np.abs(astar) ** (p - 2.0)
    return out if out.ndim else float(out)


def H_ratio_edges(u, ref: ReferenceProfile, tol: float = 1e-13) -> np.ndarray:
    """H/|grad F'(u*)|^{p-2} on every interior edge in the set K.

    Uses the discrete edge gradients; edges where the two gradients agree to
    within tol (relative) are dropped (outside K).
    """
    uu = np.maximum(_values(u), 1e-300)
    s_u = np.diff(ref.fprime(uu)) / ref.grid.dr_edge
    mask = np.abs(s_u - ref.s_e) > tol * (np.abs(ref.s_e) + np.abs(s_u))
    if not mask.any():
        return np.empty(0)
    return np.asarray(
        H_ratio_pair(s_u[mask], ref.s_e[mask], ref.exponents.p), dtype=float
    ).reshape(-1)
