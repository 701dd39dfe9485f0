"""Rate extraction and theorem-level verification on diagnostic series.

A run produces a DiagnosticsSeries: sampled functionals, quotient extremes,
L1 distance, and a sparse set of full snapshots.  This module fits
exponential decay rates on auto-selected late-time windows, reconstructs the
theoretical lower bound on the entropy decay rate from measured comparison
constants and the computed spectral constant, and re-checks every inequality
in the comparison chain on stored snapshots with explicit slack.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import functionals as fn
from . import spectral
from .barenblatt import BarenblattProfile, measured_bounds
from .exponents import Exponents, ParameterError, derive
from .fields import RadialGrid
from .functionals import FunctionalSample, ReferenceProfile


class AnalysisError(RuntimeError):
    """Window policy failed: no usable fitting window in the series."""


CSV_COLUMNS = ("tau", "mass", "E_rel", "I_rel", "E_lin", "I_lin", "I0_lin",
               "I_eps", "I_gamma_eps", "L1_dist", "w_min", "w_max",
               "clipped_mass")


@dataclass(frozen=True)
class SeriesRow:
    tau: float
    mass: float
    sample: FunctionalSample
    l1_dist: float
    w_min: float
    w_max: float
    clipped_mass: float

    def csv_values(self) -> tuple[float, ...]:
        s = self.sample
        return (self.tau, self.mass, s.E_rel, s.I_rel, s.E_lin, s.I_lin,
                s.I0_lin, s.I_eps, s.I_gamma_eps, self.l1_dist, self.w_min,
                self.w_max, self.clipped_mass)


@dataclass
class DiagnosticsSeries:
    """Time series of every tracked functional plus sparse full snapshots."""

    exponents: Exponents
    grid: RadialGrid
    rows: list[SeriesRow]
    snapshots: list[tuple[float, np.ndarray]] = dc_field(default_factory=list)
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self) -> None:
        taus = [r.tau for r in self.rows]
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ParameterError("sample times must increase strictly")

    def column(self, name: str) -> np.ndarray:
        if name not in CSV_COLUMNS:
            raise ParameterError(f"unknown column '{name}'")
        idx = CSV_COLUMNS.index(name)
        return np.array([r.csv_values()[idx] for r in self.rows])

    @property
    def tau(self) -> np.ndarray:
        return self.column("tau")

    def reference(self) -> ReferenceProfile:
        prof = BarenblattProfile(self.exponents, self.meta["Dstar"])
        return ReferenceProfile(prof, self.grid)

    # -- fixed-schema CSV ------------------------------------------------

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for row in self.rows:
            buf.write(",".join(f"{x:.17g}" for x in row.csv_values()) + "\n")
        return buf.getvalue()

    def snapshot_csv(self, index: int) -> str:
        tau, values = self.snapshots[index]
        buf = io.StringIO()
        buf.write(f"# tau = {tau:.17g}\n")
        buf.write("r,u\n")
        for r, u in zip(self.grid.centers, values):
            buf.write(f"{r:.17g},{u:.17g}\n")
        return buf.getvalue()


def parse_series_csv(text: str, exponents: Exponents, grid: RadialGrid,
                     meta: dict | None = None) -> DiagnosticsSeries:
    """Rebuild a series from the fixed-schema CSV (snapshots separate)."""
    lines = [ln for ln in text.strip().splitlines() if ln]
    header = tuple(lines[0].split(","))
    if header != CSV_COLUMNS:
        raise ParameterError(f"unexpected CSV header {header}")
    rows = []
    for ln in lines[1:]:
        vals = [float(x) for x in ln.split(",")]
        rec = dict(zip(CSV_COLUMNS, vals))
        sample = FunctionalSample(
            E_rel=rec["E_rel"], I_rel=rec["I_rel"], E_lin=rec["E_lin"],
            I_lin=rec["I_lin"], I0_lin=rec["I0_lin"], I_eps=rec["I_eps"],
            I_gamma_eps=rec["I_gamma_eps"],
            eps=(meta or {}).get("eps", math.nan), ck_ratio=math.nan,
        )
        rows.append(SeriesRow(tau=rec["tau"], mass=rec["mass"], sample=sample,
                              l1_dist=rec["L1_dist"], w_min=rec["w_min"],
                              w_max=rec["w_max"],
                              clipped_mass=rec["clipped_mass"]))
    return DiagnosticsSeries(exponents=exponents, grid=grid, rows=rows,
                             meta=dict(meta or {}))


def parse_snapshot_csv(text: str) -> tuple[float, np.ndarray, np.ndarray]:
    lines = text.strip().splitlines()
    if not lines[0].startswith("# tau = "):
        raise ParameterError("snapshot CSV must start with '# tau = ...'")
    tau = float(lines[0].split("=", 1)[1])
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[2:]])
    return tau, data[:, 0], data[:, 1]


# ----------------------------------------------------------------------
# exponential / power-law fits
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    """Least-squares decay fit of log(value) on an auto-selected window."""

    rate: float
    intercept: float
    tau_a: float
    tau_b: float
    residual: float
    r_squared: float
    n_points: int
    flagged: bool = False
    note: str = ""


def _linear_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 0.0 if ss_tot <= 1e-300 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), math.sqrt(ss_res / x.size), r2


def fit_exponential(tau, values, min_points: int = 10, r2_min: float = 0.995,
                    floor_factor: float = 10.0) -> RateFit:
    """Fit value ~ exp(intercept - rate * tau) on the largest late suffix
    with r^2 >= r2_min.

    Nonpositive samples and any samples after the series stops decreasing
    (converged to the discretization floor) are trimmed first, with the fit
    flagged.  A series entirely at the floor returns a flagged NaN-rate
    sentinel rather than raising.
    """
    tau = np.asarray(tau, dtype=float)
    values = np.asarray(values, dtype=float)
    note = ""
    flagged = False

    pos = values > 0.0
    if not pos.all():
        k = int(np.argmin(pos))  # first nonpositive sample
        tau, values = tau[:k], values[:k]
        flagged, note = True, "hit zero/negative; fitted pre-floor prefix"
    if values.size >= 2:
        kmin = int(np.argmin(values))
        if kmin < values.size - 1:
            # decay stopped: treat the minimum as the floor, keep the clean prefix
            keep = (np.arange(values.size) <= kmin) \
                & (values > floor_factor * values[kmin])
            tau, values = tau[keep], values[keep]
            flagged, note = True, "converged to floor; fitted pre-floor prefix"
    if values.size < min_points:
        return RateFit(rate=math.nan, intercept=math.nan, tau_a=math.nan,
                       tau_b=math.nan, residual=math.nan, r_squared=0.0,
                       n_points=int(values.size), flagged=True,
                       note=note or "too few usable samples (values at floor)")

    logv = np.log(values)
    best = None
    for start in range(0, values.size - min_points + 1):
        slope, intercept, resid, r2 = _linear_fit(tau[start:], logv[start:])
        if r2 >= r2_min:
            best = (start, slope, intercept, resid, r2)
            break
        if best is None or r2 > best[4]:
            best = (start, slope, intercept, resid, r2)
    start, slope, intercept, resid, r2 = best
    if r2 < r2_min:
        flagged, note = True, (note + "; " if note else "") + \
            f"no suffix reached r2 >= {r2_min}"
    return RateFit(rate=-slope, intercept=intercept, tau_a=float(tau[start]),
                   tau_b=float(tau[-1]), residual=resid, r_squared=r2,
                   n_points=int(values.size - start), flagged=flagged, note=note)


def fit_powerlaw(t, values, min_points: int = 10, r2_min: float = 0.995) -> RateFit:
    """Log-log slope fit value ~ C t^{-rate}, same window policy as above."""
    t = np.asarray(t, dtype=float)
    mask = t > 0.0
    fit = fit_exponential(np.log(t[mask]), np.asarray(values, float)[mask],
                          min_points=min_points, r2_min=r2_min)
    return fit


def dissipation_identity_error(series: DiagnosticsSeries,
                               max_change: float = 0.25,
                               floor_factor: float = 1e3) -> dict:
    """Relative residual of dE/dtau = -I measured between sample pairs.

    The derivative is the finite difference of consecutive entropy samples
    against the midpoint Fisher value, so a pair is only meaningful when the
    cadence resolves the dynamics; pairs where the Fisher value itself jumps
    by more than max_change across the interval (the initial transient) are
    excluded.  If the series has plateaued (entropy floor reached), pairs
    within floor_factor of the floor are excluded as well.
    """
    tau = series.tau
    e_rel = series.column("E_rel")
    i_rel = series.column("I_rel")
    de = np.diff(e_rel) / np.diff(tau)
    imid = 0.5 * (i_rel[1:] + i_rel[:-1])
    change = np.abs(np.diff(i_rel)) / np.maximum(imid, 1e-300)
    usable = (change < max_change) & (imid > 0.0)
    kmin = int(np.argmin(e_rel))
    if kmin < e_rel.size - 1:  # decay stopped: a floor exists
        usable &= e_rel[:-1] > floor_factor * e_rel[kmin]
    if not usable.any():
        return {"max": math.nan, "median": math.nan, "pairs": 0}
    resid = np.abs(de[usable] + imid[usable]) / imid[usable]
    return {"max": float(resid.max()), "median": float(np.median(resid)),
            "pairs": int(usable.sum())}


# ----------------------------------------------------------------------
# theorem-level verification
# ----------------------------------------------------------------------

def _window_rows(series: DiagnosticsSeries, tau_a: float) -> list[SeriesRow]:
    return [r for r in series.rows if r.tau >= tau_a - 1e-12]


def measured_constants(series: DiagnosticsSeries, tau_a: float,
                       eps: float) -> fn.ComparisonConstants:
    """Comparison constants from the quotient range observed after tau_a,
    with eta measured as the snapshot maximum of the gradient quotient."""
    rows = _window_rows(series, tau_a)
    if not rows:
        raise AnalysisError(f"no samples at tau >= {tau_a}")
    e = series.exponents
    w0 = min(r.w_min for r in rows)
    w1 = max(r.w_max for r in rows)
    cc = fn.claim1_constants(e, measured_bounds(w0, w1))
    ref = series.reference()
    snaps = [(t, u) for t, u in series.snapshots if t >= tau_a - 1e-12]
    if not snaps:
        snaps = series.snapshots[-1:]
    eta = max(fn.phi_eps_max(u, ref, eps) for _, u in snaps)
    return fn.with_eta(cc, e, eta)


def rate_bound_from_constants(e: Exponents, cc: fn.ComparisonConstants,
                              beta_tilde_eps: float) -> float | None:
    """lambda_theo = (2 - kappa2 beta~_eps) / (c_high kappa1 beta~_eps).

    Returns None while kappa2 beta~_eps >= 2 (quotient range not yet
    contracted enough for the chain to produce a positive rate).
    """
    if cc.kappa2 * beta_tilde_eps >= 2.0:
        return None
    return (2.0 - cc.kappa2 * beta_tilde_eps) / (cc.c_high * cc.kappa1 * beta_tilde_eps)


def chain_onset(series: DiagnosticsSeries, eps: float, beta_tilde_eps: float,
                margin: float = 1.9) -> tuple[float, fn.ComparisonConstants] | None:
    """Earliest snapshot time tau0 whose trailing window gives constants with
    kappa2 beta~_eps <= margin (< 2), i.e. the measured onset after which the
    quotient range has contracted enough for the composed rate bound.

    Candidate onsets are the snapshot times (eta must be measurable on the
    window).  Returns (tau0, constants) or None if no window qualifies.
    """
    for tau0, _ in series.snapshots:
        cc = measured_constants(series, tau0, eps)
        if cc.kappa2 * beta_tilde_eps <= margin:
            return tau0, cc
    return None


def _check(name: str, ok: bool, slack: float) -> dict:
    return {"name": name, "pass": bool(ok), "slack": float(slack)}


def verify_theorem1(series: DiagnosticsSeries, gap: spectral.GapResult | None = None,
                    constants: fn.ComparisonConstants | None = None,
                    eps_sweep: tuple[float, ...] | None = None,
                    rate_margin: float = 0.10, l1_factor_tol: float = 0.15,
                    loglog_tol: float = 0.10) -> dict:
    """End-to-end decay verification on one converged sandwiched run.

    Checks: (a) monotone decay of the relative entropy; (b) a positive
    fitted entropy rate lambda_emp; (c) a reconstructed theoretical lower
    bound lambda_theo from measured constants and the spectral constant
    (best value over a small sweep of the regularization); (d) lambda_emp >=
    lambda_theo (1 - margin); (e) the L1 rate is half the entropy rate; (f)
    the original-variable L1 distance falls like t^{-lambda/(2 delta_p)}.
    """
    e = series.exponents
    tau = series.tau
    e_rel = series.column("E_rel")
    l1 = series.column("L1_dist")
    checks: list[dict] = []
    fits: list[dict] = []
    out: dict = {"constants": {}, "fits": fits, "checks": checks}

    # equilibrium runs sit at the floor; every distance-based check is moot
    if l1.max() <= 1e-10 * max(series.column("mass").max(), 1.0):
        checks.append(_check("at-floor (equilibrium run)", True, 0.0))
        out["constants"]["floor"] = float(l1.max())
        return out

    de = np.diff(e_rel)
    mono_slack = float(-de.max() / max(e_rel[0], 1e-300))
    checks.append(_check("entropy monotone decay", de.max() <= 1e-10 * e_rel[0],
                         mono_slack))

    fit_e = fit_exponential(tau, e_rel)
    fits.append({"column": "E_rel", **fit_e.__dict__})
    lam_emp = fit_e.rate
    checks.append(_check("lambda_emp positive with r2 >= 0.995",
                         (not fit_e.flagged) and lam_emp > 0.0
                         and fit_e.r_squared >= 0.995, fit_e.r_squared - 0.995))

    eps = series.meta.get("eps", 0.0)
    cc = constants or measured_constants(series, fit_e.tau_a, eps)
    out["constants"].update({
        "W0": cc.W0, "W1": cc.W1, "alpha0": cc.alpha0, "alpha1": cc.alpha1,
        "alpha2": cc.alpha2, "kappa0": cc.kappa0, "kappa1": cc.kappa1,
        "kappa2": cc.kappa2, "c_low": cc.c_low, "c_high": cc.c_high,
        "delta": cc.delta, "eta": cc.eta, "lambda_emp": lam_emp,
    })

    # spectral constant: given, or computed on the run's own grid; the
    # regularization is swept because the bound's eps-dependence is not
    # quantified a priori -- report the best reconstructed value.  For each
    # eps the constants are re-measured from the earliest trailing window
    # whose contracted quotient range admits the composed bound at all.
    prof = BarenblattProfile(e, series.meta["Dstar"])
    if eps_sweep is None:
        eps_sweep = (eps,) if e.p >= 2.0 else (0.5 * eps, eps, 2.0 * eps)
    best = None
    for eps_k in eps_sweep:
        if e.p < 2.0 and eps_k <= 0.0:
            continue
        if gap is not None and gap.eps is not None and math.isclose(eps_k, gap.eps):
            gk = gap
        else:
            gk = spectral.hardy_poincare_constant(prof, eps_k, series.grid,
                                                  ell_max=1)
        onset = chain_onset(series, eps_k, gk.beta_tilde)
        if onset is None:
            continue
        tau0_k, cc_k = onset
        lam_k = rate_bound_from_constants(e, cc_k, gk.beta_tilde)
        if lam_k is not None and (best is None or lam_k > best[0]):
            best = (lam_k, eps_k, gk.beta_tilde, tau0_k, cc_k)
    if best is None:
        checks.append(_check("lambda_theo reconstructable (kappa2 beta~ < 2)",
                             False, cc.kappa2))
        out["constants"]["lambda_theo"] = None
        return out
    lam_theo, eps_best, bt_best, tau0_best, cc_best = best
    out["constants"].update({
        "lambda_theo": lam_theo, "eps_best": eps_best,
        "beta_tilde_eps": bt_best, "chain_onset_tau": tau0_best,
        "W0_onset": cc_best.W0, "W1_onset": cc_best.W1,
        "kappa1_onset": cc_best.kappa1, "kappa2_onset": cc_best.kappa2,
        "eta_onset": cc_best.eta, "c_high_onset": cc_best.c_high,
    })
    checks.append(_check("lambda_theo reconstructable (kappa2 beta~ < 2)",
                         True, 2.0 - cc_best.kappa2 * bt_best))
    checks.append(_check(f"lambda_emp >= lambda_theo (1 - {rate_margin:g})",
                         lam_emp >= lam_theo * (1.0 - rate_margin),
                         lam_emp / lam_theo - (1.0 - rate_margin)))

    fit_l1 = fit_exponential(tau, l1)
    fits.append({"column": "L1_dist", **fit_l1.__dict__})
    ratio = 2.0 * fit_l1.rate / lam_emp if lam_emp > 0 else math.nan
    checks.append(_check(f"L1 rate = lambda_emp/2 within {l1_factor_tol:.0%}",
                         abs(ratio - 1.0) <= l1_factor_tol,
                         l1_factor_tol - abs(ratio - 1.0)))
    out["constants"]["l1_rate_over_half_lambda"] = ratio

    # original variables: tau -> t = (e^{d tau} - 1)/d, same L1 values.
    # The local log-log slope is -lambda (1 - e^{-d tau})/(2 d), so the
    # power-law regime needs d tau >~ 3 (mapping bias below 5%).
    d = e.delta_p
    t = (np.exp(d * tau) - 1.0) / d
    late = tau >= max(fit_e.tau_a, 3.0 / d)
    fit_orig = fit_powerlaw(t[late], l1[late], min_points=5)
    fits.append({"column": "L1_dist vs t (log-log)", **fit_orig.__dict__})
    target = lam_emp / (2.0 * d)
    slope_ratio = fit_orig.rate / target if target > 0 else math.nan
    checks.append(_check(f"original-variable slope = lambda/(2 delta_p) "
                         f"within {loglog_tol:.0%}",
                         abs(slope_ratio - 1.0) <= loglog_tol,
                         loglog_tol - abs(slope_ratio - 1.0)))
    out["constants"]["orig_slope_over_target"] = slope_ratio
    return out


def snapshot_inequalities(u: np.ndarray, ref: ReferenceProfile,
                          cc: fn.ComparisonConstants, beta_tilde_eps: float,
                          eps: float, eps_reg: float = 0.0) -> list[dict]:
    """All comparison-chain inequalities on one snapshot, with slack
    (rhs - lhs)/max(rhs, tiny) >= 0 meaning pass."""
    e = ref.exponents
    v = np.asarray(u, float) - ref.u_c
    E_rel = fn.relative_entropy(u, ref)
    I_rel = fn.fisher_information(u, ref, eps_reg)
    E_lin = fn.linear_entropy(v, ref, mean_tol=1e-6)
    eps_eff = eps if (eps > 0.0 or e.p >= 2.0) else ref.grid.h_min
    I_eps = fn.eps_linear_fisher(v, ref, eps_eff, mean_tol=1e-6)
    I_geps = fn.gamma_eps_fisher(u, ref, eps_eff)

    def rel_slack(lhs: float, rhs: float) -> float:
        return (rhs - lhs) / max(abs(rhs), 1e-300)

    checks = [
        _check("E_lin <= (beta~_eps/2) I_eps",
               E_lin <= 0.5 * beta_tilde_eps * I_eps * (1.0 + 1e-9),
               rel_slack(E_lin, 0.5 * beta_tilde_eps * I_eps)),
        _check("I_eps <= kappa0 I_gamma_eps + kappa2 E_lin",
               I_eps <= (cc.kappa0 * I_geps + cc.kappa2 * E_lin) * (1.0 + 1e-9),
               rel_slack(I_eps, cc.kappa0 * I_geps + cc.kappa2 * E_lin)),
        _check("I_gamma_eps <= delta I_rel",
               I_geps <= cc.delta * I_rel * (1.0 + 1e-9),
               rel_slack(I_geps, cc.delta * I_rel)),
        _check("c_low E_lin <= E_rel",
               cc.c_low * E_lin <= E_rel * (1.0 + 1e-9),
               rel_slack(cc.c_low * E_lin, E_rel)),
        _check("E_rel <= c_high E_lin",
               E_rel <= cc.c_high * E_lin * (1.0 + 1e-9),
               rel_slack(E_rel, cc.c_high * E_lin)),
    ]
    lam = rate_bound_from_constants(e, cc, beta_tilde_eps)
    if lam is None:
        checks.append({"name": "composed E_rel <= (1/lambda) I_rel",
                       "pass": None, "slack": math.nan,
                       "note": "deferred: kappa2 beta~_eps >= 2"})
    else:
        checks.append(_check("composed E_rel <= (1/lambda) I_rel",
                             E_rel <= I_rel / lam * (1.0 + 1e-9),
                             rel_slack(E_rel, I_rel / lam)))
    return checks


def verify_logsob_chain(series: DiagnosticsSeries,
                        gap: spectral.GapResult | None = None,
                        tau_min: float | None = None) -> dict:
    """Per-snapshot inequality suite on the late-time window.

    tau_min defaults to the start of the entropy fit window.  Snapshots for
    which the contracted quotient range still gives kappa2 beta~_eps >= 2
    are reported as deferred, not failed.
    """
    e = series.exponents
    eps = series.meta.get("eps", 0.0)
    eps_reg = series.meta.get("eps_reg", 0.0)
    eps_eff = eps if (eps > 0.0 or e.p >= 2.0) else series.grid.h_min
    prof = BarenblattProfile(e, series.meta["Dstar"])
    if gap is None:
        gap = spectral.hardy_poincare_constant(prof, eps_eff, series.grid, ell_max=1)
    if tau_min is None:
        onset = chain_onset(series, eps_eff, gap.beta_tilde)
        if onset is not None:
            tau_min = onset[0]
        else:
            fit_e = fit_exponential(series.tau, series.column("E_rel"))
            tau_min = fit_e.tau_a if math.isfinite(fit_e.tau_a) else series.rows[0].tau
    cc = measured_constants(series, tau_min, eps_eff)
    ref = series.reference()
    snaps = [(t, u) for t, u in series.snapshots if t >= tau_min - 1e-12]
    per_snapshot = []
    for t, u in snaps:
        checks = snapshot_inequalities(u, ref, cc, gap.beta_tilde, eps, eps_reg)
        per_snapshot.append({"tau": t, "checks": checks})
    deferred = cc.kappa2 * gap.beta_tilde >= 2.0
    return {
        "constants": {"W0": cc.W0, "W1": cc.W1, "kappa0": cc.kappa0,
                      "kappa1": cc.kappa1, "kappa2": cc.kappa2,
                      "delta": cc.delta, "eta": cc.eta,
                      "c_low": cc.c_low, "c_high": cc.c_high,
                      "beta_tilde_eps": gap.beta_tilde, "tau_min": tau_min,
                      "composed_deferred": bool(deferred)},
        "snapshots": per_snapshot,
    }
