"""Command-line entry point: profile | simulate | spectrum | rates | verify | check.

Every command takes a config file (-c/--config) and writes deterministic
artifacts into the config's output.path (CSV for time series and profiles,
JSON for reports; floats at 17 significant digits; sorted JSON keys).  The
config hash and seed ride along in every JSON report for provenance.

Exit codes: 0 success, 2 validation error (bad config, missing inputs),
3 numerical failure (NaN, non-convergence, step underflow), 4 verification
failure (an inequality check failed beyond its slack).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, spectral
from .barenblatt import BarenblattProfile, match_grid_mass
from .config import ConfigError, RunConfig, load_config
from .exponents import ParameterError, derive, require_in_range, validate_range
from .fields import build_grid
from .functionals import ReferenceProfile
from .solver import NumericalError, simulate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VERIFY = 4


class VerificationFailure(RuntimeError):
    """At least one report check came back false."""


def _fmt(x) -> str:
    return f"{x:.17g}" if isinstance(x, float) else str(x)


def _provenance(cfg: RunConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "seed": cfg.seed}


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2,
                               default=_json_default) + "\n")


def _exponent_header(cfg: RunConfig) -> dict:
    e = derive(cfg.m, cfg.p, cfg.n)
    return {
        "m": e.m, "p": e.p, "n": e.n, "q": e.q, "gamma": e.gamma,
        "m_c": e.m_c, "p_c": e.p_c, "delta_p": e.delta_p, "alpha": e.alpha,
        "theta": e.theta, "m_star": None if math.isnan(e.m_star) else e.m_star,
        "range": validate_range(e).value,
    }


def cmd_profile(cfg: RunConfig, out: Path) -> int:
    e = require_in_range(derive(cfg.m, cfg.p, cfg.n))
    grid = build_grid(cfg.n, cfg.grid_r_max, cfg.grid_cells, cfg.grid_stretch)
    from .solver import InitialData, build_initial_data

    init = InitialData(kind=cfg.init_shape, D0=cfg.init_D0, D1=cfg.init_D1,
                       r0=cfg.init_r0, width=cfg.init_width,
                       amplitude=cfg.init_amplitude, mode=cfg.init_mode)
    u0 = build_initial_data(e, grid, init)
    star = match_grid_mass(e, grid.centers, grid.volumes, u0.mass)
    lo = BarenblattProfile(e, cfg.init_D0)
    hi = BarenblattProfile(e, cfg.init_D1)
    eps = cfg.resolved_eps(e.p)
    eps_eff = eps if (eps > 0.0 or e.p >= 2.0) else grid.h_min
    lines = ["r,u_Dstar,u_D0,u_D1,mu_density,nu_eps_density"]
    for r in grid.centers:
        lines.append(",".join(_fmt(float(x)) for x in (
            r, star.density(r), lo.density(r), hi.density(r),
            star.mu_density(r), star.nu_density(r, eps_eff))))
    (out / "profile.csv").write_text("\n".join(lines) + "\n")
    _write_json(out / "profile_meta.json", {
        "exponents": _exponent_header(cfg), "Dstar": star.D,
        "mass": u0.mass, "eps": eps_eff, "provenance": _provenance(cfg),
    })
    return EXIT_OK


def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    series = simulate(cfg)
    (out / "series.csv").write_text(series.to_csv())
    snapdir = out / "snapshots"
    snapdir.mkdir(exist_ok=True)
    for i in range(len(series.snapshots)):
        (snapdir / f"snapshot_{i:04d}.csv").write_text(series.snapshot_csv(i))
    _write_json(out / "meta.json", {
        "exponents": _exponent_header(cfg), "run": series.meta,
        "provenance": _provenance(cfg),
    })
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, out: Path) -> int:
    e = require_in_range(derive(cfg.m, cfg.p, cfg.n))
    grid = build_grid(cfg.n, cfg.grid_r_max, cfg.grid_cells, cfg.grid_stretch)
    from .solver import InitialData, build_initial_data

    init = InitialData(kind=cfg.init_shape, D0=cfg.init_D0, D1=cfg.init_D1,
                       r0=cfg.init_r0, width=cfg.init_width,
                       amplitude=cfg.init_amplitude, mode=cfg.init_mode)
    u0 = build_initial_data(e, grid, init)
    prof = match_grid_mass(e, grid.centers, grid.volumes, u0.mass)
    eps = cfg.resolved_spectral_eps(e.p)
    gap = spectral.hardy_poincare_constant(
        prof, eps, grid, ell_max=cfg.spectral_ell_max, compute_refinement=True)
    prob0 = spectral.assemble(prof, eps, grid, ell=0)
    audit = spectral.variational_audit(prob0, count=50, seed=cfg.seed)
    _write_json(out / "spectrum.json", {
        "exponents": _exponent_header(cfg),
        "Dstar": prof.D, "eps": eps,
        "sector_eigenvalues": {str(k): v for k, v in
                               gap.sector_eigenvalues.items()},
        "beta_tilde": gap.beta_tilde, "beta": gap.beta,
        "beta_radial": gap.beta_radial, "argmin_ell": gap.argmin_ell,
        "refinement_delta": gap.refinement_delta,
        "variational_audit": audit,
        "provenance": _provenance(cfg),
    })
    return EXIT_OK


def _load_series(cfg: RunConfig, out: Path) -> analysis.DiagnosticsSeries:
    series_path = out / "series.csv"
    meta_path = out / "meta.json"
    if not series_path.exists() or not meta_path.exists():
        raise ConfigError(
            f"no simulation outputs under {out} (run 'simulate' first)",
            key="output.path")
    meta = json.loads(meta_path.read_text())["run"]
    e = require_in_range(derive(cfg.m, cfg.p, cfg.n))
    grid = build_grid(cfg.n, cfg.grid_r_max, cfg.grid_cells, cfg.grid_stretch)
    series = analysis.parse_series_csv(series_path.read_text(), e, grid, meta)
    snapdir = out / "snapshots"
    if snapdir.is_dir():
        for f in sorted(snapdir.glob("snapshot_*.csv")):
            tau, _, u = analysis.parse_snapshot_csv(f.read_text())
            series.snapshots.append((tau, u))
    return series


def cmd_rates(cfg: RunConfig, out: Path) -> int:
    series = _load_series(cfg, out)
    fits = []
    for column in ("E_rel", "E_lin", "L1_dist"):
        fit = analysis.fit_exponential(series.tau, series.column(column))
        fits.append({"column": column, **fit.__dict__})
    err = analysis.dissipation_identity_error(series)
    _write_json(out / "rates.json", {
        "exponents": _exponent_header(cfg), "fits": fits,
        "dissipation_identity": err, "provenance": _provenance(cfg),
    })
    return EXIT_OK


def _failed_checks(checks: list[dict]) -> list[str]:
    return [c["name"] for c in checks if c["pass"] is False]


def cmd_verify(cfg: RunConfig, out: Path) -> int:
    series = _load_series(cfg, out)
    report = analysis.verify_theorem1(series)
    report["provenance"] = _provenance(cfg)
    chain = analysis.verify_logsob_chain(series)
    report["logsob_chain"] = chain
    _write_json(out / "verify.json", report)
    failed = _failed_checks(report["checks"])
    for snap in chain["snapshots"]:
        failed += [f"{c['name']} @ tau={snap['tau']:.3g}"
                   for c in snap["checks"] if c["pass"] is False]
    if failed:
        raise VerificationFailure("; ".join(failed[:8]))
    return EXIT_OK


def cmd_check(cfg: RunConfig, out: Path) -> int:
    series = _load_series(cfg, out)
    chain = analysis.verify_logsob_chain(series)
    chain["provenance"] = _provenance(cfg)
    _write_json(out / "check.json", chain)
    failed = []
    for snap in chain["snapshots"]:
        failed += [f"{c['name']} @ tau={snap['tau']:.3g}"
                   for c in snap["checks"] if c["pass"] is False]
    if failed:
        raise VerificationFailure("; ".join(failed[:8]))
    return EXIT_OK


COMMANDS = {
    "profile": cmd_profile,
    "simulate": cmd_simulate,
    "spectrum": cmd_spectrum,
    "rates": cmd_rates,
    "verify": cmd_verify,
    "check": cmd_check,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="dnflow",
        description="doubly nonlinear diffusion laboratory in self-similar "
                    "variables")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("-c", "--config", required=True,
                        help="path to a key=value config file")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config)
        cfg.validate()
        out = cfg.resolved_output_path()
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        print(f"config error ({exc.key}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ParameterError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except VerificationFailure as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
