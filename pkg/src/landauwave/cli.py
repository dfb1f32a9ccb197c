"""Command line entry point: ``landauwave <command> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings

import numpy as np

from . import cauchy_engine as ce
from .coefficients import MollifierSpec, OmegaSchedule, TimeDistribution
from .h_fourier import SpectralField, TruncationSpec
from .mode_solver import IntegratorConfig
from .spectral_basis import BasisParams
from .vws_harness import (
    SCENARIOS,
    EpsilonGrid,
    check_consistency,
    check_uniqueness_stability,
    export_reports,
    fit_moderateness,
    run_net,
    scenario,
)

log = logging.getLogger("landauwave")


class ConfigError(ValueError):
    pass


def _parse_truncation(text: str):
    try:
        j, n = (int(v) for v in text.split(":"))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected <j_max>:<n_max>, got {text!r}") from exc
    return j, n


def _random_data(trunc: TruncationSpec, params: BasisParams, rng: np.random.Generator):
    """Band-limited data with coefficients damped like (1 + n)^-2 on every retained entry."""
    damp = (1.0 + np.arange(trunc.n_max + 1)) ** -2.0
    arrs = []
    for _ in range(2):
        c = (rng.standard_normal(trunc.shape) + 1j * rng.standard_normal(trunc.shape)) * damp
        for comp in (1, 2):
            if comp not in trunc.components:
                c[comp - 1] = 0
        arrs.append(SpectralField(trunc, params, c))
    return arrs


def load_problem(cfg: dict, truncation=None, seed: int = 0) -> ce.CauchyProblem:
    """Build a CauchyProblem from a parsed configuration document."""
    try:
        T = float(cfg["T"])
        params = BasisParams(float(cfg.get("B", 1.0)))
        tr = cfg.get("truncation", {"j_max": 2, "n_max": 4})
        j_max, n_max = truncation or (int(tr["j_max"]), int(tr["n_max"]))
        data = cfg.get("data", [])
        forcing_cfg = cfg.get("forcing", [])
        comps = {1}
        if isinstance(data, list):
            comps |= {int(d.get("component", 1)) for d in data}
        comps |= {int(f.get("component", 1)) for f in forcing_cfg}
        trunc = TruncationSpec(j_max, n_max, tuple(sorted(comps)))
        a = TimeDistribution.from_dict(cfg["a"], T)
        q = TimeDistribution.from_dict(cfg.get("q", {"segments": [{"t_start": 0.0, "t_end": T, "poly_coeffs": [0.0]}]}), T)
        if data == "random":
            u0, u1 = _random_data(trunc, params, np.random.default_rng(seed))
        else:
            e0, e1 = {}, {}
            for d in data:
                key = (int(d.get("component", 1)), int(d["j"]), int(d["n"]))
                if not trunc.contains(*key):
                    continue  # dropped by a narrower --truncation
                e0[key] = complex(d.get("u0_re", 0.0), d.get("u0_im", 0.0))
                e1[key] = complex(d.get("u1_re", 0.0), d.get("u1_im", 0.0))
            u0 = SpectralField.from_entries(trunc, params, e0)
            u1 = SpectralField.from_entries(trunc, params, e1)
        forcing = tuple(
            ce.ForcingTerm(int(f.get("component", 1)), int(f["j"]), int(f["n"]),
                           complex(f.get("amplitude_re", 0.0), f.get("amplitude_im", 0.0)),
                           float(f.get("frequency", 0.0)),
                           TimeDistribution.from_dict(f["profile"], T) if "profile" in f else None)
            for f in forcing_cfg)
        return ce.CauchyProblem(cfg.get("variant", "CPa"), params, T, a, q, u0, u1, trunc,
                                float(cfg.get("s", 0.0)), forcing)
    except KeyError as exc:
        raise ConfigError(f"configuration is missing field {exc}") from exc


def _problem(args) -> tuple[ce.CauchyProblem, str]:
    if getattr(args, "name", None):
        trunc = TruncationSpec(*args.truncation) if args.truncation else None
        return scenario(args.name, trunc), args.name
    if not args.config:
        raise ConfigError("this command needs --config <file>")
    with open(args.config) as fh:
        cfg = json.load(fh)
    return load_problem(cfg, args.truncation, args.seed), os.path.basename(args.config)


def _integrator(args) -> IntegratorConfig:
    return IntegratorConfig(rel_tol=args.tol, abs_tol=args.tol * 1e-2)


def _header(args, label, p: ce.CauchyProblem) -> dict:
    return {"problem": {"source": label, "variant": p.variant, "B": p.params.B, "T": p.T, "s": p.s,
                        "truncation": [p.trunc.j_max, p.trunc.n_max]},
            "settings": {"schedule": args.schedule.label(), "eps_grid": list(args.eps_grid.values),
                         "tol": args.tol, "seed": args.seed}}


def cmd_solve(args) -> int:
    p, label = _problem(args)
    sol = ce.solve_classical(p, _integrator(args))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "solution.csv"), "w", newline="") as fh:
        fh.write(ce.solution_to_csv(sol))
    with open(os.path.join(args.out, "solution_norms.csv"), "w", newline="") as fh:
        fh.write(ce.norms_to_csv(sol))
    est = ce.estimate_check(sol, p)
    summary = _header(args, label, p)
    summary.update({"estimate": {"passed": est.passed, "measured_C": est.measured_C, "bound": est.bound},
                    "top_shell_fraction": sol.top_shell_mass,
                    "runtimes": {"unit": "rhs_evaluations", "total": sol.nfev}})
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"estimate {'passed' if est.passed else 'FAILED'}: C = {est.measured_C:.6g} (bound {est.bound:.6g})")
    return 0 if est.passed else 1


def cmd_net(args) -> int:
    p, label = _problem(args)
    _, diag = run_net(p, MollifierSpec(), args.schedule, args.eps_grid, _integrator(args))
    reports = [_header(args, label, p), diag]
    if diag.succeeded.sum() >= 4:
        mod = fit_moderateness(diag)
        reports.append(mod)
        print("moderateness " + " ".join(f"{k}={v:.4g}" for k, v in mod.exponents.items())
              + f" stable={mod.passed}")
    else:
        print("moderateness fit skipped: fewer than 4 successful eps points")
    export_reports(reports, args.out)
    return 0


def cmd_consistency(args) -> int:
    p, label = _problem(args)
    rep, diag = check_consistency(p, MollifierSpec(), args.schedule, args.eps_grid, _integrator(args))
    export_reports([_header(args, label, p), diag, rep], args.out)
    print(f"consistency {'ok' if rep.consistent else 'not established'}: ratio {rep.ratio:.4g}, "
          f"inversions {rep.inversions}")
    return 0 if rep.consistent else 1


def cmd_uniqueness(args) -> int:
    p, label = _problem(args)
    rep, diag = check_uniqueness_stability(p, MollifierSpec(), MollifierSpec.shifted(), args.schedule,
                                           args.eps_grid, _integrator(args))
    export_reports([_header(args, label, p), diag, rep], args.out)
    print(f"differences decreasing: {rep.decreasing} (inversions {rep.inversions})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON problem description")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--eps-grid", type=EpsilonGrid.parse, default=EpsilonGrid.from_powers(2, 12),
                        metavar="K_MIN:K_MAX", help="eps = 2^-k for k in K_MIN..K_MAX (default 2:12)")
    common.add_argument("--schedule", type=OmegaSchedule.parse, default=OmegaSchedule("log"),
                        metavar="log|power:P", help="mollifier width schedule (default log)")
    common.add_argument("--tol", type=float, default=1e-10, help="relative integrator tolerance")
    common.add_argument("--truncation", type=_parse_truncation, metavar="J_MAX:N_MAX")
    common.add_argument("--seed", type=int, default=0, help="seed for random data")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="landauwave", parents=[common],
                                     description="Landau-Hamiltonian wave equation experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, text in (("solve", cmd_solve, "classical solve with energy-estimate check"),
                           ("net", cmd_net, "regularised net and moderateness fit"),
                           ("consistency", cmd_consistency, "regularised net against the classical solution"),
                           ("uniqueness", cmd_uniqueness, "standard vs shifted mollifier nets")):
        sp = sub.add_parser(name, parents=[common], help=text)
        sp.set_defaults(func=fn)
    sp = sub.add_parser("scenario", parents=[common], help="run a preset through the net pipeline")
    sp.add_argument("name", choices=SCENARIOS)
    sp.set_defaults(func=cmd_net)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not 0 < args.tol <= 1e-2:
        parser.error("--tol must lie in (0, 1e-2]")
    try:
        with warnings.catch_warnings():
            if not args.verbose:
                warnings.simplefilter("ignore", ce.WideMollifierWarning)
            return args.func(args)
    except (ConfigError, ValueError, OSError, ce.PreconditionError) as exc:
        print(f"landauwave: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
