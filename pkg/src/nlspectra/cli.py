"""Command-line interface: batch runs driven by TOML configurations.

Subcommands:
    spectrum      both spectral routes; SpectrumResult JSON + eigenfunction CSV
    criteria      full existence-criteria report (JSON + text)
    convergence   spatial and temporal refinement study tables
    floquet-map   CSV of (node coordinates, lambda(x), h(x))

Exit codes: 0 success; 1 configuration error; 2 hypothesis-validation
failure; 3 numerical failure; 4 resource cap exceeded.  Error lines are
machine-parsable with an "ERROR:" prefix on stderr.

Outputs are deterministic: fixed iteration orders, no wall-clock or
randomized content (the --seed flag is recorded in output metadata for
drivers that layer randomized suites on top).
"""

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import criteria as cr
from .config import (ConfigError, build_problem, load_config, with_overrides)
from .coupling import CouplingError
from .discretization import DiscretizationError
from .expressions import ExpressionError
from .floquet import FloquetError
from .spectral_engine import (
    HypothesisViolation, SpectralError, birman_schwinger_eigenvalue,
    principal_spectrum_point,
)
from .util import thread_count

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_RESOURCE = 4

_CONFIG_ERRORS = (ConfigError, ExpressionError, CouplingError,
                  DiscretizationError, OSError)


class ResourceCapExceeded(RuntimeError):
    pass


def _error(msg):
    print(f"ERROR: {msg}", file=sys.stderr)


def _write_json(path, payload):
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=True)
    Path(path).write_text(text + "\n", encoding="utf-8")


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def _coord_header(dim):
    return [f"x{l + 1}" for l in range(dim)]


def _hypotheses_dict(report):
    return {
        "cooperative": report.cooperative,
        "irreducible": report.irreducible,
        "min_offdiagonal": report.min_offdiagonal,
        "samples_checked": report.samples_checked,
        "method": report.method,
    }


def _spectrum_payload(problem, seed):
    system = problem.system
    mono = principal_spectrum_point(
        system, tol=problem.config.numerics.power_tol,
        max_iter=problem.config.numerics.power_max_iter,
        dense_cap=problem.config.numerics.dense_cap,
    )
    pw = system.pointwise_field()
    bs = birman_schwinger_eigenvalue(
        system, bracket_tol=problem.config.numerics.bracket_tol,
    )
    bs_block = {
        "status": bs.status,
        "alpha_star": bs.alpha_star,
        "max_h": bs.max_h,
        "probes": len(bs.probes),
        "floor": bs.floor,
    }
    agreement = None
    if bs.status == "eigenvalue":
        bs_block["residual"] = bs.result.residual
        bs_block["min_component"] = bs.result.min_component
        agreement = abs(bs.alpha_star - mono.lambda_principal)
    payload = {
        "command": "spectrum",
        "seed": seed,
        "fingerprint": system.fingerprint,
        "lambda_principal": mono.lambda_principal,
        "max_h": pw.max_h,
        "min_h": pw.min_h,
        "margin": mono.lambda_principal - pw.max_h,
        "eps_grid": system.eps_grid,
        "monodromy": mono.scalars(),
        "birman_schwinger": bs_block,
        "route_agreement": agreement,
        "hypotheses": _hypotheses_dict(system.hypotheses),
    }
    return payload, mono


def cmd_spectrum(config, out_dir, seed=None):
    problem = build_problem(config)
    payload, mono = _spectrum_payload(problem, seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "spectrum.json", payload)
    if config.output.eigenfunction_csv:
        grid = problem.grid
        rows = []
        for m in range(grid.size):
            for comp in range(problem.field.k):
                rows.append(
                    [m] + [repr(float(c)) for c in grid.nodes[m]]
                    + [comp + 1, repr(float(mono.psi0[m, comp]))]
                )
        _write_csv(out / "eigenfunction.csv",
                   ["node"] + _coord_header(grid.dim) + ["component", "value"],
                   rows)
    return EXIT_OK


def cmd_criteria(config, out_dir, seed=None, threads=1):
    problem = build_problem(config)
    system = problem.system
    mono = principal_spectrum_point(
        system, tol=config.numerics.power_tol,
        max_iter=config.numerics.power_max_iter,
        dense_cap=config.numerics.dense_cap,
    )
    pw = system.pointwise_field()
    dim = problem.domain.dim
    verdict = cr.check_existence(mono, pw, config.numerics.margin_tol)
    notes = []
    try:
        l1 = cr.check_l1_divergence(pw, problem.grid, dim)
    except cr.CriteriaError as e:
        l1 = None
        notes.append(f"l1 divergence fit unavailable: {e}")
    try:
        vanishing = cr.check_vanishing_condition(pw, problem.grid, dim)
    except cr.CriteriaError as e:
        vanishing = None
        notes.append(f"vanishing condition unavailable: {e}")
    oscillation = cr.check_oscillation_bound(
        pw, problem.kernel, problem.grid, problem.domain,
        operator=system.operator,
    )
    sweep = None
    if config.command.deltas:
        sweep = cr.check_small_delta(config, config.command.deltas,
                                     threads=threads)
    report = cr.assemble_report(
        verdict, pw, mono, l1=l1, vanishing=vanishing,
        oscillation=oscillation, sweep=sweep, eps_grid=system.eps_grid,
        notes=notes,
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"command": "criteria", "seed": seed, **report.to_dict()}
    _write_json(out / "criteria.json", payload)
    (out / "criteria.txt").write_text(report.render_text() + "\n",
                                      encoding="utf-8")
    print(report.render_text())
    return EXIT_OK


def _refinement_table(config, mode, levels):
    rows = []
    lam_prev = None
    diff_prev = None
    for level in range(levels):
        factor = 2 ** level
        if mode == "space":
            res = tuple(r * factor for r in config.numerics.resolution)
            cfg = with_overrides(config, resolution=res)
        else:
            cfg = with_overrides(
                config, time_steps=config.numerics.time_steps * factor)
        state = int(np.prod(cfg.numerics.resolution)) * cfg.coupling.k
        if state > cfg.numerics.max_state_dim:
            raise ResourceCapExceeded(
                f"{mode} level {level}: state dimension {state} exceeds "
                f"max_state_dim {cfg.numerics.max_state_dim}"
            )
        problem = build_problem(cfg)
        mono = principal_spectrum_point(
            problem.system, tol=cfg.numerics.power_tol,
            max_iter=cfg.numerics.power_max_iter,
            dense_cap=cfg.numerics.dense_cap, gap=False,
        )
        lam = mono.lambda_principal
        diff = None if lam_prev is None else lam - lam_prev
        order = None
        if diff_prev is not None and diff is not None and diff != 0.0:
            order = float(np.log2(abs(diff_prev / diff)))
        rows.append({
            "level": level,
            "resolution": list(cfg.numerics.resolution),
            "time_steps": cfg.numerics.time_steps,
            "lambda_principal": lam,
            "difference": diff,
            "observed_order": order,
        })
        lam_prev = lam
        diff_prev = diff
    return rows


def cmd_convergence(config, out_dir, seed=None, levels=None):
    levels = levels if levels is not None else config.command.levels
    if levels < 2:
        raise ConfigError("convergence needs at least 2 levels")
    tables = {
        "space": _refinement_table(config, "space", levels),
        "time": _refinement_table(config, "time", levels),
    }
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"command": "convergence", "seed": seed, "levels": levels,
               "tables": tables}
    _write_json(out / "convergence.json", payload)
    for mode, rows in tables.items():
        print(f"{mode} refinement:")
        for row in rows:
            order = ("-" if row["observed_order"] is None
                     else f"{row['observed_order']:.2f}")
            diff = ("-" if row["difference"] is None
                    else f"{row['difference']:+.3e}")
            print(f"  level {row['level']}: res={row['resolution']} "
                  f"steps={row['time_steps']} lambda={row['lambda_principal']:.10f} "
                  f"diff={diff} order={order}")
    return EXIT_OK


def cmd_floquet_map(config, out_dir, seed=None):
    problem = build_problem(config)
    pw = problem.system.pointwise_field()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    grid = problem.grid
    rows = []
    for m in range(grid.size):
        rows.append(
            [m] + [repr(float(c)) for c in grid.nodes[m]]
            + [repr(float(pw.lambda_field[m])), repr(float(pw.h_field[m]))]
        )
    _write_csv(out / "floquet_map.csv",
               ["node"] + _coord_header(grid.dim) + ["lambda", "h"],
               rows)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nlspectra",
        description="Principal spectrum points of time-periodic cooperative "
                    "nonlocal dispersal systems",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)
    for name, help_text in (
        ("spectrum", "run both spectral routes"),
        ("criteria", "evaluate the existence criteria"),
        ("convergence", "refinement study in space and time"),
        ("floquet-map", "export per-node exponent and band fields"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML configuration path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="recorded in output metadata")
        p.add_argument("--threads", type=int, default=None,
                       help="thread cap (default: NLSPECTRA_THREADS or 1)")
        if name == "convergence":
            p.add_argument("--levels", type=int, default=None,
                           help="refinement levels (default from config)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
    except _CONFIG_ERRORS as e:
        _error(e)
        return EXIT_CONFIG
    out_dir = args.out if args.out is not None else config.output.out_dir
    threads = thread_count(args.threads)
    try:
        if args.cmd == "spectrum":
            return cmd_spectrum(config, out_dir, seed=args.seed)
        if args.cmd == "criteria":
            return cmd_criteria(config, out_dir, seed=args.seed,
                                threads=threads)
        if args.cmd == "convergence":
            return cmd_convergence(config, out_dir, seed=args.seed,
                                   levels=args.levels)
        if args.cmd == "floquet-map":
            return cmd_floquet_map(config, out_dir, seed=args.seed)
        raise AssertionError(args.cmd)
    except HypothesisViolation as e:
        _error(e)
        return EXIT_VALIDATION
    except ResourceCapExceeded as e:
        _error(e)
        return EXIT_RESOURCE
    except _CONFIG_ERRORS as e:
        _error(e)
        return EXIT_CONFIG
    except (SpectralError, FloquetError, cr.SoundnessError, cr.CriteriaError) as e:
        _error(e)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
