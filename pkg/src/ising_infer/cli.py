"""Command line front end.

Verbs: run (config file), spectra, estimate, power, limits. All output is
CSV (stdout unless --output is given) with the same metadata header the
harness writes. Exit codes: 0 success, 2 configuration/parameter errors,
3 numeric failures.
"""
from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from . import __version__
from .coupling import FAMILIES, limiting_spectrum, load_matrix
from .errors import ConfigError, ConstructionError, NumericError, ParameterError
from .harness import (
    ExperimentConfig,
    emit,
    load_config,
    render_csv,
    run_experiment,
)
from .inference import mle_exact, mle_stochastic, mple
from .sampler import SpinConfiguration, read_sample_dump
from .streams import derive_seed
from .theory import sample_mple_limit, sample_quadratic_limits


def _add_family_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--family", required=True, choices=FAMILIES[:-1])
    parser.add_argument("--q", type=int, default=None, help="class count")
    parser.add_argument("--d", type=int, default=None, help="regular degree")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ising-infer",
        description="Estimation and testing for one-parameter spin models "
        "on dense regular couplings.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run a config-file experiment")
    p_run.add_argument("config", help="key=value config file")
    p_run.add_argument("--output", default=None, help="override output_path")

    p_spec = sub.add_parser("spectra", help="spectrum report for a family")
    _add_family_args(p_spec)
    p_spec.add_argument("--n", required=True, help="size or comma list")
    p_spec.add_argument("--seed", type=int, default=20260815)
    p_spec.add_argument("--output", default=None)

    p_est = sub.add_parser("estimate", help="estimate theta from a sample dump")
    p_est.add_argument("--matrix", required=True, help="coupling matrix file")
    p_est.add_argument("--samples", required=True, help="sample dump CSV")
    p_est.add_argument(
        "--method", choices=("mple", "mle", "both"), default="mple"
    )
    p_est.add_argument("--seed", type=int, default=0, help="MCMC seed for large-n mle")
    p_est.add_argument("--output", default=None)

    p_pow = sub.add_parser("power", help="empirical and limiting power curves")
    _add_family_args(p_pow)
    p_pow.add_argument("--n", type=int, required=True)
    p_pow.add_argument("--theta0", type=float, required=True)
    p_pow.add_argument("--h", default="0,0.5,1,2,4", help="comma grid")
    p_pow.add_argument("--alpha", type=float, default=0.05)
    p_pow.add_argument("--reps", type=int, default=2000)
    p_pow.add_argument("--seed", type=int, default=20260815)
    p_pow.add_argument(
        "--calibration", choices=("monte_carlo", "asymptotic"), default="monte_carlo"
    )
    p_pow.add_argument("--output", default=None)

    p_lim = sub.add_parser("limits", help="draws from the limiting laws")
    p_lim.add_argument("--family", required=True, choices=FAMILIES[:-1])
    p_lim.add_argument("--q", type=int, default=None)
    p_lim.add_argument(
        "--eta", type=float, default=None, help="limiting degree fraction d/n"
    )
    p_lim.add_argument("--theta0", type=float, default=1.0)
    p_lim.add_argument("--h", type=float, default=0.0)
    p_lim.add_argument("--reps", type=int, default=100000)
    p_lim.add_argument("--seed", type=int, default=20260815)
    p_lim.add_argument("--output", default=None)
    return parser


def _write_text(text: str, output) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text)


def _cmd_run(args) -> int:
    config = load_config(args.config)
    result = run_experiment(config)
    path = emit(result, args.output)
    sys.stdout.write(
        json.dumps({"written": path, "summary": result.summary}, default=float)
        + "\n"
    )
    return 0


def _parse_int_grid(text: str) -> tuple:
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"--n: cannot parse {text!r}") from exc


def _cmd_spectra(args) -> int:
    config = ExperimentConfig(
        experiment="spectrum_report",
        family=args.family,
        q=args.q,
        d=args.d,
        n=_parse_int_grid(args.n),
        master_seed=args.seed,
    )
    _write_text(render_csv(run_experiment(config)), args.output)
    return 0


def _cmd_estimate(args) -> int:
    coupling = load_matrix(args.matrix)
    rows = read_sample_dump(args.samples)
    methods = ("mple", "mle") if args.method == "both" else (args.method,)
    lines = ["replication,method,value,exists,iterations,residual,mc_stderr"]
    for index, row in enumerate(rows):
        spins = row["spins"]
        if spins.size != coupling.n:
            raise ParameterError(
                f"sample row {index} has {spins.size} spins, matrix has {coupling.n}"
            )
        config = SpinConfiguration.from_spins(spins, coupling)
        for method in methods:
            if method == "mple":
                res = mple(config)
                stderr = math.nan
            elif coupling.n <= 24:
                res = mle_exact(config, coupling)
                stderr = math.nan
            else:
                res = mle_stochastic(
                    config, coupling, seed=derive_seed(args.seed, index)
                )
                trajectory = res.diagnostics.get("trajectory", [])
                stderr = trajectory[-1][2] if trajectory else math.nan
            residual = res.diagnostics.get("residual", math.nan)
            lines.append(
                "%d,%s,%.17g,%s,%d,%.17g,%.17g"
                % (
                    index,
                    res.method,
                    res.value,
                    "true" if res.exists else "false",
                    res.iterations,
                    residual,
                    stderr,
                )
            )
    _write_text("\n".join(lines) + "\n", args.output)
    return 0


def _cmd_power(args) -> int:
    try:
        h_grid = tuple(float(p) for p in args.h.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"--h: cannot parse {args.h!r}") from exc
    config = ExperimentConfig(
        experiment="power_curve",
        family=args.family,
        q=args.q,
        d=args.d,
        n=(args.n,),
        theta0=args.theta0,
        h=h_grid,
        alpha=args.alpha,
        reps=args.reps,
        master_seed=args.seed,
        calibration=args.calibration,
    )
    _write_text(render_csv(run_experiment(config)), args.output)
    return 0


def _cmd_limits(args) -> int:
    kwargs = {}
    if args.q is not None:
        kwargs["q"] = args.q
    if args.family == "random_regular":
        if args.eta is None:
            raise ConfigError("--eta: required for random_regular limits")
        kwargs["eta"] = args.eta
    lim = limiting_spectrum(args.family, **kwargs)
    pair = sample_quadratic_limits(
        args.theta0, lim.limit_eigs, lim.kappa, args.reps, derive_seed(args.seed, 0)
    )
    if args.theta0 == 1.0:
        ratio = sample_mple_limit(
            args.h, lim.limit_eigs, lim.kappa, args.reps, derive_seed(args.seed, 1)
        )
    else:
        ratio = np.full(args.reps, math.nan)
    lines = ["index,centered_qf,centered_qf_sq,mple_limit"]
    for i in range(args.reps):
        lines.append(
            "%d,%.17g,%.17g,%.17g"
            % (i, pair.centered_qf[i], pair.centered_qf_sq[i], ratio[i])
        )
    _write_text("\n".join(lines) + "\n", args.output)
    return 0


_COMMANDS = {
    "run": _cmd_run,
    "spectra": _cmd_spectra,
    "estimate": _cmd_estimate,
    "power": _cmd_power,
    "limits": _cmd_limits,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except (ConfigError, ParameterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (NumericError, ConstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
