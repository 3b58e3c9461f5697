"""Command-line surface of the toolkit.

Commands: sample, moments, covariance, observable, entropy, laplace,
validate.  Curve commands emit plot-ready CSV (`t,value[,mc_mean,mc_se]`,
17 significant digits) or JSON records carrying the full run configuration.
Outputs contain no timestamps, so identical flags produce byte-identical
files.

Exit codes: 0 success, 1 validation failure, 2 usage or configuration error,
3 numeric error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, analytics, montecarlo
from .analytics import ConvergenceError
from .integrator import (
    IntegratorConfig,
    sample_ensemble_path,
    sample_haar_ensemble_path,
)
from .linalg import NumericError


class UsageError(Exception):
    """Bad flags or configuration (exit code 2)."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _parse_grid(spec: str, name: str) -> list[float]:
    """Parse 'start:step:end' into start + i*step, inclusive of end when the
    step divides the span."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise UsageError(f"{name} must have the form start:step:end")
    try:
        start, step, end = (float(p) for p in parts)
    except ValueError as exc:
        raise UsageError(f"non-numeric {name} component: {exc}") from exc
    if step <= 0 or end < start:
        raise UsageError(f"{name} needs step > 0 and end >= start")
    out = []
    i = 0
    while True:
        v = start + i * step
        if v > end + 1e-9 * max(1.0, abs(end)):
            break
        out.append(v)
        i += 1
    return out


def _complex_pairs(v: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in v]


def _load_state_file(path: str) -> np.ndarray:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read state file {path}: {exc}") from exc
    try:
        psi = np.array([complex(re, im) for re, im in data])
    except (TypeError, ValueError) as exc:
        raise UsageError(f"state file {path} must be a JSON array of [re, im] pairs") from exc
    if abs(np.linalg.norm(psi) - 1.0) > 1e-8:
        raise UsageError(f"state in {path} is not unit norm within 1e-8")
    return psi


def _resolve_init(init: str, N: int) -> np.ndarray | str:
    if init == "e1":
        psi = np.zeros(N, dtype=complex)
        psi[0] = 1.0
        return psi
    if init == "uniform":
        return np.full(N, 1.0 / np.sqrt(N), dtype=complex)
    if init == "haar":
        return "haar"
    psi = _load_state_file(init)
    if psi.shape[0] != N:
        raise UsageError(f"state file has dimension {psi.shape[0]}, expected N={N}")
    return psi


def _load_observable(spec: str, N: int) -> np.ndarray:
    if spec == "identity":
        return np.eye(N, dtype=complex)
    try:
        with open(spec) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read observable file {spec}: {exc}") from exc
    try:
        A = np.array([[complex(re, im) for re, im in row] for row in data])
    except (TypeError, ValueError) as exc:
        raise UsageError(
            f"observable file {spec} must be a JSON matrix of [re, im] pairs"
        ) from exc
    if A.shape != (N, N):
        raise UsageError(f"observable has shape {A.shape}, expected ({N}, {N})")
    if np.max(np.abs(A - A.conj().T)) > 1e-12 * max(1.0, float(np.abs(A).max())):
        raise UsageError("observable must be Hermitian")
    return A


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _emit_curve(args, rows: list[dict], xname: str, config: dict) -> None:
    """Write curve rows as CSV (bare columns) or a JSON record with config echo."""
    if args.format == "csv":
        cols = list(rows[0].keys()) if rows else [xname, "value"]
        lines = [",".join(cols)]
        lines += [",".join(_fmt(r[c]) for c in cols) for r in rows]
        _write(args.out, "\n".join(lines) + "\n")
    else:
        record = {"command": args.command, "version": __version__, "config": config, "rows": rows}
        _write(args.out, json.dumps(record) + "\n")


def _times(args) -> list[float]:
    if args.tgrid is not None:
        return _parse_grid(args.tgrid, "--tgrid")
    if args.t is not None:
        if args.t < 0:
            raise UsageError("--t must be non-negative")
        return [args.t]
    raise UsageError("provide --t or --tgrid")


def _mc_ensembles(args, psi, times):
    cfg = IntegratorConfig(step_size=args.step)
    if isinstance(psi, str):
        return sample_haar_ensemble_path(
            args.N, times, args.mc, cfg, args.seed, n_jobs=args.jobs
        )
    return sample_ensemble_path(psi, times, args.mc, cfg, args.seed, n_jobs=args.jobs)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_sample(args) -> int:
    psi = _resolve_init(args.init, args.N)
    cfg = IntegratorConfig(step_size=args.step)
    if isinstance(psi, str):
        ens = sample_haar_ensemble_path(args.N, [args.t], args.M, cfg, args.seed, n_jobs=args.jobs)[0]
        initial = "haar"
    else:
        ens = sample_ensemble_path(psi, [args.t], args.M, cfg, args.seed, n_jobs=args.jobs)[0]
        initial = _complex_pairs(psi)
    record = {
        "command": "sample",
        "version": __version__,
        "N": args.N,
        "t": args.t,
        "init": args.init,
        "seed": args.seed,
        "step_size": args.step,
        "M": args.M,
        "initial": initial,
        "states": [_complex_pairs(s) for s in ens.states],
    }
    _write(args.out, json.dumps(record) + "\n")
    return 0


def _curve_command(args, analytic_fn, estimator, xname="t") -> int:
    times = _times(args)
    values = [float(analytic_fn(t)) for t in times]
    rows = [{xname: t, "value": v} for t, v in zip(times, values)]
    if args.mc:
        ensembles = _mc_ensembles(args, _resolve_init(args.init, args.N), times)
        for row, ens in zip(rows, ensembles):
            est = estimator(ens)
            row["mc_mean"] = est.value
            row["mc_se"] = est.std_error
    config = {
        "N": args.N,
        "init": args.init,
        "seed": args.seed,
        "step_size": args.step,
        "mc": args.mc,
    }
    _emit_curve(args, rows, xname, config)
    return 0


def cmd_moments(args) -> int:
    psi = _resolve_init(args.init, args.N)
    if isinstance(psi, str):
        raise UsageError("moments needs a deterministic initial state (e1, uniform or file)")
    if not 1 <= args.j <= args.N:
        raise UsageError("--j out of range")
    c = float(np.abs(psi[args.j - 1]) ** 2)
    curve = analytics.moment_curve(args.N, c, args.p)
    return _curve_command(
        args, curve, lambda ens: montecarlo.estimate_moment(ens, args.j, args.p)
    )


def cmd_covariance(args) -> int:
    psi = _resolve_init(args.init, args.N)
    if isinstance(psi, str):
        raise UsageError("covariance needs a deterministic initial state")
    if args.j == args.k:
        raise UsageError("--j and --k must differ")
    curve = analytics.covariance_curve_from_state(args.N, psi, args.j, args.k)
    return _curve_command(
        args, curve, lambda ens: montecarlo.estimate_covariance(ens, args.j, args.k)
    )


def cmd_observable(args) -> int:
    psi = _resolve_init(args.init, args.N)
    if isinstance(psi, str):
        raise UsageError("observable needs a deterministic initial state")
    A = _load_observable(args.A, args.N)
    return _curve_command(
        args,
        lambda t: analytics.observable_average(A, psi, t),
        lambda ens: montecarlo.estimate_observable(ens, A),
    )


def cmd_entropy(args) -> int:
    if args.init != "e1":
        raise UsageError("the closed-form entropy bound is for --init e1")
    return _curve_command(
        args,
        lambda t: analytics.entropy_bound(args.N, args.p, t),
        lambda ens: montecarlo.estimate_renyi(ens, args.p),
    )


def cmd_laplace(args) -> int:
    psi = _resolve_init(args.init, args.N)
    if isinstance(psi, str):
        raise UsageError("laplace needs a deterministic initial state")
    if not 1 <= args.j <= args.N:
        raise UsageError("--j out of range")
    if args.t is None or args.t < 0:
        raise UsageError("laplace needs a single non-negative --t")
    c = float(np.abs(psi[args.j - 1]) ** 2)
    lams = _parse_grid(args.lgrid, "--lgrid")
    rows = [
        {"lam": lam, "value": analytics.laplace_marginal(args.N, c, args.t, lam, args.nmax)}
        for lam in lams
    ]
    config = {"N": args.N, "init": args.init, "j": args.j, "t": args.t, "n_max": args.nmax}
    _emit_curve(args, rows, "lam", config)
    return 0


def cmd_validate(args) -> int:
    batteries = tuple(args.batteries.split(",")) if args.batteries else None
    config = montecarlo.SuiteConfig(
        N=args.N,
        M=args.M,
        master_seed=args.seed,
        step_size=args.step,
        z_threshold=args.threshold,
        M_invariance=args.M_invariance,
        M_unitary=args.M_unitary,
        M_equilibrium=args.M_equilibrium,
        n_jobs=args.jobs,
    )
    if args.list:
        reports = []
        names = _battery_check_names(config, batteries)
        _write(args.out, "\n".join(names) + "\n")
        return 0
    reports = montecarlo.run_validation_suite(config, batteries)
    lines = [json.dumps(r.to_record()) for r in reports]
    n_fail = sum(not r.passed for r in reports)
    summary = {
        "summary": True,
        "version": __version__,
        "n_checks": len(reports),
        "n_failed": n_fail,
        "failed": [r.name for r in reports if not r.passed],
    }
    lines.append(json.dumps(summary))
    _write(args.out, "\n".join(lines) + "\n")
    if n_fail:
        sys.stderr.write(f"validation FAILED: {n_fail} of {len(reports)} checks\n")
        return 1
    return 0


def _battery_check_names(config, batteries) -> list[str]:
    chosen = montecarlo.BATTERIES if batteries is None else tuple(batteries)
    names = []
    for b in chosen:
        if b == "moments":
            names += [
                f"moment j={j} p={p} t={t:g}"
                for j in (1, 2)
                for p in (1, 2, 3)
                for t in config.t_grid
            ]
        elif b == "covariance":
            names += [f"covariance ({j},{k}) t={t:g}" for j, k in ((1, 2), (2, 3)) for t in config.t_grid]
        elif b == "observable":
            names += [f"observable t={t:g}" for t in config.t_grid]
        elif b == "entropy":
            names += [f"renyi-2 jensen t={t:g}" for t in config.t_grid]
        elif b == "structure":
            names += [
                "max unitarity defect",
                "max state norm defect",
                "max probability sum defect",
                "reunitarization triggers",
            ]
        elif b == "invariance":
            names += [f"invariance same-initial panel[{i}]" for i in range(config.panel_size)]
            names += ["stabilizer invariance pass fraction", "invariance power check (V psi != psi)"]
        elif b == "inversion":
            names += ["inversion symmetry Im E[Tr U]"]
        elif b == "equilibrium":
            names += [f"haar-limit moment p={p}" for p in (1, 2, 3)]
            names += ["haar-limit renyi-2 jensen", "haar entropy bound N=4 equals 13/12"]
        else:
            raise UsageError(f"unknown battery {b!r}")
    return names


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, mc_default: int | None = None) -> None:
    p.add_argument("--N", type=int, default=4, help="Hilbert space dimension")
    p.add_argument("--init", default="e1", help="initial state: e1, uniform, haar or a JSON file")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--step", type=float, default=0.005, help="integrator step size")
    p.add_argument("--out", default="-", help="output path ('-' for stdout)")
    p.add_argument("--format", choices=("json", "csv"), default="csv")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (-1 = all cores)")
    p.add_argument("--t", type=float, default=None, help="single time")
    p.add_argument("--tgrid", default=None, help="time grid start:step:end")
    p.add_argument(
        "--mc",
        type=int,
        default=mc_default,
        metavar="M",
        help="add Monte Carlo estimate columns with this many trajectories",
    )


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ubmstates",
        description="Random pure states from unitary Brownian motion: sampling, "
        "closed-form statistics and Monte Carlo validation.",
    )
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample an ensemble of evolved states")
    _add_common(p)
    p.add_argument("--M", type=int, default=1000, help="number of trajectories")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("moments", help="moment curve E|psi_t^j|^(2p)")
    _add_common(p)
    p.add_argument("--p", type=int, default=1)
    p.add_argument("--j", type=int, default=1)
    p.set_defaults(fn=cmd_moments)

    p = sub.add_parser("covariance", help="covariance curve E[|psi^j|^2 |psi^k|^2]")
    _add_common(p)
    p.add_argument("--j", type=int, default=1)
    p.add_argument("--k", type=int, default=2)
    p.set_defaults(fn=cmd_covariance)

    p = sub.add_parser("observable", help="mean measured value of a fixed observable")
    _add_common(p)
    p.add_argument("--A", default="identity", help="'identity' or a JSON matrix file")
    p.set_defaults(fn=cmd_observable)

    p = sub.add_parser("entropy", help="Renyi entropy lower bound (init e1)")
    _add_common(p)
    p.add_argument("--p", type=int, default=2)
    p.set_defaults(fn=cmd_entropy)

    p = sub.add_parser("laplace", help="Laplace transform of one squared coordinate")
    _add_common(p)
    p.add_argument("--j", type=int, default=1)
    p.add_argument("--lgrid", default="-5:0.5:5", help="lambda grid start:step:end")
    p.add_argument("--nmax", type=int, default=60, help="series truncation order")
    p.set_defaults(fn=cmd_laplace)

    p = sub.add_parser("validate", help="run the Monte Carlo validation suite")
    p.add_argument("--N", type=int, default=4)
    p.add_argument("--M", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=20260810)
    p.add_argument("--step", type=float, default=0.005)
    p.add_argument("--threshold", type=float, default=5.0)
    p.add_argument("--M-invariance", type=int, default=10_000, dest="M_invariance")
    p.add_argument("--M-unitary", type=int, default=2_000, dest="M_unitary")
    p.add_argument("--M-equilibrium", type=int, default=10_000, dest="M_equilibrium")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="-")
    p.add_argument("--batteries", default=None, help="comma-separated subset of batteries")
    p.add_argument("--list", action="store_true", help="print check names without running")
    p.set_defaults(fn=cmd_validate)

    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return 2
    except (ConvergenceError, NumericError, ArithmeticError, np.linalg.LinAlgError) as exc:
        sys.stderr.write(f"numeric error: {exc}\n")
        return 3
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
