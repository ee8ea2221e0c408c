"""haarbook command-line interface.

Subcommands:

    verify      algebraic identities, invariance rules and kernel normalisation
    dutch-book  fair price, expected gain and model-side payoff for a kernel
    identity    model versus Haar-model expectations of invariant functions
    simulate    repeated betting rounds written as a CSV trajectory

Exit codes: 0 ran (verdict inside the report), 1 a verify check failed,
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import platform
import sys
import time
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np
import scipy

from . import checks
from .config import ConfigError, RunConfig, build_config, load_config_file, load_theta_file
from .densities import ImproperPosteriorError
from .dutchbook import (
    default_control,
    default_test_functions,
    dutch_book_scheme,
    identity_check_many,
    model_payoffs,
    si_verdict,
    simulate_betting,
    ticket_price,
)
from .montecarlo import combined_stderr
from .predictive import KERNEL_NAMES, make_kernel

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _versions() -> dict:
    try:
        pkg = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        pkg = "unknown"
    return {"haarbook": pkg, "python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")


def _report(command: str, cfg: RunConfig, body: dict, started: datetime, t0: float) -> dict:
    report = {"command": command, "config": cfg.echo()}
    report.update(body)
    report["versions"] = _versions()
    report["timestamp"] = {"started": started.isoformat(), "wall_clock_s": round(time.perf_counter() - t0, 3)}
    return report


def _write_text(path: str | None, text: str):
    if path is None:
        sys.stdout.write(text)
        return
    try:
        Path(path).write_text(text, newline="")
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc}") from None


def _write_json(path: str | None, report: dict):
    _write_text(path, json.dumps(report, indent=2, default=_jsonable) + "\n")


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# -- subcommands ---------------------------------------------------------------


def cmd_verify(cfg: RunConfig) -> tuple[dict, int]:
    found = [checks.psi_identity(p, seed=cfg.seed) for p in range(1, 7)]
    found.append(checks.tau_equivariance(cfg.p, seed=cfg.seed))
    found.append(checks.delta_homomorphism(cfg.p, seed=cfg.seed))
    beta = cfg.beta if cfg.kernel == "beta" else 0.5
    found += checks.invariance_identities(cfg.p, cfg.n, seed=cfg.seed, beta=beta)
    specs = ["haar", "jeffreys"] if cfg.p <= 2 else ["haar"]
    for spec in specs:
        found.append(checks.kernel_normalization(spec, cfg.n, cfg.p, budget=cfg.budget, seed=cfg.seed))
    if cfg.p == 1:
        found.append(checks.haar_equals_jeffreys_p1(cfg.n, seed=cfg.seed))
    ok = all(bool(c.passed) for c in found)
    body = {"checks": [c.to_dict() for c in found], "verdict": "pass" if ok else "fail"}
    if cfg.p == 1:
        body["note"] = "haar and jeffreys kernels coincide for p = 1"
    return body, EXIT_OK if ok else EXIT_FAILED


def cmd_dutch_book(cfg: RunConfig) -> tuple[dict, int]:
    q = make_kernel(cfg.kernel_spec(), cfg.n, cfg.p)
    report = si_verdict(q, cfg.theta_list, cfg.budget, cfg.seed, cfg.threads)
    body = report.to_dict()
    body["checks"] = [
        {
            "name": f"model_side_theta{i}",
            "estimate": e.mean,
            "stderr": e.stderr,
            "tolerance": 3.0 * e.stderr,
            "passed": bool(e.lower(3.0) > 0.0),
            "within_3sigma_of_epsilon0": bool(abs(e.mean - report.epsilon0.mean) <= 3.0 * combined_stderr(e, report.epsilon0)),
        }
        for i, (_, e) in enumerate(report.model_side)
    ]
    body["inconclusive"] = report.verdict != "SI-holds"
    if cfg.csv is not None:
        scheme = dutch_book_scheme(q, report.price)
        rows = []
        for i, theta in enumerate(cfg.theta_list):
            pay = model_payoffs(scheme, theta, cfg.rounds, cfg.seed, cfg.threads, stream_id=400 + i)
            rows += [(i, r + 1, repr(float(v))) for r, v in enumerate(pay)]
        _write_text(cfg.csv, _csv_text(["theta_index", "round", "payoff"], rows))
    return body, EXIT_OK


def cmd_identity(cfg: RunConfig) -> tuple[dict, int]:
    fs = default_test_functions(cfg.p) + [default_control()]
    records = []
    control_differs = False
    all_agree = True
    for i, theta in enumerate(cfg.theta_list):
        for f, (left, right) in zip(fs, identity_check_many(fs, theta, cfg.n, cfg.budget, cfg.seed + i, cfg.threads)):
            se = combined_stderr(left, right)
            diff = left.mean - right.mean
            agree = abs(diff) <= 3.0 * se
            if f.invariant:
                all_agree &= agree
            else:
                control_differs |= not agree
            records.append({
                "theta_index": i,
                "theta": theta.entries.tolist(),
                "function": f.name,
                "invariant": f.invariant,
                "model": left.to_dict(),
                "haar_model": right.to_dict(),
                "difference": diff,
                "stderr": se,
                "tolerance": 3.0 * se,
                "agree": bool(agree),
            })
    verdict = "identity-holds" if all_agree else "identity-violated"
    body = {"checks": records, "verdict": verdict, "control_differs": bool(control_differs)}
    return body, EXIT_OK


def cmd_simulate(cfg: RunConfig) -> tuple[str, str]:
    q = make_kernel(cfg.kernel_spec(), cfg.n, cfg.p)
    price = ticket_price(q, budget=cfg.budget, seed=cfg.seed, threads=cfg.threads)
    theta = cfg.theta_list[0]
    traj = simulate_betting(q, theta, cfg.rounds, cfg.seed, cfg.threads, price)
    rows = [(r, d, int(h), repr(pr), repr(pay), repr(w)) for r, d, h, pr, pay, w in traj.records()]
    s = traj.summary
    rows.append(("mean", "", "", "", repr(float(s.mean)), ""))
    rows.append(("stderr", "", "", "", repr(float(s.stderr)), ""))
    text = _csv_text(["round", "x_digest", "in_region", "price", "payoff", "cumulative_wealth"], rows)
    return text, f"{cfg.rounds} rounds, mean payoff {s.mean:.6g} (stderr {s.stderr:.2g})"


# -- argument handling -----------------------------------------------------------


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file of key: value settings (flags override it)")
    common.add_argument("--p", type=int, help="dimension (default 2)")
    common.add_argument("--n", type=int, help="sample size, n >= p (default 3)")
    common.add_argument("--kernel", choices=KERNEL_NAMES, help="competitor predictive (default jeffreys)")
    common.add_argument("--beta", type=float, help="prior exponent for --kernel beta")
    common.add_argument("--seed", type=_nonneg_int, help="base seed (default 42)")
    common.add_argument("--budget", type=_nonneg_int, help="samples per estimator (default 200000)")
    common.add_argument("--rounds", type=_nonneg_int, help="betting rounds (default 100000)")
    common.add_argument("--theta-file", help="JSON/YAML list of lower-triangle theta entries")
    common.add_argument("--out", help="report path (default stdout)")
    common.add_argument("--csv", help="CSV path for per-round payoffs")
    common.add_argument("--threads", type=int, help="worker threads; results do not depend on it")

    parser = argparse.ArgumentParser(prog="haarbook", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("verify", parents=[common], help="identity, invariance and normalisation checks")
    sub.add_parser("dutch-book", parents=[common], help="expected gain of the Dutch book against a kernel")
    sub.add_parser("identity", parents=[common], help="model vs Haar-model expectations of invariant functions")
    sub.add_parser("simulate", parents=[common], help="betting trajectory as CSV")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = {k: getattr(args, k) for k in ("p", "n", "kernel", "beta", "seed", "budget", "rounds", "out", "csv", "threads")}
    if args.theta_file:
        overrides["thetas"] = load_theta_file(args.theta_file)
    return build_config(file_values, overrides)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    try:
        cfg = config_from_args(args)
        if args.command == "simulate":
            text, summary = cmd_simulate(cfg)
            _write_text(cfg.out or cfg.csv, text)
            print(summary, file=sys.stderr)
            return EXIT_OK
        handler = {"verify": cmd_verify, "dutch-book": cmd_dutch_book, "identity": cmd_identity}[args.command]
        body, code = handler(cfg)
        _write_json(cfg.out, _report(args.command, cfg, body, started, t0))
        return code
    except (ConfigError, ImproperPosteriorError, UsageError, OSError) as exc:
        print(f"haarbook: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
