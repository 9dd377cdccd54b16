"""Command line entry point.

Exit codes: 0 success, 1 domain or audit failure (JSON error body on
stderr), 2 usage error.  Every output file is written atomically.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import tempfile
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .basis import FittedFunction, fit_svn
from .errors import AuditViolation, CadlagError
from .losses import FAMILIES, ALIASES, make_loss
from .solver import SolveOptions, fit_erm

log = logging.getLogger("cadlag_erm")

VERBS = ("fit", "predict", "svn", "simulate-rate", "bracket-audit", "bernstein-audit", "entropy-integral")


class UsageError(Exception):
    """Bad flag value or missing input; maps to exit code 2."""


# ---------------------------------------------------------------------------
# io helpers
# ---------------------------------------------------------------------------

def atomic_write(path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent or ".")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_csv(path, need_y: bool = True):
    """CSV with header x1,...,xd[,y]; returns (X, y or None)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    has_y = header[-1] == "y"
    xcols = header[:-1] if has_y else header
    if not xcols or xcols != [f"x{j + 1}" for j in range(len(xcols))]:
        raise UsageError(f"{path}: header must be x1,...,xd followed by y, got {','.join(header)}")
    if need_y and not has_y:
        raise UsageError(f"{path}: a y column is required")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float).reshape(-1, len(header))
    X = data[:, :len(xcols)]
    return X, (data[:, -1] if has_y else None)


def _existing(path: str, flag: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{flag}: no such file {path}")
    return p


def config_hash(args: argparse.Namespace) -> str:
    items = {k: v for k, v in vars(args).items() if k not in ("func", "verbose")}
    return hashlib.sha256(json.dumps(items, sort_keys=True, default=str).encode()).hexdigest()[:16]


def substream(seed: int, name: str) -> np.random.Generator:
    """Named, reproducible sub-stream of the single --seed."""
    key = int.from_bytes(hashlib.sha256(name.encode()).digest()[:4], "little")
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(key,)))


def _provenance(args) -> dict:
    return {"config_hash": config_hash(args), "seed": args.seed, "verb": args.verb}


def _emit(args, payload: dict) -> None:
    payload = {**payload, "provenance": _provenance(args)}
    text = json.dumps(payload, indent=2, sort_keys=True, default=float) + "\n"
    if getattr(args, "out", None):
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# verbs
# ---------------------------------------------------------------------------

def cmd_fit(args) -> int:
    X, Y = read_csv(_existing(args.data, "--data"))
    if args.radius < 0:
        raise UsageError("--radius must be nonnegative")
    loss = make_loss(args.loss, args.a_tilde)
    opts = SolveOptions(max_iters=args.max_iters, grad_tol=args.grad_tol)
    rep = fit_erm((X, Y), loss, args.radius, opts)
    model = rep.fit.to_dict()
    model["solve"] = {
        "loss": loss.family, "radius": args.radius, "status": rep.status, "iterations": rep.iterations,
        "objective": rep.final_objective, "kkt_residual": rep.kkt_residual, "active": rep.active_set_size,
    }
    model["provenance"] = _provenance(args)
    atomic_write(args.out, json.dumps(model, indent=2) + "\n")
    log.info("fit %s: %s after %d iterations", args.out, rep.status, rep.iterations)
    return 0


def _load_model(path) -> FittedFunction:
    try:
        return FittedFunction.from_dict(json.loads(Path(path).read_text()))
    except (KeyError, json.JSONDecodeError) as exc:
        raise UsageError(f"--model: not a model file ({exc})") from exc


def cmd_predict(args) -> int:
    fit = _load_model(_existing(args.model, "--model"))
    X, _ = read_csv(_existing(args.data, "--data"), need_y=False)
    if X.shape[1] != fit.dim:
        raise UsageError(f"--data has {X.shape[1]} coordinates, the model expects {fit.dim}")
    pred = np.atleast_1d(fit.predict(X))
    lines = [",".join([f"x{j + 1}" for j in range(fit.dim)] + ["prediction"])]
    lines += [",".join([repr(float(v)) for v in row] + [repr(float(p))]) for row, p in zip(X, pred)]
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_svn(args) -> int:
    if args.model:
        value = fit_svn(_load_model(_existing(args.model, "--model")))
    else:
        from .svn import GridFunction, svn_exact
        value = svn_exact(GridFunction.from_json(_existing(args.grid, "--grid").read_text()))
    print(repr(value))
    return 0


def cmd_simulate(args) -> int:
    from . import simulation as sim

    cfg = sim.load_config(_existing(args.config, "--config"))
    if args.seed is not None:
        cfg.seed = args.seed
    args.seed = cfg.seed
    report = sim.run_rate_experiment(cfg, checkpoint=args.checkpoint, workers=args.threads)
    payload = report.to_dict()
    payload["provenance"] = {**_provenance(args), "experiment_hash": cfg.config_hash()}
    atomic_write(args.out, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if args.csv:
        atomic_write(args.csv, sim.report_csv(report))
    if args.plot:
        sim.plot_svg(report, args.plot)
    print(f"corrected slope {report.corrected_slope:.4f} (raw {report.raw_slope:.4f})")
    return 0


def cmd_bracket_audit(args) -> int:
    from .entropy import audit_unit_ball

    rng = substream(args.seed, "bracket-audit")
    audit = audit_unit_ball(args.epsilon, args.dim, args.functions, rng, n_random_brackets=args.random_brackets)
    payload = {**audit.to_dict(), "pass": audit.passed}
    _emit(args, payload)
    if not audit.passed:
        raise AuditViolation(f"{len(audit.violations)} bracket violations", payload)
    return 0


def cmd_bernstein_audit(args) -> int:
    from .bernstein import run_bernstein_audit

    report = run_bernstein_audit(args.noise, args.scale, a_n=args.a_n, dim=args.dim, repetitions=args.repetitions,
                                 n_samples=args.samples, seed=args.seed)
    _emit(args, report)
    if not report["pass"]:
        raise AuditViolation(f"{len(report['violations'])} Bernstein audit violations", report["violations"][0])
    return 0


def cmd_entropy(args) -> int:
    from .entropy import entropy_integral_check

    res = entropy_integral_check(args.delta, args.dim)
    _emit(args, asdict(res))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cadlag-erm", description="Variation-norm ERM, audits and rate experiments.")
    p.add_argument("--seed", type=int, default=None, help="default 0 (simulate-rate: the config seed)")
    p.add_argument("--threads", type=int, default=1, help="worker cap")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", metavar="verb", parser_class=_Parser)
    sub.required = True

    f = sub.add_parser("fit", help="fit the ERM to a CSV")
    f.add_argument("--data", required=True)
    f.add_argument("--loss", required=True, choices=sorted(FAMILIES + tuple(ALIASES)))
    f.add_argument("--radius", required=True, type=float)
    f.add_argument("--out", required=True)
    f.add_argument("--a-tilde", type=float, default=1.0)
    f.add_argument("--max-iters", type=int, default=50_000)
    f.add_argument("--grad-tol", type=float, default=1e-7)
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("predict", help="evaluate a model at CSV points")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out")
    pr.set_defaults(func=cmd_predict)

    s = sub.add_parser("svn", help="variation norm of a model or grid function")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--grid")
    s.set_defaults(func=cmd_svn)

    r = sub.add_parser("simulate-rate", help="run a rate experiment from a config file")
    r.add_argument("--config", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--csv")
    r.add_argument("--plot", help="SVG path")
    r.add_argument("--checkpoint")
    r.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bracket-audit", help="unit-ball bracket containment and size audit")
    b.add_argument("--epsilon", type=float, required=True)
    b.add_argument("--dim", type=int, default=2)
    b.add_argument("--functions", type=int, default=200)
    b.add_argument("--random-brackets", type=int, default=0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bracket_audit)

    bn = sub.add_parser("bernstein-audit", help="Monte Carlo audit of the Bernstein-norm bounds")
    bn.add_argument("--noise", default="laplace")
    bn.add_argument("--scale", type=float, default=1.0)
    bn.add_argument("--a-n", type=float, default=1.0)
    bn.add_argument("--dim", type=int, default=2)
    bn.add_argument("--repetitions", type=int, default=50)
    bn.add_argument("--samples", type=int, default=100_000)
    bn.add_argument("--out")
    bn.set_defaults(func=cmd_bernstein_audit)

    e = sub.add_parser("entropy-integral", help="quadrature of the entropy integral")
    e.add_argument("--delta", type=float, required=True)
    e.add_argument("--dim", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(func=cmd_entropy)
    return p


def _error(code: int, kind: str, message: str, payload=None) -> int:
    body = {"error": kind, "message": message}
    if payload is not None:
        body["payload"] = payload
    sys.stderr.write(json.dumps(body, default=float) + "\n")
    return code


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _error(2, "usage", str(exc))
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.seed is None and args.verb != "simulate-rate":
        args.seed = 0
    if args.threads < 1:
        return _error(2, "usage", "--threads must be at least 1")
    try:
        return args.func(args)
    except UsageError as exc:
        return _error(2, "usage", str(exc))
    except AuditViolation as exc:
        return _error(1, "audit", str(exc), exc.payload)
    except (CadlagError, ValueError, ArithmeticError) as exc:
        return _error(1, type(exc).__name__, str(exc))


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
