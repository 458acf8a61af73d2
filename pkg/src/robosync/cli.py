"""Command-line front end.

Exit codes: 0 success, 1 usage, 2 validation, 3 numerical abort, 4 I/O.
Failures print one line ``robosync-error {json}`` on stderr, where the JSON
object holds ``kind``, ``exit_code`` and error-specific fields.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .config import ExperimentConfig, load_config, serialize
from .engine import ExperimentResult, run_experiment
from .errors import IoError, RobosyncError
from .storage import load_weights, save_weights, write_summary, write_timeseries
from .verify import run_all

ERROR_PREFIX = "robosync-error"


class UsageError(RobosyncError):
    exit_code = 1
    kind = "UsageError"


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit with status 2
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robosync", description="Leader-follower synchronization of networked 2-link arms.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="run a learning experiment")
    sim.add_argument("config", type=Path)
    sim.add_argument("--out", type=Path, required=True, help="output directory")
    sim.add_argument("--workers", type=int, default=None, help="threads for per-agent work")

    rep = sub.add_parser("replay", help="run with stored weights and adaptation off")
    rep.add_argument("config", type=Path)
    rep.add_argument("--weights", type=Path, required=True, help="weights file written by simulate")
    rep.add_argument("--out", type=Path, required=True, help="output directory")
    rep.add_argument("--workers", type=int, default=None, help="threads for per-agent work")

    chk = sub.add_parser("check", help="validate a configuration file")
    chk.add_argument("config", type=Path)

    sub.add_parser("verify", help="run the built-in invariant checks")
    return parser


def _workers(value: int | None) -> int | None:
    if value is not None and value < 1:
        raise UsageError(f"--workers must be >= 1, got {value}")
    return value


def _write_outputs(out: Path, result: ExperimentResult, config: ExperimentConfig) -> None:
    write_timeseries(result.log, out)
    write_summary(out / "summary.json", result.summary, config, result.mode)
    try:
        (out / "config.yaml").write_text(serialize(config), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {out / 'config.yaml'}: {exc}") from exc


def _report(result: ExperimentResult) -> None:
    for a in result.summary["agents"]:
        T = a["settling_time"]
        settled = "not settled" if T is None else f"settled at {T:.2f} s"
        ratio = a["nn_residual_ratio"]
        ratio_text = "" if ratio is None else f", residual ratio {ratio:.3f}"
        print(f"{a['name']}: {settled}, sup|tau| {a['sup_tau']:.3g} N m{ratio_text}")


def cmd_simulate(args) -> int:
    config = load_config(args.config).with_sim(mode="learn")
    result = run_experiment(config, workers=_workers(args.workers))
    _write_outputs(args.out, result, config)
    if result.weights is not None:
        path = save_weights(args.out / "weights.json", result.weights, config.rbf.lattice(), config)
        print(f"weights: {path}")
    _report(result)
    return 0


def cmd_replay(args) -> int:
    config = load_config(args.config).with_sim(mode="replay")
    weights = load_weights(args.weights, config)
    result = run_experiment(config, weights, workers=_workers(args.workers))
    _write_outputs(args.out, result, config)
    _report(result)
    return 0


def cmd_check(args) -> int:
    config = load_config(args.config)
    print(f"ok: {config.followers} followers, {config.sim.steps} steps, sha256 {config.digest()[:12]}")
    return 0


def cmd_verify(args) -> int:
    results = run_all()
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 3


COMMANDS = {"simulate": cmd_simulate, "replay": cmd_replay, "check": cmd_check, "verify": cmd_verify}


def error_line(exc: RobosyncError) -> str:
    payload = {"kind": exc.kind, "exit_code": exc.exit_code, **exc.fields()}
    return f"{ERROR_PREFIX} {json.dumps(payload, default=str)}"


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
        return COMMANDS[args.command](args)
    except RobosyncError as exc:
        print(error_line(exc), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(error_line(IoError(str(exc))), file=sys.stderr)
        return IoError.exit_code


if __name__ == "__main__":
    sys.exit(main())
