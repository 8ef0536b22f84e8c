"""Command-line entry point.

Subcommands: ``run`` (in-process experiment plus analysis), ``station``,
``coordinate`` (TCP), ``analyze`` and ``verify``. Machine-readable results go
to stdout; diagnostics go to stderr at the level set by ``CHAMELEON_LOG``.

Exit codes: 0 success, 1 validation or usage error, 2 runtime or protocol failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

from . import analysis, model, prng, protocol, quadrature
from .errors import ChameleonError, ConfigError, ValidationError
from .station import parse_policy, run_station, write_records

log = logging.getLogger("chameleon")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2

REPORT_FILES = {"json": "report.json", "csv": "report.csv"}
PLOT_FILE = "plot.csv"


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _setup_logging() -> None:
    level = os.environ.get("CHAMELEON_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    root = logging.getLogger("chameleon")
    if not root.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
        root.addHandler(handler)
    root.setLevel(levels.get(level, logging.ERROR))


def _angle_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON run config; flags given here override it")
    p.add_argument("--mode", choices=("single", "chsh", "ekert"), help="experiment mode")
    p.add_argument("--seed", help="hidden-state seed, decimal or 0x-hex")
    p.add_argument("--n", type=int, help="number of trials")
    p.add_argument(
        "--angles",
        type=_angle_list,
        help="comma-separated radians or pi fractions: single a,b; chsh a,a',b,b'; ekert the angle set",
    )
    p.add_argument("--choice-seeds", type=_angle_list, help="ekert: two distinct station choice seeds s1,s2")
    p.add_argument("--timeout", type=float, help="run deadline in seconds")
    p.add_argument("--out", type=Path, help="output directory for artifacts")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="chameleon", description="Two-station chameleon-model EPR experiment harness.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("run", help="run both stations in-process, then analyze")
    _add_run_flags(p)
    p.add_argument("--format", choices=("json", "csv"), default="json", help="report format")
    p.add_argument("--min-count", type=int, default=analysis.DEFAULT_MIN_COUNT, help="low-count flag threshold")

    p = sub.add_parser("station", help="run one station against a coordinator or to a file")
    p.add_argument("--role", type=int, choices=(1, 2), required=True)
    p.add_argument("--connect", metavar="HOST:PORT", help="coordinator endpoint")
    p.add_argument("--timeout", type=float, default=120.0, help="seconds to wait for coordinator messages")
    p.add_argument("--seed", help="file mode: hidden-state seed")
    p.add_argument("--n", type=int, help="file mode: number of trials")
    p.add_argument("--policy", help="file mode: fixed:ANGLE | schedule:S-E=ANGLE,... | random:SEED:ANGLE,...")
    p.add_argument("--out", default="-", help="file mode: record file path, '-' for stdout")

    p = sub.add_parser("coordinate", help="coordinate two remote stations over TCP")
    _add_run_flags(p)
    p.add_argument("--host", help="listen address")
    p.add_argument("--port", type=int, help="listen port (0 picks a free port)")

    p = sub.add_parser("analyze", help="analyze persisted run artifacts")
    p.add_argument("--in", dest="input", type=Path, required=True, help="artifact directory")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out", default="-", help="report path, '-' for stdout")
    p.add_argument("--plot", type=Path, help="also write plot data to this path")
    p.add_argument("--min-count", type=int, default=analysis.DEFAULT_MIN_COUNT)

    p = sub.add_parser("verify", help="check the model numerically by quadrature")
    p.add_argument("--grid", type=int, default=16, help="settings per axis for correlation grid")
    p.add_argument("--tol", type=float, default=quadrature.DEFAULT_TOL_CORRELATION, help="correlation and marginal tolerance")
    p.add_argument("--norm-tol", type=float, default=quadrature.DEFAULT_TOL_NORMALIZATION)
    p.add_argument("--cov-grid", type=int, default=8, help="settings per axis for change-of-variables check")
    p.add_argument("--cov-tol", type=float, default=quadrature.DEFAULT_TOL_CHANGE_OF_VARIABLES)
    p.add_argument("--json", action="store_true", help="emit JSON rows {a,b,value,tol,method} instead of a table")
    return parser


# -- config assembly ---------------------------------------------------------


def _load_config_file(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        d = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError("--config", f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON in {path}: {exc}") from None
    if not isinstance(d, dict):
        raise ConfigError("", "config must be a JSON object")
    return d


_MODE_ANGLE_KEYS = {"single": ("a", "b"), "chsh": ("a", "a_prime", "b", "b_prime")}


def merge_config(args: argparse.Namespace) -> dict:
    """Config file overlaid with command-line flags."""
    d = _load_config_file(args.config)
    mode = dict(d.get("mode") or {})
    if args.mode:
        if mode.get("kind") != args.mode:
            mode = {"kind": args.mode}
    if args.angles is not None:
        kind = mode.get("kind")
        if kind in _MODE_ANGLE_KEYS:
            keys = _MODE_ANGLE_KEYS[kind]
            if len(args.angles) != len(keys):
                raise ConfigError("--angles", f"mode {kind} needs {len(keys)} angles, got {len(args.angles)}")
            mode.update(zip(keys, args.angles))
        elif kind == "ekert":
            mode["angle_set"] = list(args.angles)
        else:
            raise ConfigError("--mode", "required when --angles is given without a config mode")
    if args.choice_seeds is not None:
        mode["choice_seeds"] = list(args.choice_seeds)
    if mode:
        d["mode"] = mode
    if args.seed is not None:
        d["seed"] = args.seed
    if args.n is not None:
        d["n"] = args.n
    if args.out is not None:
        d["output_dir"] = str(args.out)
    if args.timeout is not None:
        d.setdefault("transport", {})
        d["transport"] = dict(d["transport"], timeout=args.timeout)
    return d


# -- subcommands -------------------------------------------------------------


def _write_run_report(cfg: protocol.RunConfig, fmt: str, min_count: int) -> analysis.Report:
    _, records, _ = protocol.load_artifacts(cfg.output_dir)
    report = analysis.build_report(cfg, records[1], records[2], min_count)
    analysis.emit_report(report, fmt, Path(cfg.output_dir) / REPORT_FILES[fmt])
    analysis.write_plot_data(report, Path(cfg.output_dir) / PLOT_FILE)
    return report


def cmd_run(args) -> int:
    d = merge_config(args)
    transport = dict(d.get("transport") or {})
    transport = {"kind": "in-process", **({"timeout": transport["timeout"]} if "timeout" in transport else {})}
    d["transport"] = transport
    cfg = protocol.RunConfig.from_dict(d)
    protocol.coordinate_run(cfg)
    report = _write_run_report(cfg, args.format, args.min_count)
    sys.stdout.write(analysis.format_report(report, args.format))
    return EXIT_OK


def cmd_coordinate(args) -> int:
    d = merge_config(args)
    transport = dict(d.get("transport") or {})
    transport["kind"] = "tcp"
    if args.host is not None:
        transport["host"] = args.host
    if args.port is not None:
        transport["port"] = args.port
    d["transport"] = transport
    cfg = protocol.RunConfig.from_dict(d)
    coord = protocol.Coordinator(cfg)
    host, port = coord.bind()
    print(f"listening {host}:{port}", file=sys.stderr, flush=True)
    artifacts = coord.run()
    json.dump(
        {"output_dir": str(artifacts.output_dir), "run_id": cfg.run_id, "status": artifacts.status, "files": artifacts.manifest["files"]},
        sys.stdout,
        indent=2,
    )
    sys.stdout.write("\n")
    return EXIT_OK


def cmd_station(args) -> int:
    if args.connect:
        host, sep, port = args.connect.rpartition(":")
        if not sep or not port.isdigit():
            raise UsageError(f"--connect expects HOST:PORT, got {args.connect!r}")
        records = protocol.connect_station(args.role, host or "127.0.0.1", int(port), timeout=args.timeout)
        json.dump({"role": args.role, "records": len(records)}, sys.stdout)
        sys.stdout.write("\n")
        return EXIT_OK
    missing = [f for f in ("seed", "n", "policy") if getattr(args, f) is None]
    if missing:
        raise UsageError("file mode needs " + ", ".join("--" + m for m in missing) + " (or use --connect)")
    try:
        seed = prng.parse_seed(args.seed)
    except ValueError as exc:
        raise ConfigError("--seed", str(exc)) from None
    records = run_station(args.role, seed, args.n, parse_policy(args.policy))
    write_records(records, sys.stdout if args.out == "-" else args.out)
    return EXIT_OK


def cmd_analyze(args) -> int:
    cfg, records, _ = protocol.load_artifacts(args.input)
    report = analysis.build_report(cfg, records[1], records[2], args.min_count)
    analysis.emit_report(report, args.format, sys.stdout if args.out == "-" else args.out)
    if args.plot is not None:
        analysis.write_plot_data(report, args.plot)
    return EXIT_OK


def _grid(k: int) -> list[float]:
    return [2 * math.pi * i / k for i in range(k)]


def verification_checks(grid: int, tol: float, norm_tol: float, cov_grid: int, cov_tol: float):
    """Run the quadrature checks; returns (checks, rows) where each check is (name, max_err, tol, seconds)."""
    if grid < 1 or cov_grid < 1:
        raise ValidationError("grid sizes must be >= 1")
    if not (tol > 0 and norm_tol > 0 and cov_tol > 0):
        raise ValidationError("tolerances must be positive")
    checks, rows = [], []

    def run(name, pairs, fn, target, t):
        start = time.perf_counter()
        worst = 0.0
        for a, b in pairs:
            value = fn(a, b)
            worst = max(worst, abs(value - target(a, b)))
            rows.append({"a": a, "b": b, "value": value, "tol": t, "method": name})
        checks.append((name, worst, t, time.perf_counter() - start))

    pts = [(a, b) for a in _grid(grid) for b in _grid(grid)]
    run("correlation", pts, lambda a, b: quadrature.correlation_quadrature(a, b, tol),
        lambda a, b: -math.cos(b - a), tol)
    run("normalization", pts, lambda a, b: quadrature.normalization_quadrature(a, b, norm_tol),
        lambda a, b: 1.0, norm_tol)
    run("marginal_station1", pts, lambda a, b: quadrature.marginal_quadrature(1, a, b, tol),
        lambda a, b: 0.0, tol)
    run("marginal_station2", pts, lambda a, b: quadrature.marginal_quadrature(2, a, b, tol),
        lambda a, b: 0.0, tol)
    cpts = [(a, b) for a in _grid(cov_grid) for b in _grid(cov_grid)]
    run("change_of_variables", cpts, lambda a, b: quadrature.correlation_change_of_variables(a, b, cov_tol),
        lambda a, b: quadrature.correlation_quadrature(a, b, tol), cov_tol)
    return checks, rows


def cmd_verify(args) -> int:
    checks, rows = verification_checks(args.grid, args.tol, args.norm_tol, args.cov_grid, args.cov_tol)
    if args.json:
        for row in rows:
            sys.stdout.write(json.dumps(row) + "\n")
    else:
        for name, worst, tol, secs in checks:
            status = "PASS" if worst <= tol else "FAIL"
            sys.stdout.write(f"{status}  {name:<20} max_err={worst:.3e}  tol={tol:.0e}  time={secs:.3f}s\n")
    return EXIT_OK if all(worst <= tol for _, worst, tol, _ in checks) else EXIT_RUNTIME


COMMANDS = {
    "run": cmd_run,
    "station": cmd_station,
    "coordinate": cmd_coordinate,
    "analyze": cmd_analyze,
    "verify": cmd_verify,
}


def dispatch(argv: list[str]) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ChameleonError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
