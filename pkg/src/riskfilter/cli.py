"""Command-line entry point.

    riskfilter run CONFIG [-o OUT] [--set key=value ...] [--jobs N]
    riskfilter synth CONFIG [-o OUT] [--set key=value ...]
    riskfilter report RUN_DIR
    riskfilter verify {riccati,optimality,limits,oracle,all}

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or usage,
3 some grid point did not converge.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import checks
from . import serialize as ser
from .exceptions import ConfigError, FilterError, IntegrationError, RiskFilterError
from .kalman import default_jobs
from .scenarios import ScenarioConfig, build, improvement_stats, run_scenario
from .synth import synthesize

EXIT_OK, EXIT_FAILURE, EXIT_CONFIG, EXIT_NONCONVERGED = 0, 1, 2, 3

log = logging.getLogger("riskfilter")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def _parse_value(text: str):
    try:
        return json.loads(text)
    except ValueError:
        pass
    if "," in text:
        return [_parse_value(part.strip()) for part in text.split(",") if part.strip()]
    return text


def parse_overrides(pairs) -> dict:
    """``["seed=3", "theta_list=0.5,20"]`` -> ``{"seed": 3, "theta_list": [0.5, 20]}``."""
    out = {}
    for pair in pairs or ():
        key, sep, value = pair.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {pair!r} is not of the form key=value")
        value = _parse_value(value.strip())
        if key.strip() == "theta_list" and not isinstance(value, list):
            value = [value]
        out[key.strip()] = value
    return out


def load_config(path, overrides=()) -> ScenarioConfig:
    data = ser.load_config_file(path)
    data.update(parse_overrides(overrides))
    return ScenarioConfig.from_dict(data)


def _write(out: Path, rel: str, text: str, hashes: dict):
    path = out / rel
    path.parent.mkdir(parents=True, exist_ok=True)
    hashes[rel] = ser.write_text(path, text)


def write_run(result, out: Path) -> dict:
    """Write every artifact of a scenario run and return the manifest."""
    out.mkdir(parents=True, exist_ok=True)
    config_dict = result.config.to_dict()
    grid = result.bank.grid
    report = result.report
    hashes = {}
    _write(out, "config.json", ser.dumps(config_dict), hashes)
    _write(out, "report.csv", ser.report_csv(report), hashes)
    summary = ser.report_to_dict(report)
    try:
        st = improvement_stats(report)
        summary["improvement"] = {
            "theta_max": st.theta_max,
            "esssup_improvement": st.esssup_improvement,
            "expectation_penalty": st.expectation_penalty,
        }
    except KeyError:
        pass
    summary["true_member"] = result.setup.true_member
    summary["parameters"] = result.setup.params
    _write(out, "report.json", ser.dumps(summary), hashes)
    for name, traj in result.estimators.items():
        _write(out, f"trajectories/theta_{name}.csv", ser.trajectory_csv(traj, grid), hashes)
        _write(out, f"energies/theta_{name}.csv", ser.energies_csv(report.energies[name], grid), hashes)
    _write(out, "groundtruth.json", ser.dumps(ser.groundtruth_to_dict(result.truth)), hashes)
    man = ser.manifest(config_dict, result.config.seed, grid, hashes)
    ser.write_text(out / "manifest.json", ser.dumps(man))
    return man


def cmd_run(args) -> int:
    config = load_config(args.config, args.set)
    result = run_scenario(config, jobs=args.jobs)
    write_run(result, Path(args.out))
    print(ser.report_csv(result.report), end="")
    if not result.converged:
        bad = {k: len(v) for k, v in result.report.nonconverged.items() if v}
        print(f"non-converged grid points: {bad}", file=sys.stderr)
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_synth(args) -> int:
    config = load_config(args.config, args.set)
    setup = build(config)
    from .integrate import IntegratorConfig

    truth = synthesize(setup.ensemble, config.grid(), setup.noise, IntegratorConfig(config.substeps))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    hashes = {}
    _write(out, "config.json", ser.dumps(config.to_dict()), hashes)
    _write(out, "ensemble.json", ser.dumps(ser.ensemble_to_dict(setup.ensemble)), hashes)
    _write(out, "groundtruth.json", ser.dumps(ser.groundtruth_to_dict(truth)), hashes)
    man = ser.manifest(config.to_dict(), config.seed, config.grid(), hashes)
    ser.write_text(out / "manifest.json", ser.dumps(man))
    print(f"wrote {len(hashes)} files to {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.run_dir) / "report.json"
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    labels = data["labels"]
    width = max(12, *(len(s) for s in labels))
    print("level".ljust(8) + "".join(s.rjust(width + 2) for s in labels))
    for level, row in zip(data["levels"], data["cells"]):
        print(str(level).ljust(8) + "".join(f"{v:{width + 2}.6g}" for v in row))
    imp = data.get("improvement")
    if imp:
        print(
            f"theta={imp['theta_max']:g}: esssup improvement {imp['esssup_improvement']:.1%}, "
            f"expectation penalty {imp['expectation_penalty']:.1%}"
        )
    bad = {k: len(v) for k, v in data.get("nonconverged", {}).items() if v}
    if bad:
        print(f"non-converged grid points: {bad}")
        return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.suite not in (*checks.SUITES, "all"):
        print(f"unknown suite {args.suite!r}; choose from {', '.join([*checks.SUITES, 'all'])}", file=sys.stderr)
        return EXIT_CONFIG
    results = checks.run_suite(args.suite)
    for r in results:
        print(r.line(), flush=True)
    return EXIT_OK if all(r.passed for r in results) else EXIT_FAILURE


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="riskfilter", description="Risk-averse Kalman-Bucy ensemble estimators.")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument(
        "--jobs",
        type=int,
        default=None,
        help="worker processes for the filter bank (default: RISKFILTER_JOBS or CPU count)",
    )
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, fn, helptext in (
        ("run", cmd_run, "run a scenario and write all artifacts"),
        ("synth", cmd_synth, "synthesize ground truth and measurements only"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", help="TOML or JSON scenario file")
        sp.add_argument("-o", "--out", default="out", help="output directory")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field")
        sp.set_defaults(func=fn)

    sp = sub.add_parser("report", help="print the risk table of a finished run")
    sp.add_argument("run_dir")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("verify", help="run a verification suite")
    sp.add_argument("suite", help="riccati, optimality, limits, oracle or all")
    sp.set_defaults(func=cmd_verify)
    return p


def _context(exc) -> str:
    parts = [type(exc).__module__.rsplit(".", 1)[-1], type(exc).__name__]
    if isinstance(exc, FilterError) and exc.member is not None:
        parts.append(f"member {exc.member}")
    if isinstance(exc, (FilterError, IntegrationError)) and exc.time is not None:
        parts.append(f"t={exc.time:g}")
    return ", ".join(parts)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs is None:
        args.jobs = default_jobs()
    elif args.jobs < 1:
        print("riskfilter: error: --jobs must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"riskfilter: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RiskFilterError as exc:
        print(f"riskfilter: {exc} ({_context(exc)})", file=sys.stderr)
        return EXIT_FAILURE
    except (ArithmeticError, ValueError, RuntimeError) as exc:
        print(f"riskfilter: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
