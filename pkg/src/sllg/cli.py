"""Command-line front end.

Exit codes: 0 success; 1 a check failed or some paths failed; 2 invalid
configuration (the message names the key); 3 I/O error; 4 every path failed.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from . import ensemble
from .battery import run_battery
from .config import load_config
from .errors import ConfigError, EnsembleFailure, StatisticalPowerError
from .results import write_convergence, write_martingale, write_run

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_IO, EXIT_ALL_FAILED = 0, 1, 2, 3, 4


def build_parser():
    parser = argparse.ArgumentParser(prog="sllg", description="Stochastic LLG Galerkin simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [("simulate", "run an ensemble and write a results directory"),
                       ("verify", "run the identity and estimate battery"),
                       ("convergence", "run the (n, dt) sweep of the [sweep] section"),
                       ("martingale", "martingale and quadratic-variation diagnostics")]:
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, help="INI or JSON configuration file")
        p.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE",
                       help="replace one config value (repeatable)")
        p.add_argument("--out", help="results directory (default: output.directory)")
        p.add_argument("--workers", type=int, default=1, help="worker processes")
        p.add_argument("--quiet", action="store_true", help="suppress the summary")
        if name == "verify":
            p.add_argument("--paths", type=int, default=100,
                           help="paths used by the statistical checks")
            p.add_argument("--test-force-lambda2-zero", action="store_true", help=argparse.SUPPRESS)
            p.add_argument("--test-corrupt-normalization", type=float, default=1.0,
                           help=argparse.SUPPRESS)
    return parser


def _fmt(x, spec=".4e"):
    return "-" if x is None else format(x, spec)


def _summary(res, out):
    a = res.aggregates
    lines = [
        f"paths: {len(res.paths)}  failed: {len(res.failures)}  complete: {res.complete}",
        f"config hash: {res.config.config_hash[:16]}",
        f"max relative L2 drift: {_fmt(a['l2_drift']['max'])}",
        f"energy: {_fmt(a['energy_initial']['mean'])} -> {_fmt(a['energy_final']['mean'])}"
        f" (se {_fmt(a['energy_final']['se'], '.2e')})",
        f"sphere deviation: {_fmt(a['sphere_initial']['mean'])} -> {_fmt(a['sphere_final']['mean'])}",
        f"wall time: {res.wall_time:.2f} s",
        f"results: {out}",
    ]
    for p in res.failures[:5]:
        lines.append(f"failed path {p.index}: {p.error}")
    return "\n".join(lines)


def _with_out(cfg, out):
    if out is None:
        return cfg, Path(cfg.output.directory)
    return cfg.replace(output=dataclasses.replace(cfg.output, directory=str(out))), Path(out)


def _cmd_simulate(args, cfg, say):
    cfg, out = _with_out(cfg, args.out)
    res = ensemble.run(cfg, workers=args.workers)
    write_run(res, out)
    say(_summary(res, out))
    return EXIT_OK if res.complete else EXIT_FAILED


def _cmd_verify(args, cfg, say):
    checks = run_battery(cfg, force_lambda2_zero=args.test_force_lambda2_zero,
                         normalization=args.test_corrupt_normalization, paths=args.paths)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.ok]
    say(f"{len(checks) - len(failed)}/{len(checks)} checks passed or skipped")
    return EXIT_OK if not failed else EXIT_FAILED


def _cmd_convergence(args, cfg, say):
    cfg, out = _with_out(cfg, args.out)
    rep = ensemble.convergence_study(cfg, workers=args.workers)
    write_convergence(rep, out)
    say(f"{'n':>5} {'dt':>10} {'sphere mean':>12} {'se':>10} {'strong err':>12}")
    for n in rep.ns:
        st = rep.strong.get(n)
        for dt in rep.dts:
            r = rep.results[(n, dt)]
            err = st["error_mean"][st["dt"].index(dt)] if st else None
            say(f"{n:>5} {dt:>10.3e} {_fmt(r.mean('sphere_final'), '12.4e')} "
                f"{_fmt(r.se('sphere_final'), '10.2e')} {_fmt(err, '12.4e')}")
    for n, st in rep.strong.items():
        say(f"n={n}: fitted strong order {st['order']:.3f} (reference dt {st['reference_dt']:.3e})")
    if len(rep.ns) > 1:
        say(f"sphere deviation decreasing in n (2 sigma): {rep.sphere_trend()['decreasing_2sigma']}")
    say(f"results: {out}")
    failed = any(r.failures for r in rep.results.values())
    return EXIT_FAILED if failed else EXIT_OK


def _cmd_martingale(args, cfg, say):
    cfg, out = _with_out(cfg, args.out)
    res = ensemble.run(cfg, workers=args.workers)
    if res.martingale is None:
        raise StatisticalPowerError(
            f"martingale diagnostics need >= 100 completed paths with dense recording")
    write_martingale(res, out)
    for pr in res.martingale["probes"]:
        ci = pr["qv_ratio_ci95"]
        qv = "-" if pr["qv_ratio"] is None else f"{pr['qv_ratio']:.4f} [{ci[0]:.4f}, {ci[1]:.4f}]"
        say(f"probe {pr['probe']}: mean M(T) = {pr['mean_final']:.3e} +- {_fmt(pr['se_final'], '.2e')}"
            f"  QV ratio {qv}")
    say(f"note: {res.martingale['note']}")
    say(f"results: {out}")
    return EXIT_OK if res.complete else EXIT_FAILED


COMMANDS = {"simulate": _cmd_simulate, "verify": _cmd_verify,
            "convergence": _cmd_convergence, "martingale": _cmd_martingale}


def main(argv=None):
    args = build_parser().parse_args(argv)
    say = (lambda *a: None) if args.quiet else print
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1", key="--workers")
        cfg = load_config(args.config, args.override)
        return COMMANDS[args.command](args, cfg, say)
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"configuration error{key}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StatisticalPowerError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EnsembleFailure as exc:
        print(f"ensemble failed: {exc}", file=sys.stderr)
        return EXIT_ALL_FAILED
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
