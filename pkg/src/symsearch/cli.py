"""Command-line entry point: ``symsearch {solve,bench,noise,ablate,registry}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 budget exhausted
without recovery (solve only).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiments as ex
from .benchmarks import Registry
from .config import PRESETS, ConfigError, load_config

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_UNSOLVED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _levels(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated numbers, got {text!r}")


def _names(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="symsearch", description="Symbolic regression by guided tree search.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, runs=True):
        sp.add_argument("--config", help="JSON config file (see symsearch.config)")
        sp.add_argument("--preset", choices=sorted(PRESETS), default="defaults",
                        help="named settings applied before --config (default: defaults)")
        sp.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=JSON",
                        help="override a config key, e.g. --set run.max_episodes=50")
        sp.add_argument("--out", help="report JSON path (default: stdout)")
        if runs:
            sp.add_argument("--suite", default="nguyen-mini", help="registry suite")
            sp.add_argument("--runs", type=int, default=5, help="runs per benchmark")
            sp.add_argument("--jobs", type=int, default=1, help="worker processes")

    s = sub.add_parser("solve", help="search for an expression fitting CSV data")
    s.add_argument("data", help="CSV with header x1,...,xm,y")
    s.add_argument("--library", type=_names, default=["const"],
                   help="extensions to the base library, comma-separated (default const)")
    s.add_argument("--trace", help="reward-trace CSV path (default: <out>.trace.csv)")
    common(s, runs=False)

    common(sub.add_parser("bench", help="run a benchmark suite"))
    n = sub.add_parser("noise", help="recovery versus noise level")
    n.add_argument("--levels", type=_levels, default=[0.0, 0.01, 0.05, 0.1])
    common(n)
    a = sub.add_parser("ablate", help="bench with components disabled, beside the baseline")
    a.add_argument("--disable", type=_names, default=[],
                   help="comma-separated subset of entropy,constraints,snrmse")
    common(a)

    r = sub.add_parser("registry", help="inspect the benchmark registry")
    r.add_argument("action", choices=["list"])
    r.add_argument("--suite", help="only this suite")
    return p


def _config(args):
    overrides = {}
    for item in args.set:
        key, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=JSON, got {item!r}")
        try:
            overrides[key] = json.loads(val)
        except json.JSONDecodeError:
            overrides[key] = val
    try:
        return load_config(args.config, overrides, preset=args.preset)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {args.config}") from None
    except ConfigError as e:
        raise UsageError(str(e)) from None


def _emit(rep, timing, out):
    ex.validate_report(rep)
    text = ex.dump_report(rep)
    if out is None:
        sys.stdout.write(text)
        return
    Path(out).write_text(text)
    if timing is not None:
        Path(out + ".timing.json").write_text(json.dumps(timing, indent=2) + "\n")


def _registry_list(args):
    reg = Registry.load()
    specs = reg.suite(args.suite) if args.suite else list(reg)
    for s in specs:
        flag = "" if s.supported else "  [unsupported]"
        print(f"{s.name:16s} {s.infix}  {s.sampling.kind}[{s.sampling.low:g},{s.sampling.high:g},"
              f"{s.sampling.count}]{flag}")
    if not args.suite:
        print("suites: " + ", ".join(sorted(reg.suites)))


def _solve(args, cfg):
    ds = ex.read_csv(args.data)
    rep, res = ex.solve(cfg, ds, args.seed, tuple(args.library))
    _emit(rep, None, args.out)
    trace = args.trace or (args.out + ".trace.csv" if args.out else None)
    if trace:
        ex.write_trace(trace, res.trace)
    status = "recovered" if res.solved else "not recovered"
    print(f"{status}: {res.best_infix} (reward {res.best_reward:.6g})", file=sys.stderr)
    return EXIT_OK if res.solved else EXIT_UNSOLVED


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "registry":
            _registry_list(args)
            return EXIT_OK
        cfg = _config(args)
        if args.command == "solve":
            return _solve(args, cfg)
        if args.runs < 0:
            raise UsageError("--runs must be >= 0")
        if args.command == "bench":
            rep, timing = ex.bench(cfg, args.suite, args.runs, args.seed, args.jobs)
        elif args.command == "noise":
            rep, timing = ex.noise_sweep(cfg, args.suite, args.levels, args.runs, args.seed, args.jobs)
        else:
            rep, timing = ex.ablate(cfg, args.disable, args.suite, args.runs, args.seed, args.jobs)
        _emit(rep, timing, args.out)
        return EXIT_OK
    except ex.DataError as e:
        print(f"symsearch: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (UsageError, KeyError, ValueError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"symsearch: error: {msg}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
