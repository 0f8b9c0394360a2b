"""Command line: ``engramlab {run,list,emit-plots,validate}``.

Exit codes: 0 success, 2 usage, 3 config, 4 runtime.
"""
from __future__ import annotations

import argparse
import json
import sys

from ..errors import ConfigError, EngramLabError, UsageError
from .config import load_config
from .experiments import REGISTRY
from .runner import emit_plot_data, run

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="engramlab", description="Run engram model experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run the experiment described by a config file")
    r.add_argument("config")
    sub.add_parser("list", help="list registered experiments and their defaults")
    e = sub.add_parser("emit-plots", help="write long-format plot data for a finished run")
    e.add_argument("manifest")
    v = sub.add_parser("validate", help="check a config file without running it")
    v.add_argument("config")
    return p


def main(argv=None) -> int:
    try:
        args = _parser().parse_args(argv)
        if args.command == "list":
            for name, exp in REGISTRY.items():
                print(f"{name}\t{exp.trials} trials\t{exp.description}")
                print("    params " + json.dumps(exp.defaults, sort_keys=True))
            return EXIT_OK
        if args.command == "validate":
            cfg = load_config(args.config, REGISTRY)
            print(f"ok: {cfg.experiment}, {cfg.trials} trials, seed {cfg.seed}")
            return EXIT_OK
        if args.command == "run":
            cfg = load_config(args.config, REGISTRY)
            m = run(cfg)
            print(f"{m.experiment}: {len(m.files)} files in {m.output_dir} ({m.duration_s:.1f} s)")
            return EXIT_OK
        path = emit_plot_data(args.manifest)
        print(path)
        return EXIT_OK
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        # a missing config file is a config problem; a missing output is a runtime one
        code = EXIT_CONFIG if args.command in ("run", "validate") and exc.filename == args.config \
            else EXIT_RUNTIME
        print(f"error: {exc}", file=sys.stderr)
        return code
    except (EngramLabError, OSError, ValueError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
