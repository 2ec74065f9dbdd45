"""Command-line entry point: ``byzregret {run,certify,replicate,plot,presets}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .aggregators import DomainError
from .certification import run_certification
from .config import ConfigError, ExperimentConfig, apply_overrides, load_config, resolve
from .engine import TrialError, run_experiment
from .presets import preset, preset_names, write_presets
from .replicate import replicate
from .results import CsvFormatError, write_results

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CERTIFY = 3
EXIT_REPLICATE = 4
CERTIFY_CSV = "certification.csv"

log = logging.getLogger("byzregret")


def _overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for item in pairs:
        if "=" not in item:
            raise ConfigError(item, "overrides must look like key=value")
        key, value = item.split("=", 1)
        out[key.strip()] = value
    return out


def cmd_run(args) -> int:
    if args.config:
        config = load_config(args.config)
    else:
        try:
            config = preset(args.preset)
        except KeyError as exc:
            raise ConfigError("preset", str(exc.args[0])) from None
    config = apply_overrides(config, _overrides(args.set))
    exp = resolve(config)
    result = run_experiment(exp, args.workers)
    paths = write_results(args.out, exp, result, __version__)
    t = int(result.steps[-1])
    line = f"T={t} mean R_T/T={result.mean_adversarial[-1] / t:.6g} max R_T/T={result.max_adversarial[-1] / t:.6g}"
    if result.mean_stochastic is not None:
        line += f" mean S_T/T={result.mean_stochastic[-1] / t:.6g}"
    print(line)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def cmd_certify(args) -> int:
    report = run_certification(args.rule, args.n, args.b, args.dim, args.cases, args.seed, args.spread, args.tau)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / CERTIFY_CSV)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_CERTIFY


def cmd_replicate(args) -> int:
    rules = args.rules.split(",") if args.rules else None
    report = replicate(args.example, rules, args.out, __version__, args.workers)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.ok else EXIT_REPLICATE


def cmd_plot(args) -> int:
    # imported lazily: matplotlib is only needed here
    from .plotting import plot_curves

    paths = [p for p in args.inputs.split(",") if p]
    curves = plot_curves(paths, args.out, logy=args.logy, metric=args.metric)
    for c in curves:
        print(f"{c.label}: slope {c.slope:.10g} per step")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_presets(args) -> int:
    if args.out is None:
        print("\n".join(preset_names()))
        return EXIT_OK
    paths = write_presets(args.out)
    print(f"wrote {len(paths)} presets to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="byzregret", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress and warnings")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write CSVs plus metadata")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="config file (a metadata.cfg record also works)")
    src.add_argument("--preset", help="named preset, see `byzregret presets`")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one key")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--workers", type=int, default=None, help="parallel trials (default: BYZ_THREADS or CPUs)")
    run.set_defaults(func=cmd_run)

    cert = sub.add_parser("certify", help="check a rule's deviation bound on random rounds")
    cert.add_argument("--rule", required=True)
    cert.add_argument("--n", type=int, required=True)
    cert.add_argument("--b", type=int, required=True)
    cert.add_argument("--dim", type=int, required=True)
    cert.add_argument("--cases", type=int, default=10_000)
    cert.add_argument("--seed", type=int, default=0)
    cert.add_argument("--spread", type=float, default=1.0, help="typical honest spread")
    cert.add_argument("--tau", type=float, default=None, help="fixed clipping radius (default: oracle radius)")
    cert.add_argument("--out", required=True)
    cert.set_defaults(func=cmd_certify)

    rep = sub.add_parser("replicate", help="re-run a counter-example and check its regret")
    rep.add_argument("--example", type=int, choices=(1, 2, 3), required=True)
    rep.add_argument("--rules", default=None, help="comma-separated rules (default depends on the example)")
    rep.add_argument("--out", required=True)
    rep.add_argument("--workers", type=int, default=None)
    rep.set_defaults(func=cmd_replicate)

    plot = sub.add_parser("plot", help="render regret curves from CSVs to SVG")
    plot.add_argument("--in", dest="inputs", required=True, metavar="CSV[,CSV...]")
    plot.add_argument("--out", required=True, metavar="FILE.svg")
    plot.add_argument("--logy", action="store_true")
    plot.add_argument("--metric", choices=("adversarial", "stochastic", "cum_loss"), default="adversarial")
    plot.set_defaults(func=cmd_plot)

    pre = sub.add_parser("presets", help="list presets, or write them as config files")
    pre.add_argument("--out", default=None)
    pre.set_defaults(func=cmd_presets)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DomainError, CsvFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrialError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
