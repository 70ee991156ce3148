"""``mobnet`` command line.

Exit codes: 0 success, 1 configuration error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import yaml

from . import pipeline, synth
from .config import OUTPUT_ENV, ConfigError, load_config
from .geodata import GeodataError
from .ingest import IngestError
from .motifs import MotifError
from .similarity import SimilarityError

logger = logging.getLogger("mobnet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 1, 2


def _profile(text: str) -> synth.ProviderProfile:
    parts = text.split(":")
    if len(parts) != 5:
        raise argparse.ArgumentTypeError("profile must be name:penetration:interval_s:noise_m:dropout")
    name, pen, interval, noise, drop = parts
    try:
        return synth.ProviderProfile(name, float(pen), float(interval), float(noise), float(drop))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def cmd_synth(args) -> int:
    out = Path(args.out)
    profiles = args.profile or list(synth.DEFAULT_PROFILES)
    world = synth.generate_world(args.side, args.devices, args.seed, n_counties=args.counties)
    dates = synth.date_range(args.start, args.days)
    dirs = synth.emit_pings(world, profiles, dates, args.emit_seed, out, compress=args.gzip)
    config = {
        "counties": {
            c: {"name": f"Synthetic {c}", "tracts": f"tracts_{c}.geojson",
                "pings": {name: name for name in dirs}}
            for c in world.counties
        },
        "dates": {"start": dates[0], "end": dates[-1]},
        "output_dir": "out",
    }
    (out / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=False))
    print(out / "config.yaml")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mobnet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("config", help="run configuration (YAML or JSON)")
        p.add_argument("--threads", type=int, default=None, help="override worker count (0 = auto)")
        p.add_argument("--output-dir", default=None, help=f"override output directory (or set {OUTPUT_ENV})")
        return p

    with_config(sub.add_parser("ingest", help="parse pings into stop and trip stores"))
    with_config(sub.add_parser("build-network", help="aggregate trips into daily networks"))
    p = with_config(sub.add_parser("analyze", help="compute metrics at one scale"))
    p.add_argument("--scale", choices=["macro", "motif", "micro"], required=True)
    with_config(sub.add_parser("compare", help="cross-source verdict tables"))
    with_config(sub.add_parser("report", help="network sizes and verdicts as Markdown"))
    with_config(sub.add_parser("run", help="ingest, build-network, analyze all scales, compare, report"))

    s = sub.add_parser("synth", help="generate a synthetic multi-provider dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--side", type=int, default=10, help="tracts per grid side")
    s.add_argument("--devices", type=int, default=5000)
    s.add_argument("--counties", type=int, default=2)
    s.add_argument("--start", default="2020-02-01")
    s.add_argument("--days", type=int, default=29)
    s.add_argument("--seed", type=int, default=1, help="world seed")
    s.add_argument("--emit-seed", type=int, default=2, help="ping emission seed")
    s.add_argument("--profile", type=_profile, action="append",
                   help="name:penetration:interval_s:noise_m:dropout (repeatable)")
    s.add_argument("--gzip", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return cmd_synth(args)
        config = load_config(args.config)
        if args.threads is not None:
            if args.threads < 0:
                raise ConfigError("threads must be >= 0")
            config.threads = args.threads
        if args.output_dir is not None and not os.environ.get(OUTPUT_ENV):
            config.output_dir = Path(args.output_dir)
        if args.command == "ingest":
            pipeline.cmd_ingest(config)
        elif args.command == "build-network":
            pipeline.cmd_build_network(config)
        elif args.command == "analyze":
            pipeline.cmd_analyze(config, args.scale)
        elif args.command == "compare":
            pipeline.cmd_compare(config)
        elif args.command == "report":
            print(pipeline.cmd_report(config))
        elif args.command == "run":
            pipeline.run_all(config)
    except ConfigError as exc:
        logger.error("config error: %s", exc)
        return EXIT_CONFIG
    except (pipeline.DataError, GeodataError, IngestError, MotifError, SimilarityError) as exc:
        logger.error("data error: %s", exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
