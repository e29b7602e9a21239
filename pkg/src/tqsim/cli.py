"""Command-line entry point: ``tqsim <subcommand> --config run.json``."""
from __future__ import annotations

import argparse
import sys

from .pipeline import ExperimentConfig, StageError, run

SUBCOMMANDS = {
    "thermal-green": "thermal_green",
    "ground-green": "ground_green",
    "otoc": "otoc",
    "music": "music_only",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tqsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, protocol in SUBCOMMANDS.items():
        p = sub.add_parser(name, help=f"run the {protocol} protocol")
        p.add_argument("--config", help="JSON experiment configuration", required=name != "music")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--evolution", choices=("exact", "trotter1", "trotter2"))
        p.add_argument("--noise-epsilon", type=float, dest="noise_epsilon")
        p.add_argument("--shots", type=int)
        if name == "music":
            p.add_argument("--signal", help="CSV signal file with index, real, imag columns")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    protocol = SUBCOMMANDS[args.command]
    try:
        cfg = ExperimentConfig.from_file(args.config) if args.config else ExperimentConfig(protocol=protocol)
    except (OSError, ValueError, TypeError) as exc:
        print(f"[config] {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    cfg.protocol = protocol
    if getattr(args, "signal", None):
        cfg.signal_file = args.signal
    cfg = cfg.with_overrides(args.out, args.seed, args.evolution, args.noise_epsilon, args.shots)
    try:
        art = run(cfg)
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    for key, path in sorted(art.files.items()):
        print(f"{key}: {path}")
    dev = art.provenance.get("max_oracle_deviation")
    if dev is not None:
        print(f"max oracle deviation: {dev:.3e}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
