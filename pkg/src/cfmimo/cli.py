"""Command-line interface: ``cfmimo run`` and ``cfmimo sweep``.

``run`` executes the configured pipeline over one or more drops at fixed
antenna counts; ``sweep`` varies the per-AP (l) or per-UE (n) antenna
count over a value list.  Both write results.csv, trace.csv and meta.json
into the output directory.  The --combiner/--precoder/--se-path flags
accept comma lists, in which case the cross product of variants is run
into a single results file (invalid combinations are skipped with a
warning).
"""

import argparse
import logging
import sys

from .harness import SystemConfig, parse_config_file, sweep

log = logging.getLogger(__name__)


def _split(value):
    return [tok.strip() for tok in value.split(",") if tok.strip()]


def _add_common(parser):
    parser.add_argument("--config", help="key = value config file")
    parser.add_argument("--seed", type=int, help="first drop seed")
    parser.add_argument("--drops", type=int, help="number of consecutive drop seeds")
    parser.add_argument("--combiner", help="mr | lmmse (comma list allowed)")
    parser.add_argument("--precoder", help="none | wmmse1 | iwmmse (comma list allowed)")
    parser.add_argument("--se-path", dest="se_path", help="mc | closed (comma list allowed)")
    parser.add_argument("--mc-samples", dest="mc_samples", type=int,
                        help="Monte-Carlo realizations per drop")
    parser.add_argument("--workers", type=int, default=1, help="process-pool size")
    parser.add_argument("--out", default="out", help="output directory")


def _build_config(args):
    fields = parse_config_file(args.config) if args.config else {}
    if args.mc_samples is not None:
        fields["n_r"] = args.mc_samples
    config = SystemConfig(**fields)
    if args.seed is not None or args.drops is not None:
        first = args.seed if args.seed is not None else config.seeds[0]
        count = args.drops if args.drops is not None else max(len(config.seeds), 1)
        config = SystemConfig(**{**fields, "seeds": tuple(range(first, first + count))})
    return config


def _variants(args, config):
    combiners = _split(args.combiner) if args.combiner else [config.combiner]
    precoders = _split(args.precoder) if args.precoder else [config.precoder_mode]
    se_paths = _split(args.se_path) if args.se_path else [config.se_path]
    return combiners, precoders, se_paths


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = argparse.ArgumentParser(
        prog="cfmimo",
        description="Cell-free massive MIMO uplink SE simulator and precoder optimizer",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the pipeline at fixed antenna counts")
    _add_common(p_run)

    p_sweep = sub.add_parser("sweep", help="sweep antennas per AP (l) or per UE (n)")
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=("l", "n"))
    p_sweep.add_argument("--values", required=True,
                         help="comma list of antenna counts, e.g. 1,2,4")

    args = parser.parse_args(argv)
    config = _build_config(args)
    combiners, precoders, se_paths = _variants(args, config)

    if args.command == "run":
        axis, values = "l", [config.l]
    else:
        axis = args.axis
        values = [int(v) for v in _split(args.values)]

    rows, trace_rows, meta = sweep(
        config, axis, values, list(config.seeds),
        combiners=combiners, precoders=precoders, se_paths=se_paths,
        workers=args.workers, out_dir=args.out,
    )
    log.info("wrote %d result rows and %d trace rows to %s",
             len(rows), len(trace_rows), args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
