"""Command line interface: ``parzpo {run,study,verify,histogram}``."""

import argparse
import logging
from pathlib import Path
import sys

from parzpo.config import ConfigError, load_config, variant_config
from parzpo.federate import run
from parzpo.handler import ProtocolError
from parzpo.harness import histogram, run_study, write_resolved
from parzpo.verify import CHECKS, run_checks, summary_table, write_reports

logger = logging.getLogger(__name__)


def _cmd_run(args):
    manifest = load_config(args.config, args.seed)
    out = Path(args.out or manifest.output or "results")
    config = variant_config(manifest, manifest.base, "base", manifest.seeds[0])
    write_resolved(manifest, out)

    archive = str(out / "archive.h5") if args.archive else None
    try:
        trace = run(config, jobs=args.jobs, archive=archive)
    except ProtocolError as err:
        err.trace.write(out)
        print(err, file=sys.stderr)
        return 1
    trace.write(out)
    summary = trace.summary()
    print(
        f"final value {summary['final_value_mean']} after {summary['iterations']} "
        f"iterations, {summary['traj_total']} trajectories, {summary['bits_total']} bits"
    )
    return 0


def _cmd_study(args):
    manifest = load_config(args.config, args.seed)
    result = run_study(manifest, args.out, args.jobs, args.archive, args.quick)
    if result.reports:
        print(summary_table(result.reports))
    else:
        print(f"{len(result.runs)} runs, {len(result.failures)} failed -> {result.out}")
    return 0 if result.passed else 1


def _cmd_verify(args):
    reports = run_checks(args.seed, args.quick, args.jobs, args.check)
    write_reports(reports, args.out)
    print(summary_table(reports))
    return 0 if all(r.passed for r in reports) else 1


def _cmd_histogram(args):
    manifest = load_config(args.config, args.seed)
    out = args.out or manifest.output or "results"
    overlaps = histogram(manifest, out, args.D, args.batches, args.bins)
    for D, overlap in overlaps.items():
        print(f"D={D}: overlap {overlap:.4f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="parzpo",
        description="Federated preference-based zeroth-order policy optimization",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = parser.add_subparsers(dest="cmd", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="JSON manifest")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the seed list")

    run_p = sub.add_parser("run", help="single optimization run")
    common(run_p)
    run_p.add_argument("--jobs", type=int, default=1, help="agent threads")
    run_p.add_argument("--archive", action="store_true", help="write an HDF5 archive")
    run_p.set_defaults(func=_cmd_run)

    study_p = sub.add_parser("study", help="run every variant and seed of a manifest")
    common(study_p)
    study_p.add_argument("--jobs", type=int, default=1, help="worker processes")
    study_p.add_argument("--archive", action="store_true", help="write HDF5 archives")
    study_p.add_argument("--quick", action="store_true", help="reduced check sizes")
    study_p.set_defaults(func=_cmd_study)

    verify_p = sub.add_parser("verify", help="run the verification checks")
    common(verify_p, config=False)
    verify_p.set_defaults(out="results", seed=0)
    verify_p.add_argument("--jobs", type=int, default=1, help="worker processes")
    verify_p.add_argument("--quick", action="store_true", help="reduced sample sizes")
    verify_p.add_argument(
        "--check", action="append", choices=list(CHECKS), help="run only this check"
    )
    verify_p.set_defaults(func=_cmd_verify)

    hist_p = sub.add_parser("histogram", help="batch-mean histograms per batch size")
    common(hist_p)
    hist_p.add_argument("--D", type=int, nargs="+", default=[1, 2, 4, 8], help="batch sizes")
    hist_p.add_argument("--batches", type=int, default=500, help="batches per policy")
    hist_p.add_argument("--bins", type=int, default=30, help="histogram bins")
    hist_p.set_defaults(func=_cmd_histogram)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)

    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s %(message)s")

    if getattr(args, "jobs", 1) < 1:
        parser.error("--jobs must be >= 1")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
