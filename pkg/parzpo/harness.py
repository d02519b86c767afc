"""Study orchestration and result files.

Output layout::

    <out>/config.json                       resolved manifest
    <out>/summary.csv                       one row per run, aggregates
    <out>/curves.csv                        seed-averaged learning curves
    <out>/<name>/<variant>/<seed>/trace.csv
    <out>/<name>/<variant>/<seed>/run.json

A verify-all study writes ``verify_report.json`` and ``checks/`` instead
of traces.
"""

from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
import csv
import json
import logging
import numpy as np

from parzpo.config import variant_config, variants
from parzpo.core import Role, RngStream
from parzpo.federate import empty_trace, run
from parzpo.handler import ProtocolError
from parzpo.perturb import sample_perturbation
from parzpo.policy import Policy, initial_params
from parzpo.preference import separation_histogram
from parzpo.verify import run_checks, write_reports

logger = logging.getLogger(__name__)

SUMMARY_COLUMNS = (
    "study",
    "variant",
    "seed",
    "final_value_mean",
    "final_value_stderr",
    "iterations",
    "traj_total",
    "bits_total",
)
CURVE_COLUMNS = ("variant", "t", "value_mean", "value_stderr")


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows([[_cell(v) for v in row] for row in rows])


def write_resolved(manifest, out):
    """Echo the resolved manifest to ``<out>/config.json``."""

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "config.json", "w") as f:
        json.dump(manifest.to_dict(), f, sort_keys=True, indent=2)
        f.write("\n")


@dataclass
class RunResult:
    """Trace of one study run; ``failure`` is set when the run aborted."""

    variant: str
    seed: int
    trace: object
    failure: str = None


@dataclass
class StudyResult:
    """Runs of a study, or check reports of a verify-all study."""

    out: Path
    runs: list = field(default_factory=list)
    reports: list = field(default_factory=list)

    @property
    def failures(self):
        return [r for r in self.runs if r.failure] + [r for r in self.reports if not r.passed]

    @property
    def passed(self):
        return not self.failures


def execute(job):
    """Run one ``(variant, config, archive)`` job, recording failures."""

    variant, config, archive = job
    try:
        return RunResult(variant, config.seed, run(config, archive=archive))
    except ProtocolError as err:
        logger.warning("run %s seed=%d failed in stage %r", variant, config.seed, err.stage)
        return RunResult(variant, config.seed, err.trace, str(err))
    except Exception as err:
        failure = f"{type(err).__name__}: {err}"
        logger.warning("run %s seed=%d failed: %s", variant, config.seed, failure)
        trace = getattr(err, "trace", None) or empty_trace(config)
        trace.failure = failure
        return RunResult(variant, config.seed, trace, failure)


def summary_rows(study, results):
    """Rows of ``summary.csv``.

    Unless the study is a single run, each variant is followed by an
    aggregate row: the mean and sample standard deviation of the final
    values of its successful runs, and the sums of the run totals.
    """

    rows = []
    grouped = OrderedDict()
    for result in results:
        grouped.setdefault(result.variant, []).append(result)

    for variant, group in grouped.items():
        finals = []
        totals = np.zeros(3, dtype=np.int64)
        for result in group:
            summary = result.trace.summary()
            rows.append(
                (
                    study,
                    variant,
                    result.seed,
                    summary["final_value_mean"],
                    summary["final_value_stderr"],
                    summary["iterations"],
                    summary["traj_total"],
                    summary["bits_total"],
                )
            )
            totals += (summary["iterations"], summary["traj_total"], summary["bits_total"])
            if summary["final_value_mean"] is not None:
                finals.append(summary["final_value_mean"])

        if study == "single-run":
            continue
        mean = float(np.mean(finals)) if finals else None
        std = float(np.std(finals, ddof=1)) if len(finals) > 1 else (0.0 if finals else None)
        rows.append((study, variant, "aggregate", mean, std, *totals.tolist()))
    return rows


def emit_plotdata(traces, out=None):
    """Seed-averaged learning curves in long format.

    :param list traces: ``(variant, trace)`` pairs
    :param str out: path of ``curves.csv``, written if given
    :returns: rows ``(variant, t, value_mean, value_stderr)``
    """

    if not traces:
        raise ValueError("no traces to aggregate")

    grouped = OrderedDict()
    for variant, trace in traces:
        grouped.setdefault(variant, []).append(trace)

    rows = []
    for variant, group in grouped.items():
        lengths = {len(trace.records) for trace in group}
        T = min(lengths)
        if len(lengths) > 1:
            logger.warning(
                "variant %s: iteration counts %s differ, truncating to %d",
                variant,
                sorted(lengths),
                T,
            )
        values = np.array([[r.value_mean for r in trace.records[:T]] for trace in group])
        values = values.reshape(len(group), T)
        means = values.mean(axis=0)
        if len(group) > 1:
            stderr = values.std(axis=0, ddof=1) / np.sqrt(len(group))
        else:
            stderr = np.zeros(T)
        rows.extend((variant, t + 1, means[t], stderr[t]) for t in range(T))

    if out is not None:
        _write_csv(out, CURVE_COLUMNS, rows)
    return rows


def study_jobs(manifest, run_root, archive=False):
    jobs = []
    for variant, config in variants(manifest):
        for seed in manifest.seeds:
            seeded = variant_config(manifest, config, variant, seed)
            h5 = str(run_root / variant / str(seed) / "archive.h5") if archive else None
            jobs.append((variant, seeded, h5))
    return jobs


def run_study(manifest, out=None, jobs=1, archive=False, quick=False):
    """Execute a study and write its result files.

    Runs are distributed over ``jobs`` worker processes; results are
    written in submission order, so the files do not depend on ``jobs``.
    """

    out = Path(out or manifest.output or "results")
    write_resolved(manifest, out)
    result = StudyResult(out)

    if manifest.study == "verify-all":
        result.reports = run_checks(manifest.seeds[0], quick, jobs, manifest.checks)
        write_reports(result.reports, out)
        return result

    run_root = out / manifest.name
    job_list = study_jobs(manifest, run_root, archive)
    for _, _, h5 in job_list:
        if h5:
            Path(h5).parent.mkdir(parents=True, exist_ok=True)
    logger.info("study %s: %d runs", manifest.name, len(job_list))

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            result.runs = list(pool.map(execute, job_list))
    else:
        result.runs = [execute(job) for job in job_list]

    for r in result.runs:
        r.trace.write(run_root / r.variant / str(r.seed))

    _write_csv(out / "summary.csv", SUMMARY_COLUMNS, summary_rows(manifest.study, result.runs))
    completed = [(r.variant, r.trace) for r in result.runs if r.trace.records]
    if completed:
        emit_plotdata(completed, out / "curves.csv")

    if result.failures:
        logger.warning(
            "study %s: %d of %d runs failed",
            manifest.name,
            len(result.failures),
            len(result.runs),
        )
    else:
        logger.info("study %s: all runs finished", manifest.name)
    return result


def histogram(manifest, out, Ds=(1, 2, 4, 8), batches=500, bins=30):
    """Batch-mean histograms of the initial policy and one perturbation.

    Writes ``histogram_D<D>.csv`` per batch size (columns
    ``policy,batch_index,batch_mean``) and ``overlap.json``.
    """

    config = manifest.base
    seed = manifest.seeds[0]
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)

    theta = initial_params(config.policy, RngStream(seed, (Role.INIT, 0)))
    v = sample_perturbation(config.perturbation, config.d, RngStream(seed, (Role.SAMPLE, 0)))
    current = Policy(config.policy, theta)
    perturbed = current.with_params(theta + config.mu * v.values)

    overlaps = {}
    for D in Ds:
        rng = RngStream(seed, (Role.SAMPLE, 1, D))
        separation = separation_histogram(config.env, current, perturbed, D, batches, rng, bins)
        columns = ("policy", "batch_index", "batch_mean")
        _write_csv(out / f"histogram_D{D}.csv", columns, separation.rows())
        overlaps[str(D)] = separation.overlap
        logger.info("D=%d overlap %.4f", D, separation.overlap)

    with open(out / "overlap.json", "w") as f:
        json.dump(overlaps, f, sort_keys=True, indent=2)
        f.write("\n")
    return overlaps
