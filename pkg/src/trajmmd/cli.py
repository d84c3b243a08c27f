"""``trajmmd`` command line: simulate, analyze, bandwidth, regress.

Exit codes: 0 success, 1 input or usage error, 2 some subjects failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bandwidth import select_bandwidth
from .errors import InputError, SelectionError
from .io import (
    AnalyzeOptions,
    Manifest,
    ManifestEntry,
    ManifestSubject,
    emit_report,
    load_manifest,
    load_subject,
    read_report,
    run_analyze,
    write_manifest,
    write_trajectory_csv,
)
from .synthetic import LearningSchedule, ManeuverModel, generate_subject
from .trajectory import align_dataset
from .variability import SplitSpec, segmented_ols

log = logging.getLogger("trajmmd")

EXIT_OK, EXIT_INPUT, EXIT_PARTIAL = 0, 1, 2

SCHEDULES = {
    "constant": dict(mode="constant", initial_noise=0.3),
    "decay": dict(mode="geometric_decay", initial_noise=0.6, decay_ratio=0.6),
    "decay-growth": dict(mode="decay_then_growth", initial_noise=0.6, decay_ratio=0.6, reversal_index=4),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage; 2 is reserved for partial failure here
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _grid(text: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must be comma-separated numbers, got {text!r}")
    if not vals or any(not v > 0 for v in vals):
        raise argparse.ArgumentTypeError(f"grid values must be positive, got {text!r}")
    return vals


def _sigma(text: str):
    if text.strip().lower() == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"sigma must be 'auto' or a number, got {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError("sigma must be positive")
    return v


def _split(text: str) -> SplitSpec:
    try:
        return SplitSpec.parse(text)
    except InputError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trajmmd", description=__doc__.splitlines()[0].replace("``", ""))
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (-vv for debug)")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", help="write synthetic subjects as CSVs plus a manifest")
    s.add_argument("--subjects", type=int, default=6, help="number of subjects (default 6)")
    s.add_argument("--trials", type=int, default=12, help="trajectories per subject (default 12)")
    s.add_argument("--schedule", choices=sorted(SCHEDULES), default="decay", help="noise schedule across trials")
    s.add_argument("--seed", type=int, default=0, help="root seed (default 0)")
    s.add_argument("--N", type=int, default=1100, help="samples per trajectory (default 1100)")
    s.add_argument("--rate", type=float, default=60.0, help="sample rate in Hz (default 60)")
    s.add_argument("--no-fixations", action="store_true", help="omit synthetic fixation durations")
    s.add_argument("--out", required=True, type=Path, help="output directory")

    a = sub.add_parser("analyze", help="compute MMD profiles, trends and regressions")
    a.add_argument("--manifest", required=True, type=Path)
    a.add_argument("--sigma", type=_sigma, default=None, help="'auto' or a bandwidth (default: manifest)")
    a.add_argument("--grid", type=_grid, default=None, help="candidate bandwidths for --sigma auto")
    a.add_argument("--split", type=_split, default=None, help="baseline/final counts, e.g. 8/4 (default: manifest)")
    a.add_argument("--scaling", choices=("none", "zscore"), default="none")
    a.add_argument("--rho-threshold", type=float, default=0.4)
    a.add_argument("--format", choices=("json", "csv"), default="json")
    a.add_argument("--threads", type=int, default=None)
    a.add_argument("--out", required=True, type=Path, help="output directory")

    b = sub.add_parser("bandwidth", help="grid-search the kernel bandwidth")
    b.add_argument("--manifest", required=True, type=Path)
    b.add_argument("--grid", type=_grid, required=True, help="comma-separated candidate bandwidths")
    b.add_argument("--split", type=_split, default=None)

    r = sub.add_parser("regress", help="segmented fixation-vs-MMD regression from a JSON report")
    r.add_argument("--report", required=True, type=Path)
    r.add_argument("--breakpoint", type=int, required=True, help="last baseline position of the first segment")
    r.add_argument("--orientation", choices=("fixation_on_mmd", "mmd_on_fixation"), default="fixation_on_mmd")
    return p


def cmd_simulate(args) -> int:
    if args.subjects < 1 or args.trials < 2:
        raise InputError("need --subjects >= 1 and --trials >= 2")
    final = max(1, args.trials // 3)
    split = SplitSpec(args.trials - final, final)
    sched = SCHEDULES[args.schedule]
    if sched["mode"] == "decay_then_growth":
        sched = dict(sched, reversal_index=min(sched["reversal_index"], args.trials - 1))
    schedule = LearningSchedule(**sched)
    model = ManeuverModel()
    subj_seeds = np.random.SeedSequence(args.seed).generate_state(args.subjects)
    subjects = []
    for k, sseed in enumerate(subj_seeds, start=1):
        sid = f"S{k:02d}"
        ds = generate_subject(
            model,
            schedule,
            args.trials,
            args.N,
            args.rate,
            int(sseed),
            subject_id=sid,
            fixation_intercept=None if args.no_fixations else 2.0,
            fixation_slope=-0.1,
            fixation_noise=0.1,
        )
        entries = []
        for i, tr in enumerate(ds.trajectories):
            path = args.out / sid / f"{sid}_trial{tr.trial:02d}_curve{tr.curve_index}.csv"
            write_trajectory_csv(tr, path)
            fix = None if ds.fixation_durations is None else ds.fixation_durations[i]
            entries.append(ManifestEntry(path, tr.trial, tr.curve_index, fix))
        subjects.append(ManifestSubject(sid, tuple(entries)))
    manifest = Manifest("1", tuple(subjects), args.N, args.rate, 32.0, split)
    write_manifest(manifest, args.out / "manifest.json")
    print(args.out / "manifest.json")
    return EXIT_OK


def cmd_analyze(args) -> int:
    manifest = load_manifest(args.manifest, check_split=args.split is None)
    opts = AnalyzeOptions(
        sigma=args.sigma,
        split=args.split,
        scaling=args.scaling,
        rho_threshold=args.rho_threshold,
        threads=args.threads,
        **({} if args.grid is None else {"grid": args.grid}),
    )
    report = run_analyze(manifest, opts)
    for p in emit_report(report, args.format, args.out):
        print(p)
    m = report.metadata
    log.info("sigma=%r via %s; %d subjects ok, %d failed", m["sigma"], m["sigma_method"], len(report.subjects), len(report.failures))
    for f in report.failures:
        print(f"FAILED {f['subject_id']}: {f['error']}", file=sys.stderr)
    return EXIT_OK if report.ok else EXIT_PARTIAL


def cmd_bandwidth(args) -> int:
    manifest = load_manifest(args.manifest, check_split=args.split is None)
    split = args.split or manifest.split
    datasets = [align_dataset(load_subject(s), manifest.N, manifest.rate) for s in manifest.subjects]
    sel = select_bandwidth(datasets, args.grid, split, details=True)
    for s, sc in sel.scores:
        print(f"sigma={s:g}\tscore={'skipped' if sc != sc else f'{sc:.6g}'}")
    print(f"selected sigma={sel.sigma:g}")
    return EXIT_OK


def cmd_regress(args) -> int:
    report = read_report(args.report)
    rc = EXIT_OK
    for s in report.subjects:
        if s.fixation_durations is None:
            print(f"{s.subject_id}: no fixation data")
            continue
        mmd_v, fix = np.asarray(s.profile.mmd_values), np.asarray(s.fixation_durations)
        if args.orientation == "fixation_on_mmd":
            x, y, xn, yn = mmd_v, fix, "mmd", "fixation_duration_s"
        else:
            x, y, xn, yn = fix, mmd_v, "fixation_duration_s", "mmd"
        try:
            first, second = segmented_ols(x, y, args.breakpoint, xn, yn)
        except InputError as exc:
            print(f"{s.subject_id}: {exc}", file=sys.stderr)
            rc = EXIT_PARTIAL
            continue
        b, n = args.breakpoint, len(x)
        print(first.describe(f"{s.subject_id} trajectories 1-{b}"))
        print(second.describe(f"{s.subject_id} trajectories {b + 1}-{n}"))
    return rc


COMMANDS = {"simulate": cmd_simulate, "analyze": cmd_analyze, "bandwidth": cmd_bandwidth, "regress": cmd_regress}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INPUT
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_INPUT
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InputError, SelectionError, OSError) as exc:
        print(f"trajmmd {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
