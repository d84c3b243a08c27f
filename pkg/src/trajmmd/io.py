"""Manifest and CSV ingestion, the batch analysis run, and report files.

Manifest (JSON, ``version`` "1")::

    {
      "version": "1",
      "defaults": {"N": 1100, "rate": 60.0, "sigma": 32, "split": "8/4"},
      "subjects": [
        {"subject_id": "S01",
         "trajectories": [
           {"path": "S01/t01_c1.csv", "trial": 1, "curve_index": 1,
            "fixation_duration_s": 1.42},
           ...]}
      ]
    }

Paths are relative to the manifest's directory.  ``sigma`` is a positive
number or ``"auto"``.  ``fixation_duration_s`` must be given for all of a
subject's trajectories or for none.

Trajectory CSV: header ``t,lat_offset_m,speed_mps,heading_rad``, one row per
sample, ``.`` as decimal separator.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .bandwidth import median_heuristic, select_bandwidth
from .errors import InputError, SelectionError
from .kernel import Kernel, default_threads
from .trajectory import INTERPOLATION, CHANNELS, ChannelScaling, SubjectDataset, Trajectory, align_dataset, flatten, validate
from .variability import (
    RegressionResult,
    SplitSpec,
    TrendStatistics,
    VariabilityProfile,
    mmd_sequence,
    regress_fixation,
    trend_statistics,
)

__all__ = [
    "CSV_HEADER",
    "MANIFEST_VERSION",
    "Manifest",
    "ManifestEntry",
    "ManifestSubject",
    "AnalyzeOptions",
    "SubjectResult",
    "AnalysisReport",
    "load_manifest",
    "write_manifest",
    "load_trajectory_csv",
    "write_trajectory_csv",
    "load_subject",
    "run_analyze",
    "emit_report",
    "read_report",
]

log = logging.getLogger(__name__)

CSV_HEADER = ("t", "lat_offset_m", "speed_mps", "heading_rad")
MANIFEST_VERSION = "1"
REPORT_SCHEMA = "trajmmd-report/1"
DEFAULT_GRID = (1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0, 256.0)

PROFILE_COLUMNS = ("subject_id", "trajectory_index", "mmd")
TREND_COLUMNS = (
    "subject_id",
    "spearman_rho",
    "ols_slope",
    "classification",
    "first_half_rho",
    "second_half_rho",
    "rho_threshold",
    "degenerate",
)
REGRESSION_COLUMNS = ("subject_id", "segment", "x_name", "y_name", "slope", "intercept", "r_squared", "n")


def _fmt(v: float) -> str:
    return repr(float(v))


# --------------------------------------------------------------------------
# manifest


@dataclass(frozen=True)
class ManifestEntry:
    path: Path
    trial: int
    curve_index: int
    fixation_duration_s: float | None = None


@dataclass(frozen=True)
class ManifestSubject:
    subject_id: str
    trajectories: tuple[ManifestEntry, ...]

    @property
    def has_fixations(self) -> bool:
        return any(e.fixation_duration_s is not None for e in self.trajectories)


@dataclass(frozen=True)
class Manifest:
    version: str
    subjects: tuple[ManifestSubject, ...]
    N: int = 1100
    rate: float = 60.0
    sigma: float | str = 32.0
    split: SplitSpec = SplitSpec()
    path: Path | None = None


def _sigma_value(v) -> float | str:
    if isinstance(v, str) and v.strip().lower() == "auto":
        return "auto"
    try:
        s = float(v)
    except (TypeError, ValueError):
        raise InputError(f"sigma must be a positive number or 'auto', got {v!r}") from None
    Kernel(s)
    return s


def _require_key(d: dict, key: str, where: str):
    if not isinstance(d, dict) or key not in d:
        raise InputError(f"{where}: missing required field {key!r}")
    return d[key]


def load_manifest(path, check_split: bool = True) -> Manifest:
    """Parse and validate a manifest; every referenced CSV must exist.

    With ``check_split`` (the default) each subject must have exactly as many
    trajectories as the declared split consumes.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"manifest not found: {path}") from None
    except OSError as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise InputError(f"{path}: manifest must be a JSON object")
    version = str(_require_key(doc, "version", str(path)))
    if version != MANIFEST_VERSION:
        raise InputError(f"{path}: unsupported manifest version {version!r} (expected {MANIFEST_VERSION!r})")
    defaults = doc.get("defaults", {}) or {}
    try:
        N = int(defaults.get("N", 1100))
        rate = float(defaults.get("rate", 60.0))
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: bad defaults: {exc}") from None
    if N < 2 or not rate > 0:
        raise InputError(f"{path}: defaults need N >= 2 and rate > 0, got N={N}, rate={rate}")
    sigma = _sigma_value(defaults.get("sigma", 32.0))
    split = SplitSpec.parse(defaults.get("split", "8/4"))

    base = path.parent
    subjects = []
    seen_paths: set[Path] = set()
    seen_ids: set[str] = set()
    raw_subjects = _require_key(doc, "subjects", str(path))
    if not isinstance(raw_subjects, list):
        raise InputError(f"{path}: 'subjects' must be a list")
    for k, s in enumerate(raw_subjects):
        sid = str(_require_key(s, "subject_id", f"{path}: subjects[{k}]"))
        if sid in seen_ids:
            raise InputError(f"{path}: duplicate subject_id {sid!r}")
        seen_ids.add(sid)
        raw_trajs = _require_key(s, "trajectories", f"{path}: subject {sid!r}")
        if not isinstance(raw_trajs, list) or not raw_trajs:
            raise InputError(f"{path}: subject {sid!r} needs a nonempty 'trajectories' list")
        entries = []
        for j, t in enumerate(raw_trajs):
            where = f"{path}: subject {sid!r} trajectories[{j}]"
            p = Path(_require_key(t, "path", where))
            full = p if p.is_absolute() else base / p
            if full in seen_paths:
                raise InputError(f"{where}: path {p} listed twice")
            seen_paths.add(full)
            if not full.is_file():
                raise InputError(f"{where}: trajectory file not found: {full}")
            fix = t.get("fixation_duration_s")
            try:
                entries.append(
                    ManifestEntry(
                        full,
                        int(t.get("trial", 0)),
                        int(t.get("curve_index", 0)),
                        None if fix is None else float(fix),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise InputError(f"{where}: {exc}") from None
        subj = ManifestSubject(sid, tuple(entries))
        if subj.has_fixations and any(e.fixation_duration_s is None for e in entries):
            raise InputError(f"{path}: subject {sid!r} gives fixation_duration_s for some trajectories but not all")
        if check_split and len(entries) != split.total:
            raise InputError(
                f"{path}: subject {sid!r} has {len(entries)} trajectories but split {split} needs {split.total}"
            )
        subjects.append(subj)
    return Manifest(version, tuple(subjects), N, rate, sigma, split, path)


def write_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    base = path.parent.resolve()
    doc = {
        "version": MANIFEST_VERSION,
        "defaults": {"N": manifest.N, "rate": manifest.rate, "sigma": manifest.sigma, "split": str(manifest.split)},
        "subjects": [
            {
                "subject_id": s.subject_id,
                "trajectories": [
                    {
                        "path": os.path.relpath(Path(e.path).resolve(), base),
                        "trial": e.trial,
                        "curve_index": e.curve_index,
                        **({} if e.fixation_duration_s is None else {"fixation_duration_s": e.fixation_duration_s}),
                    }
                    for e in s.trajectories
                ],
            }
            for s in manifest.subjects
        ],
    }
    _atomic_write(path, json.dumps(doc, indent=2) + "\n")


# --------------------------------------------------------------------------
# trajectory CSV


def load_trajectory_csv(
    path,
    subject_id: str = "",
    trial: int = 0,
    curve_index: int = 0,
    sample_rate: float | None = None,
) -> Trajectory:
    """Read one trajectory CSV.

    ``sample_rate`` defaults to ``(n - 1) / (t[-1] - t[0])``.  The result must
    be finite, strictly increasing in time and have nonnegative speed;
    spacing is not checked here because :func:`~trajmmd.trajectory.resample`
    regularizes it.
    """
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: empty file")
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise InputError(f"{path}: header must be {','.join(CSV_HEADER)!r}, got {','.join(header)!r}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(CSV_HEADER):
                raise InputError(f"{path}: line {lineno}: expected {len(CSV_HEADER)} columns, got {len(row)}")
            vals = []
            for col, cell in zip(CSV_HEADER, row):
                try:
                    vals.append(float(cell))
                except ValueError:
                    raise InputError(f"{path}: line {lineno}, column {col!r}: not a number: {cell!r}") from None
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    a = np.array(rows)
    if sample_rate is None:
        span = a[-1, 0] - a[0, 0]
        sample_rate = (len(a) - 1) / span if len(a) > 1 and span > 0 else 1.0
    tr = Trajectory(a[:, 0], a[:, 1], a[:, 2], a[:, 3], subject_id, trial, curve_index, float(sample_rate))
    rep = validate(tr, check_spacing=False)
    if not rep.ok:
        raise InputError(f"{path}: {rep.summary()}")
    return tr


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Write ``traj`` with round-trip exact (17 significant digit) numbers."""
    lines = [",".join(CSV_HEADER)]
    for row in zip(traj.t, traj.lateral_offset, traj.speed, traj.heading):
        lines.append(",".join(f"{v:.17g}" for v in row))
    _atomic_write(Path(path), "\n".join(lines) + "\n")


def load_subject(subject: ManifestSubject) -> SubjectDataset:
    trajs = tuple(load_trajectory_csv(e.path, subject.subject_id, e.trial, e.curve_index) for e in subject.trajectories)
    fix = tuple(e.fixation_duration_s for e in subject.trajectories) if subject.has_fixations else None
    return SubjectDataset(subject.subject_id, trajs, fix)


# --------------------------------------------------------------------------
# analysis


@dataclass(frozen=True)
class AnalyzeOptions:
    sigma: float | str | None = None  # None: manifest default
    split: SplitSpec | None = None
    scaling: str = "none"  # none | zscore
    grid: tuple[float, ...] = DEFAULT_GRID
    rho_threshold: float = 0.4
    threads: int | None = None


@dataclass(frozen=True)
class SubjectResult:
    subject_id: str
    profile: VariabilityProfile
    trend: TrendStatistics
    fixation_durations: tuple[float, ...] | None = None
    regression: RegressionResult | None = None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {
            "subject_id": self.subject_id,
            "mmd": list(self.profile.mmd_values),
            "trend": asdict(self.trend),
        }
        if self.fixation_durations is not None:
            d["fixation_durations_s"] = list(self.fixation_durations)
        if self.regression is not None:
            d["regression"] = asdict(self.regression)
        return d

    @classmethod
    def from_dict(cls, d: dict, kernel: Kernel, split: SplitSpec) -> "SubjectResult":
        profile = VariabilityProfile(d["subject_id"], tuple(d["mmd"]), kernel, split)
        reg = d.get("regression")
        fix = d.get("fixation_durations_s")
        return cls(
            d["subject_id"],
            profile,
            TrendStatistics(**d["trend"]),
            None if fix is None else tuple(fix),
            None if reg is None else RegressionResult(**reg),
        )


@dataclass
class AnalysisReport:
    """Everything one ``analyze`` run produced, plus what is needed to redo it.

    ``metadata["generated_at"]`` is the only field that varies between
    otherwise identical runs.
    """

    subjects: list[SubjectResult] = field(default_factory=list)
    failures: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "metadata": self.metadata,
            "subjects": [s.to_dict() for s in self.subjects],
            "failures": list(self.failures),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisReport":
        if d.get("schema") != REPORT_SCHEMA:
            raise InputError(f"not a report document (schema {d.get('schema')!r})")
        meta = d.get("metadata", {})
        kernel = Kernel(meta["sigma"], meta.get("kernel", "gaussian"))
        split = SplitSpec.parse(meta["split"])
        subjects = [SubjectResult.from_dict(s, kernel, split) for s in d.get("subjects", [])]
        return cls(subjects, list(d.get("failures", [])), meta)


def _choose_sigma(datasets: list[SubjectDataset], grid, split, scalings) -> tuple[float, str]:
    """Grid search over ``grid``; median heuristic on final sets if it fails."""
    per_subject = [scalings[ds.subject_id] for ds in datasets]
    try:
        return select_bandwidth(datasets, grid, split, scaling=per_subject), "grid_search"
    except SelectionError as exc:
        log.warning("grid search failed (%s); falling back to median heuristic", exc)
    feats = [
        flatten(tr, sc).values
        for ds, sc in zip(datasets, per_subject)
        for tr in ds.trajectories[split.baseline_count :]
    ]
    return median_heuristic(feats), "median_heuristic"


def _prepare(subject: ManifestSubject, manifest: Manifest, split: SplitSpec, scaling: str):
    ds = load_subject(subject)
    split.check(ds)
    ds = align_dataset(ds, manifest.N, manifest.rate)
    sc = ChannelScaling.fit(ds.trajectories) if scaling == "zscore" else None
    for tr in ds.trajectories:
        flatten(tr, sc)
    return ds, sc


def run_analyze(manifest: Manifest, options: AnalyzeOptions = AnalyzeOptions()) -> AnalysisReport:
    """Align, flatten, embed and profile every subject in ``manifest``.

    A failing subject is recorded in ``report.failures`` with its error
    message; the others are unaffected.  Subjects are processed in parallel
    and reported in ``subject_id`` order.
    """
    split = options.split or manifest.split
    sigma_opt = manifest.sigma if options.sigma is None else options.sigma
    if options.scaling not in ("none", "zscore"):
        raise InputError(f"scaling must be 'none' or 'zscore', got {options.scaling!r}")
    threads = options.threads or default_threads()

    def prep(subject):
        try:
            return subject.subject_id, _prepare(subject, manifest, split, options.scaling), None
        except (InputError, ValueError) as exc:
            return subject.subject_id, None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        prepared = list(pool.map(prep, manifest.subjects))
    failures = {sid: err for sid, _, err in prepared if err is not None}
    ready = {sid: res for sid, res, err in prepared if err is None}

    datasets = [ready[sid][0] for sid in sorted(ready)]
    scalings = {sid: ready[sid][1] for sid in ready}
    if sigma_opt == "auto":
        if not datasets:
            raise InputError("no subject could be loaded; cannot select a bandwidth")
        sigma, method = _choose_sigma(datasets, options.grid, split, scalings)
    else:
        sigma, method = float(sigma_opt), "fixed"
    kernel = Kernel(sigma)
    log.info("kernel bandwidth sigma=%r (%s)", sigma, method)

    def analyze(ds: SubjectDataset):
        try:
            profile = mmd_sequence(ds, split, kernel, scalings[ds.subject_id], threads=1)
            trend = trend_statistics(profile, options.rho_threshold)
            fix = reg = None
            if ds.fixation_durations is not None:
                fix = ds.fixation_durations[: split.baseline_count]
                reg = regress_fixation(profile, ds)
            return SubjectResult(ds.subject_id, profile, trend, fix, reg), None
        except (InputError, ValueError) as exc:
            return None, str(exc)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        analyzed = list(pool.map(analyze, datasets))
    results = []
    for ds, (res, err) in zip(datasets, analyzed):
        if err is None:
            results.append(res)
        else:
            failures[ds.subject_id] = err
    for sid, err in sorted(failures.items()):
        log.error("subject %s failed: %s", sid, err)

    metadata = {
        "tool": "trajmmd",
        "tool_version": __version__,
        "manifest": str(manifest.path) if manifest.path is not None else None,
        "kernel": kernel.family,
        "sigma": sigma,
        "sigma_method": method,
        "sigma_grid": list(options.grid) if method == "grid_search" else None,
        "split": str(split),
        "N": manifest.N,
        "rate": manifest.rate,
        "layout": "time-major:" + ",".join(CHANNELS),
        "scaling": options.scaling,
        "scaling_reference": "per-subject, all trajectories" if options.scaling == "zscore" else None,
        "interpolation": INTERPOLATION,
        "estimator": "biased",
        "rho_threshold": options.rho_threshold,
        "regression_orientation": "fixation_on_mmd",
        "generated_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    return AnalysisReport(
        results,
        [{"subject_id": sid, "error": err} for sid, err in sorted(failures.items())],
        metadata,
    )


# --------------------------------------------------------------------------
# report files


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def _csv_text(columns: Sequence[str], rows: list[Sequence[Any]]) -> str:
    out = [",".join(columns)]
    for r in rows:
        out.append(",".join(_fmt(v) if isinstance(v, float) else str(v) for v in r))
    return "\n".join(out) + "\n"


def emit_report(report: AnalysisReport, fmt: str, out_dir) -> list[Path]:
    """Write ``report.json`` or the three CSV tables into ``out_dir``.

    CSV columns: ``profiles.csv`` = subject_id, trajectory_index (1-based),
    mmd; ``trends.csv`` = one row per subject with the trend statistics;
    ``regressions.csv`` = one row per fitted line (segment ``all``).
    """
    out_dir = Path(out_dir)
    if fmt == "json":
        p = out_dir / "report.json"
        _atomic_write(p, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        return [p]
    if fmt != "csv":
        raise InputError(f"format must be 'json' or 'csv', got {fmt!r}")
    profiles, trends, regs = [], [], []
    for s in report.subjects:
        for i, v in enumerate(s.profile.mmd_values, start=1):
            profiles.append((s.subject_id, i, float(v)))
        t = s.trend
        trends.append(
            (s.subject_id, t.spearman_rho, t.ols_slope, t.classification, t.first_half_rho, t.second_half_rho, t.rho_threshold, t.degenerate)
        )
        if s.regression is not None:
            r = s.regression
            regs.append((s.subject_id, "all", r.x_name, r.y_name, r.slope, r.intercept, r.r_squared, r.n))
    paths = [out_dir / "profiles.csv", out_dir / "trends.csv", out_dir / "regressions.csv"]
    for p, cols, rows in zip(paths, (PROFILE_COLUMNS, TREND_COLUMNS, REGRESSION_COLUMNS), (profiles, trends, regs)):
        _atomic_write(p, _csv_text(cols, rows))
    return paths


def read_report(path) -> AnalysisReport:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"report not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return AnalysisReport.from_dict(doc)
