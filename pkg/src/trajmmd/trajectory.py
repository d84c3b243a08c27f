"""Trajectory containers, validation, resampling and flattening to R^{3N}.

Units are SI throughout: lateral offset in meters (signed, relative to the
lane centerline), speed in m/s, heading in radians.  Conversions from other
units belong at ingestion.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "CHANNELS",
    "MPH_TO_MPS",
    "StateSample",
    "Trajectory",
    "Violation",
    "ValidationReport",
    "ChannelScaling",
    "FeatureVector",
    "SubjectDataset",
    "validate",
    "resample",
    "flatten",
    "unflatten",
    "align_dataset",
]

CHANNELS = ("lateral_offset", "speed", "heading")
MPH_TO_MPS = 0.44704
SPACING_TOL = 1e-6
INTERPOLATION = "linear"


@dataclass(frozen=True)
class StateSample:
    t: float
    lateral_offset: float
    speed: float
    heading: float


def _frozen(a, name) -> np.ndarray:
    v = np.array(a, dtype=np.float64).reshape(-1)
    v.setflags(write=False)
    return v


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One time-indexed sequence of (lateral offset, speed, heading) samples.

    Channels are stored as read-only column arrays.  Construction only
    checks that the columns line up; use :func:`validate` for the rest.
    """

    t: np.ndarray
    lateral_offset: np.ndarray
    speed: np.ndarray
    heading: np.ndarray
    subject_id: str = ""
    trial: int = 0
    curve_index: int = 0
    sample_rate: float = 60.0

    def __post_init__(self):
        for name in ("t",) + CHANNELS:
            object.__setattr__(self, name, _frozen(getattr(self, name), name))
        n = self.t.size
        lens = {name: getattr(self, name).size for name in CHANNELS}
        if any(v != n for v in lens.values()):
            raise InputError(f"channel lengths differ: t={n}, {lens}")
        if not (np.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise InputError(f"sample_rate must be positive, got {self.sample_rate!r}")

    @classmethod
    def from_samples(cls, samples: Iterable[StateSample], **meta) -> "Trajectory":
        rows = [(s.t, s.lateral_offset, s.speed, s.heading) for s in samples]
        a = np.array(rows, dtype=np.float64).reshape(-1, 4)
        return cls(a[:, 0], a[:, 1], a[:, 2], a[:, 3], **meta)

    def __len__(self) -> int:
        return self.t.size

    @property
    def samples(self) -> list[StateSample]:
        return [StateSample(*map(float, r)) for r in zip(self.t, self.lateral_offset, self.speed, self.heading)]

    @property
    def states(self) -> np.ndarray:
        """``(N, 3)`` array with columns in :data:`CHANNELS` order."""
        return np.column_stack([self.lateral_offset, self.speed, self.heading])

    @property
    def label(self) -> str:
        return f"subject {self.subject_id!r} trial {self.trial} curve {self.curve_index}"

    def with_meta(self, **meta) -> "Trajectory":
        return replace(self, **meta)


@dataclass(frozen=True)
class Violation:
    kind: str  # non_finite | non_monotone | irregular_spacing | negative_speed | empty
    index: int | None
    channel: str | None
    message: str


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok

    def __len__(self) -> int:
        return len(self.violations)

    def of_kind(self, kind: str) -> list[Violation]:
        return [v for v in self.violations if v.kind == kind]

    def summary(self, limit: int = 5) -> str:
        lines = [v.message for v in self.violations[:limit]]
        if len(self.violations) > limit:
            lines.append(f"... and {len(self.violations) - limit} more")
        return "; ".join(lines)


def validate(traj: Trajectory, check_spacing: bool = True, tol: float = SPACING_TOL) -> ValidationReport:
    """List every invariant violation of ``traj``; an empty report means valid.

    Spacing is checked against ``1 / traj.sample_rate`` and only when the
    time column is finite and strictly increasing.  Raw recordings with
    jittered clocks can be checked with ``check_spacing=False`` before
    :func:`resample` puts them on a uniform grid.
    """
    out: list[Violation] = []
    if len(traj) == 0:
        return ValidationReport((Violation("empty", None, None, "trajectory has no samples"),))
    for name in ("t",) + CHANNELS:
        col = getattr(traj, name)
        for i in np.flatnonzero(~np.isfinite(col)):
            out.append(Violation("non_finite", int(i), name, f"non-finite {name} at index {i}"))
    t = traj.t
    t_finite = bool(np.all(np.isfinite(t)))
    monotone = True
    if t_finite:
        for i in np.flatnonzero(np.diff(t) <= 0) + 1:
            monotone = False
            out.append(Violation("non_monotone", int(i), "t", f"time not strictly increasing at index {i} ({float(t[i - 1])!r} -> {float(t[i])!r})"))
    spd = traj.speed
    for i in np.flatnonzero(np.isfinite(spd) & (spd < 0)):
        out.append(Violation("negative_speed", int(i), "speed", f"negative speed {float(spd[i])!r} at index {i}"))
    if check_spacing and t_finite and monotone and len(traj) > 1:
        dev = np.abs(np.diff(t) - 1.0 / traj.sample_rate)
        bad = np.flatnonzero(dev > tol)
        if bad.size:
            i = int(bad[0]) + 1
            out.append(
                Violation(
                    "irregular_spacing",
                    i,
                    "t",
                    f"{bad.size} intervals deviate from 1/{traj.sample_rate:g} s by more than {tol:g} s "
                    f"(first at index {i}, max deviation {dev.max():.3g} s)",
                )
            )
    return ValidationReport(tuple(out))


def _require(traj: Trajectory, check_spacing: bool) -> None:
    rep = validate(traj, check_spacing=check_spacing)
    if not rep.ok:
        raise InputError(f"invalid trajectory ({traj.label}): {rep.summary()}")


def resample(traj: Trajectory, N: int, rate: float) -> Trajectory:
    """Linearly interpolate every channel onto ``t0 + k / rate``, ``k < N``."""
    if N < 2:
        raise InputError(f"N must be >= 2, got {N}")
    if not rate > 0:
        raise InputError(f"rate must be positive, got {rate}")
    _require(traj, check_spacing=False)
    t0 = traj.t[0]
    grid = t0 + np.arange(N) / rate
    span = (N - 1) / rate
    have = traj.t[-1] - t0
    # allow a few ulps so a trajectory sampled exactly on the grid is accepted
    if have < span - 1e-9 * max(1.0, span):
        raise InputError(f"{traj.label} spans {have:.6g} s but {N} samples at {rate:g} Hz need {span:.6g} s")
    grid[-1] = min(grid[-1], traj.t[-1])
    cols = {name: np.interp(grid, traj.t, getattr(traj, name)) for name in CHANNELS}
    return replace(traj, t=grid, sample_rate=float(rate), **cols)


@dataclass(frozen=True)
class ChannelScaling:
    """Per-channel affine map ``(value - mean) / std``, fitted on a reference set."""

    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    kind: str = "zscore"

    @classmethod
    def fit(cls, reference: Sequence[Trajectory]) -> "ChannelScaling":
        """Population mean and stddev of each channel over all reference samples."""
        if not reference:
            raise InputError("z-score scaling needs a nonempty reference set")
        stacked = np.vstack([tr.states for tr in reference])
        mu = stacked.mean(axis=0)
        sd = stacked.std(axis=0)
        if np.any(sd == 0):
            ch = CHANNELS[int(np.flatnonzero(sd == 0)[0])]
            raise InputError(f"channel {ch!r} is constant over the reference set; cannot z-score")
        return cls(tuple(map(float, mu)), tuple(map(float, sd)))

    def apply(self, states: np.ndarray) -> np.ndarray:
        return (states - np.asarray(self.mean)) / np.asarray(self.std)

    def invert(self, scaled: np.ndarray) -> np.ndarray:
        return scaled * np.asarray(self.std) + np.asarray(self.mean)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mean": list(self.mean), "std": list(self.std)}


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """A trajectory flattened time-major: ``[lat_0, spd_0, hdg_0, lat_1, ...]``.

    Behaves as an array (``np.asarray(fv)``), so it can be handed straight to
    the kernel functions.
    """

    values: np.ndarray
    n_steps: int
    scaling: ChannelScaling | None = None
    layout: tuple[str, ...] = field(default=CHANNELS)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values, "values"))
        if self.values.size != len(self.layout) * self.n_steps:
            raise InputError(f"feature vector length {self.values.size} != {len(self.layout)} x {self.n_steps}")

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self) -> int:
        return self.values.size

    def unflatten(self) -> np.ndarray:
        """Recover the ``(N, 3)`` state array in original units."""
        return unflatten(self)


def flatten(traj: Trajectory, scaling: ChannelScaling | None = None) -> FeatureVector:
    """Flatten a uniformly sampled trajectory into a :class:`FeatureVector`.

    ``scaling=None`` keeps raw units.  For z-scoring pass a
    :class:`ChannelScaling` fitted on a reference set of trajectories.
    """
    _require(traj, check_spacing=True)
    states = traj.states
    if scaling is not None:
        states = scaling.apply(states)
    return FeatureVector(states.reshape(-1), len(traj), scaling)


def unflatten(fv: FeatureVector) -> np.ndarray:
    states = fv.values.reshape(fv.n_steps, len(fv.layout))
    if fv.scaling is not None:
        states = fv.scaling.invert(states)
    return states.copy()


@dataclass(frozen=True, eq=False)
class SubjectDataset:
    """All trajectories of one subject in chronological order.

    ``fixation_durations`` (seconds), when present, is aligned one-to-one
    with ``trajectories``.
    """

    subject_id: str
    trajectories: tuple[Trajectory, ...]
    fixation_durations: tuple[float, ...] | None = None

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        if not trajs:
            raise InputError(f"subject {self.subject_id!r} has no trajectories")
        object.__setattr__(self, "trajectories", trajs)
        if self.fixation_durations is not None:
            fix = tuple(float(v) for v in self.fixation_durations)
            if len(fix) != len(trajs):
                raise InputError(
                    f"subject {self.subject_id!r}: {len(fix)} fixation durations for {len(trajs)} trajectories"
                )
            object.__setattr__(self, "fixation_durations", fix)

    def __len__(self) -> int:
        return len(self.trajectories)

    def features(self, scaling: ChannelScaling | None = None) -> list[FeatureVector]:
        return [flatten(tr, scaling) for tr in self.trajectories]


def align_dataset(ds: SubjectDataset, N: int, rate: float) -> SubjectDataset:
    """Resample every trajectory of ``ds`` to ``N`` samples at ``rate`` Hz."""
    out = []
    for tr in ds.trajectories:
        try:
            out.append(resample(tr, N, rate))
        except InputError as exc:
            raise InputError(
                f"cannot align subject {ds.subject_id!r} trial {tr.trial} curve {tr.curve_index}: {exc}"
            ) from exc
    return replace(ds, trajectories=tuple(out))
