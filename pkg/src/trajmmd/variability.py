"""Per-subject variability profiles, trend statistics and fixation regressions.

The pipeline splits a subject's chronologically ordered trajectories into a
baseline block and a final block, embeds the final block uniformly, and
measures the biased MMD from each baseline trajectory to that embedding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateInputError, InputError
from .kernel import Embedding, Kernel, embed, mmd
from .trajectory import ChannelScaling, SubjectDataset, flatten

__all__ = [
    "SplitSpec",
    "VariabilityProfile",
    "TrendStatistics",
    "RegressionResult",
    "final_embedding",
    "mmd_sequence",
    "spearman",
    "trend_statistics",
    "ols_regression",
    "regress_fixation",
    "segmented_regression",
    "segmented_ols",
]

Orientation = Literal["fixation_on_mmd", "mmd_on_fixation"]


@dataclass(frozen=True)
class SplitSpec:
    baseline_count: int = 8
    final_count: int = 4

    def __post_init__(self):
        if self.baseline_count < 1 or self.final_count < 1:
            raise InputError(f"split counts must be >= 1, got {self.baseline_count}/{self.final_count}")

    @property
    def total(self) -> int:
        return self.baseline_count + self.final_count

    @classmethod
    def parse(cls, text: str) -> "SplitSpec":
        """Parse ``"B/F"``, e.g. ``"8/4"``."""
        try:
            b, f = (int(p) for p in str(text).split("/"))
        except ValueError:
            raise InputError(f"split must look like B/F (e.g. 8/4), got {text!r}") from None
        return cls(b, f)

    def __str__(self) -> str:
        return f"{self.baseline_count}/{self.final_count}"

    def check(self, ds: SubjectDataset) -> None:
        if len(ds) != self.total:
            raise InputError(
                f"subject {ds.subject_id!r} has {len(ds)} trajectories; split {self} needs exactly {self.total}"
            )


@dataclass(frozen=True)
class VariabilityProfile:
    subject_id: str
    mmd_values: tuple[float, ...]
    kernel: Kernel
    split: SplitSpec

    def __len__(self) -> int:
        return len(self.mmd_values)

    @property
    def values(self) -> np.ndarray:
        return np.array(self.mmd_values)


@dataclass(frozen=True)
class TrendStatistics:
    spearman_rho: float
    ols_slope: float
    classification: Literal["decreasing", "flat", "increasing", "non_monotone"]
    first_half_rho: float
    second_half_rho: float
    rho_threshold: float
    degenerate: bool = False


@dataclass(frozen=True)
class RegressionResult:
    slope: float
    intercept: float
    r_squared: float
    n: int
    x_name: str = "x"
    y_name: str = "y"

    def describe(self, label: str = "") -> str:
        prefix = f"{label}: " if label else ""
        return (
            f"{prefix}{self.y_name} vs {self.x_name}: slope of {self.slope:+.2f}, "
            f"intercept {self.intercept:.3g}, r^2 = {self.r_squared:.3f} (n = {self.n})"
        )


def _features(ds: SubjectDataset, scaling: ChannelScaling | None):
    return [flatten(tr, scaling) for tr in ds.trajectories]


def final_embedding(
    ds: SubjectDataset, split: SplitSpec, kernel: Kernel, scaling: ChannelScaling | None = None
) -> Embedding:
    """Uniform embedding of the last ``split.final_count`` trajectories."""
    split.check(ds)
    feats = [flatten(tr, scaling) for tr in ds.trajectories[split.baseline_count :]]
    return embed(kernel, feats)


def mmd_sequence(
    ds: SubjectDataset,
    split: SplitSpec,
    kernel: Kernel,
    scaling: ChannelScaling | None = None,
    threads: int | None = None,
) -> VariabilityProfile:
    """MMD from each baseline trajectory (as a point mass) to the final embedding."""
    split.check(ds)
    feats = _features(ds, scaling)
    final = embed(kernel, feats[split.baseline_count :])
    values = tuple(mmd(embed(kernel, [f]), final, threads).value for f in feats[: split.baseline_count])
    return VariabilityProfile(ds.subject_id, values, kernel, split)


def spearman(x: Sequence[float], y: Sequence[float] | None = None) -> tuple[float, bool]:
    """Spearman correlation with average ranks for ties.

    ``y`` defaults to the positions ``1..n``.  Returns ``(rho, degenerate)``;
    if either rank vector is constant, rho is reported as 0 and
    ``degenerate`` is True.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.arange(1, x.size + 1, dtype=np.float64) if y is None else np.asarray(y, dtype=np.float64)
    if x.size != y.size:
        raise InputError(f"length mismatch: {x.size} vs {y.size}")
    if x.size < 2:
        return 0.0, True
    rx = rankdata(x) - (x.size + 1) / 2.0
    ry = rankdata(y) - (y.size + 1) / 2.0
    sxx = float(rx @ rx)
    syy = float(ry @ ry)
    if sxx == 0 or syy == 0:
        return 0.0, True
    rho = float(rx @ ry) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, rho)), False


def trend_statistics(profile: VariabilityProfile | Sequence[float], rho_threshold: float = 0.4) -> TrendStatistics:
    """Classify the trend of an MMD sequence.

    ``non_monotone`` wins whenever the first half has Spearman rho at most
    ``-rho_threshold`` and the second half at least ``+rho_threshold``;
    otherwise the whole-sequence rho decides between decreasing, increasing
    and flat.  For odd lengths the middle element belongs to the second half.
    """
    values = np.asarray(profile.mmd_values if isinstance(profile, VariabilityProfile) else profile, dtype=np.float64)
    n = values.size
    if n < 3:
        raise InputError(f"trend statistics need at least 3 values, got {n}")
    rho, degenerate = spearman(values)
    slope = ols_regression(np.arange(1, n + 1), values).slope
    h = n // 2
    rho1, _ = spearman(values[:h])
    rho2, _ = spearman(values[h:])
    if rho1 <= -rho_threshold and rho2 >= rho_threshold:
        cls = "non_monotone"
    elif rho <= -rho_threshold:
        cls = "decreasing"
    elif rho >= rho_threshold:
        cls = "increasing"
    else:
        cls = "flat"
    return TrendStatistics(rho, slope, cls, rho1, rho2, rho_threshold, degenerate)


def ols_regression(x: Sequence[float], y: Sequence[float], x_name: str = "x", y_name: str = "y") -> RegressionResult:
    """Simple least squares line ``y = intercept + slope * x``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise InputError(f"x and y must be 1-D of equal length, got {x.shape} and {y.shape}")
    n = x.size
    if n < 2:
        raise InputError(f"regression needs at least 2 points, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InputError("regression inputs must be finite")
    if np.all(x == x[0]):
        raise DegenerateInputError(f"{x_name} has zero variance; slope undefined")
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    # an exactly constant y must give slope 0 and r^2 0, whatever mean() rounds to
    dy = np.zeros_like(y) if np.all(y == y[0]) else y - ym
    if not dy.any():
        ym = y[0]
    sxx = math.fsum(dx * dx)
    sxy = math.fsum(dx * dy)
    syy = math.fsum(dy * dy)
    slope = sxy / sxx
    intercept = ym - slope * xm
    r2 = 0.0 if syy == 0 else min(1.0, sxy * sxy / (sxx * syy))
    return RegressionResult(slope, intercept, r2, n, x_name, y_name)


def _fixation_xy(profile: VariabilityProfile, ds: SubjectDataset, orientation: Orientation):
    if ds.fixation_durations is None:
        raise InputError(f"subject {ds.subject_id!r} has no fixation durations")
    b = len(profile)
    if len(ds.fixation_durations) < b:
        raise InputError(f"subject {ds.subject_id!r}: {len(ds.fixation_durations)} fixation durations for {b} baseline trajectories")
    mmd_v = np.asarray(profile.mmd_values)
    fix = np.asarray(ds.fixation_durations[:b])
    if orientation == "fixation_on_mmd":
        return mmd_v, fix, "mmd", "fixation_duration_s"
    if orientation == "mmd_on_fixation":
        return fix, mmd_v, "fixation_duration_s", "mmd"
    raise InputError(f"unknown orientation {orientation!r}")


def regress_fixation(
    profile: VariabilityProfile, ds: SubjectDataset, orientation: Orientation = "fixation_on_mmd"
) -> RegressionResult:
    """Regress average fixation duration on MMD over the baseline trajectories.

    ``orientation="mmd_on_fixation"`` swaps the roles of the two variables.
    """
    x, y, xn, yn = _fixation_xy(profile, ds, orientation)
    return ols_regression(x, y, xn, yn)


def segmented_regression(
    profile: VariabilityProfile,
    ds: SubjectDataset,
    breakpoint: int,
    orientation: Orientation = "fixation_on_mmd",
) -> tuple[RegressionResult, RegressionResult]:
    """Independent fits on baseline positions ``1..breakpoint`` and the rest."""
    x, y, xn, yn = _fixation_xy(profile, ds, orientation)
    return segmented_ols(x, y, breakpoint, xn, yn)


def segmented_ols(
    x: Sequence[float], y: Sequence[float], breakpoint: int, x_name: str = "x", y_name: str = "y"
) -> tuple[RegressionResult, RegressionResult]:
    """Two independent OLS fits split after position ``breakpoint`` (1-based)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = x.size
    if not 2 <= breakpoint <= n - 2:
        raise DegenerateInputError(f"breakpoint {breakpoint} leaves a segment shorter than 2 (n = {n})")
    out = []
    for name, sl in (("first", slice(0, breakpoint)), ("second", slice(breakpoint, n))):
        try:
            out.append(ols_regression(x[sl], y[sl], x_name, y_name))
        except DegenerateInputError as exc:
            raise DegenerateInputError(f"{name} segment (positions {sl.start + 1}..{sl.stop}): {exc}") from exc
    return out[0], out[1]
