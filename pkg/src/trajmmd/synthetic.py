"""Seeded generator of obstacle-avoidance trajectories.

Each trajectory is a deterministic lane-change template (smoothstep out to
``-lane_width`` and back) plus first-order autoregressive lateral noise and
speed jitter.  Heading follows kinematically from the lateral rate and speed.
A :class:`LearningSchedule` varies the noise amplitude across trials so the
three trend archetypes (decreasing, flat, decrease-then-increase) can be
produced on demand.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.signal import lfilter

from .errors import InputError
from .trajectory import MPH_TO_MPS, SubjectDataset, Trajectory

__all__ = [
    "ManeuverModel",
    "LearningSchedule",
    "template",
    "ar1_noise",
    "generate_trajectory",
    "generate_subject",
    "trial_seeds",
    "CURVES_PER_TRIAL",
]

CURVES_PER_TRIAL = 4


@dataclass(frozen=True)
class ManeuverModel:
    nominal_speed: float = 45 * MPH_TO_MPS
    lane_width: float = 3.5
    obstacle_time: float = 9.0
    maneuver_duration: float = 4.0
    noise_amplitude: float = 0.2
    noise_correlation_time: float = 0.5
    speed_jitter: float = 0.1

    def __post_init__(self):
        for name in ("nominal_speed", "lane_width", "obstacle_time", "maneuver_duration", "noise_correlation_time"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v > 0):
                raise InputError(f"{name} must be positive, got {v!r}")
        for name in ("noise_amplitude", "speed_jitter"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise InputError(f"{name} must be nonnegative, got {v!r}")

    def with_noise(self, amplitude: float) -> "ManeuverModel":
        return ManeuverModel(
            self.nominal_speed,
            self.lane_width,
            self.obstacle_time,
            self.maneuver_duration,
            amplitude,
            self.noise_correlation_time,
            self.speed_jitter,
        )


@dataclass(frozen=True)
class LearningSchedule:
    """Lateral noise amplitude as a function of the 0-based trial index.

    ``constant``: ``initial_noise`` every trial.  ``geometric_decay``:
    ``initial_noise * decay_ratio**i``.  ``decay_then_growth``: geometric
    decay up to ``reversal_index``, then mirrored growth at the same ratio,
    i.e. ``initial_noise * decay_ratio**(2 * reversal_index - i)``, capped at
    ``initial_noise`` so late trials return to the starting regime instead of
    diverging.
    """

    mode: Literal["constant", "geometric_decay", "decay_then_growth"] = "constant"
    initial_noise: float = 0.3
    decay_ratio: float = 1.0
    reversal_index: int | None = None

    def __post_init__(self):
        if self.mode not in ("constant", "geometric_decay", "decay_then_growth"):
            raise InputError(f"unknown schedule mode {self.mode!r}")
        if not (np.isfinite(self.initial_noise) and self.initial_noise >= 0):
            raise InputError(f"initial_noise must be nonnegative, got {self.initial_noise!r}")
        if not (0 < self.decay_ratio <= 1):
            raise InputError(f"decay_ratio must lie in (0, 1], got {self.decay_ratio!r}")
        if self.mode != "constant" and self.decay_ratio >= 1:
            raise InputError(f"{self.mode} needs decay_ratio < 1")
        if self.mode == "decay_then_growth" and self.reversal_index is None:
            raise InputError("decay_then_growth needs reversal_index")

    def check(self, n_trials: int) -> None:
        if self.mode == "decay_then_growth" and not (0 <= self.reversal_index < n_trials):
            raise InputError(f"reversal_index {self.reversal_index} outside trial range 0..{n_trials - 1}")

    def amplitude(self, i: int) -> float:
        if self.mode == "constant":
            return self.initial_noise
        if self.mode == "geometric_decay":
            return self.initial_noise * self.decay_ratio**i
        r = self.reversal_index
        return self.initial_noise * self.decay_ratio ** (i if i <= r else max(0, 2 * r - i))

    def amplitudes(self, n_trials: int) -> np.ndarray:
        self.check(n_trials)
        return np.array([self.amplitude(i) for i in range(n_trials)])


def _smoothstep(u):
    return u * u * (3.0 - 2.0 * u)


def template(model: ManeuverModel, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Noiseless lateral offset and its time derivative at times ``t``.

    The offset is zero outside ``[obstacle_time, obstacle_time +
    maneuver_duration]``; the first half of that window moves to
    ``-lane_width`` with a smoothstep, the second half mirrors it back.
    """
    t = np.asarray(t, dtype=np.float64)
    half = model.maneuver_duration / 2.0
    lat = np.zeros_like(t)
    rate = np.zeros_like(t)
    out_phase = (t >= model.obstacle_time) & (t < model.obstacle_time + half)
    back_phase = (t >= model.obstacle_time + half) & (t <= model.obstacle_time + model.maneuver_duration)
    u = (t[out_phase] - model.obstacle_time) / half
    lat[out_phase] = -model.lane_width * _smoothstep(u)
    rate[out_phase] = -model.lane_width * 6.0 * u * (1.0 - u) / half
    v = (model.obstacle_time + model.maneuver_duration - t[back_phase]) / half
    lat[back_phase] = -model.lane_width * _smoothstep(v)
    rate[back_phase] = model.lane_width * 6.0 * v * (1.0 - v) / half
    return lat, rate


def ar1_noise(rng: np.random.Generator, n: int, amplitude: float, correlation_time: float, dt: float) -> np.ndarray:
    """Stationary AR(1) path with marginal stddev ``amplitude``.

    ``e[k] = phi e[k-1] + amplitude sqrt(1 - phi^2) z[k]`` with
    ``phi = exp(-dt / correlation_time)`` and ``e[0] = amplitude z[0]``.
    """
    z = rng.standard_normal(n)
    if amplitude == 0:
        return np.zeros(n)
    phi = np.exp(-dt / correlation_time)
    drive = amplitude * np.sqrt(1.0 - phi * phi) * z
    drive[0] = amplitude * z[0]
    return lfilter([1.0], [1.0, -phi], drive)


def generate_trajectory(
    model: ManeuverModel,
    N: int = 1100,
    rate: float = 60.0,
    seed: int = 0,
    *,
    subject_id: str = "",
    trial: int = 0,
    curve_index: int = 0,
) -> Trajectory:
    """One seeded trajectory of ``N`` samples at ``rate`` Hz starting at t = 0."""
    if N < 2:
        raise InputError(f"N must be >= 2, got {N}")
    if not rate > 0:
        raise InputError(f"rate must be positive, got {rate}")
    span = (N - 1) / rate
    if model.obstacle_time + model.maneuver_duration > span:
        raise InputError(
            f"maneuver window ends at {model.obstacle_time + model.maneuver_duration:g} s "
            f"but the trajectory spans only {span:g} s"
        )
    dt = 1.0 / rate
    t = np.arange(N) / rate
    lat0, rate0 = template(model, t)
    rng = np.random.default_rng(seed)
    lat_noise = ar1_noise(rng, N, model.noise_amplitude, model.noise_correlation_time, dt)
    spd_noise = ar1_noise(rng, N, model.speed_jitter, model.noise_correlation_time, dt)
    lateral = lat0 + lat_noise
    lat_rate = rate0 + (np.gradient(lat_noise, dt) if model.noise_amplitude > 0 else 0.0)
    speed = np.maximum(model.nominal_speed + spd_noise, 0.0)
    # a stopped vehicle has no defined heading from kinematics; hold it at zero
    heading = np.where(speed > 0, np.arctan(lat_rate / np.where(speed > 0, speed, 1.0)), 0.0)
    return Trajectory(
        t, lateral, speed, heading, subject_id=subject_id, trial=trial, curve_index=curve_index, sample_rate=float(rate)
    )


def trial_seeds(seed: int, n: int) -> list[int]:
    """``n`` independent 32-bit seeds derived from one root seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n)]


def generate_subject(
    model: ManeuverModel,
    schedule: LearningSchedule,
    n_trials: int = 12,
    N: int = 1100,
    rate: float = 60.0,
    seed: int = 0,
    *,
    subject_id: str = "S01",
    fixation_intercept: float | None = None,
    fixation_slope: float = 0.0,
    fixation_noise: float = 0.0,
) -> SubjectDataset:
    """A chronologically ordered synthetic subject.

    Trajectory ``i`` (0-based) uses ``schedule.amplitude(i)`` as lateral
    noise amplitude and is labelled trial ``i // 4 + 1``, curve ``i % 4 + 1``
    (four curves per trial).  If ``fixation_intercept`` is given, fixation
    durations ``intercept + slope * i + fixation_noise * z`` are attached;
    they are not clipped at zero.
    """
    if n_trials < 1:
        raise InputError(f"n_trials must be >= 1, got {n_trials}")
    amps = schedule.amplitudes(n_trials)
    seeds = trial_seeds(seed, n_trials + 1)
    trajs = tuple(
        generate_trajectory(
            model.with_noise(float(a)),
            N,
            rate,
            seeds[i],
            subject_id=subject_id,
            trial=i // CURVES_PER_TRIAL + 1,
            curve_index=i % CURVES_PER_TRIAL + 1,
        )
        for i, a in enumerate(amps)
    )
    fix = None
    if fixation_intercept is not None:
        z = np.random.default_rng(seeds[-1]).standard_normal(n_trials)
        idx = np.arange(n_trials)
        fix = tuple(map(float, fixation_intercept + fixation_slope * idx + fixation_noise * z))
    return SubjectDataset(subject_id, trajs, fix)
