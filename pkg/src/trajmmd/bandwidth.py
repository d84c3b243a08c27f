"""Bandwidth choice: median heuristic and a discriminability grid search."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import DegenerateInputError, InputError, SelectionError
from .kernel import Kernel, _as_matrix, embed, gram, mmd, pairwise_sqdist
from .trajectory import ChannelScaling, SubjectDataset, flatten
from .variability import SplitSpec

__all__ = ["median_heuristic", "discriminability_score", "select_bandwidth", "BandwidthSelection"]

log = logging.getLogger(__name__)

# Off-diagonal kernel values spread less than this: the kernel no longer separates anything.
COLLAPSE_TOL = 1e-8


def median_heuristic(samples) -> float:
    """Median Euclidean distance over all unordered pairs of ``samples``.

    An even number of pairs gives the mean of the two middle distances.
    """
    X = _as_matrix(samples)
    if X.shape[0] < 2:
        raise InputError(f"median heuristic needs at least 2 samples, got {X.shape[0]}")
    iu = np.triu_indices(X.shape[0], k=1)
    d = np.sqrt(pairwise_sqdist(X, X)[iu])
    sigma = float(np.median(d))
    if sigma == 0:
        if not np.any(d):
            raise DegenerateInputError("all pairwise distances are zero; bandwidth must be positive")
        raise DegenerateInputError("median pairwise distance is zero (more than half the samples coincide)")
    return sigma


def discriminability_score(final_sets: Sequence[np.ndarray], kernel: Kernel) -> float:
    """Between-subject over within-subject MMD for one bandwidth.

    The numerator is the mean MMD between the final embeddings of every pair
    of distinct subjects.  The denominator is the mean MMD from each final
    trajectory (as a point mass) to its own subject's final embedding.
    Returns ``nan`` when the ratio is undefined or infinite, and also when
    the pooled off-diagonal kernel values have collapsed to a spread below
    :data:`COLLAPSE_TOL` (all near 0 for tiny sigma, all near 1 for huge
    sigma), since the ratio is then set by rounding rather than by the data.
    """
    if len(final_sets) < 2:
        raise InputError("discriminability needs at least two subjects")
    pooled = np.vstack(final_sets)
    K = gram(kernel, pooled, pooled)
    off = K[~np.eye(K.shape[0], dtype=bool)]
    if off.max() - off.min() < COLLAPSE_TOL:
        return math.nan
    embs = [embed(kernel, fs) for fs in final_sets]
    between = [mmd(a, b).value for a, b in combinations(embs, 2)]
    within = [mmd(embed(kernel, [x]), e).value for fs, e in zip(final_sets, embs) for x in fs]
    num = math.fsum(between) / len(between)
    den = math.fsum(within) / len(within)
    if den == 0:
        return math.nan
    score = num / den
    return score if math.isfinite(score) else math.nan


@dataclass(frozen=True)
class BandwidthSelection:
    sigma: float
    scores: tuple[tuple[float, float], ...]  # (sigma, score); nan marks a skipped grid point


def select_bandwidth(
    datasets: Sequence[SubjectDataset],
    grid: Sequence[float],
    split: SplitSpec = SplitSpec(),
    scaling: ChannelScaling | Sequence[ChannelScaling | None] | None = None,
    details: bool = False,
) -> float | BandwidthSelection:
    """Grid point maximizing :func:`discriminability_score`; ties go to the smaller sigma.

    Grid points with an undefined score are skipped; if none remain a
    :class:`SelectionError` is raised.  ``scaling`` is one channel scaling
    for all subjects or a list with one entry per dataset.  Pass
    ``details=True`` to get every score back in a :class:`BandwidthSelection`.
    """
    grid = [float(s) for s in grid]
    if not grid:
        raise InputError("bandwidth grid is empty")
    for s in grid:
        Kernel(s)
    if len(datasets) < 2:
        raise SelectionError(f"bandwidth selection needs at least two subjects, got {len(datasets)}")
    if scaling is None or isinstance(scaling, ChannelScaling):
        scaling = [scaling] * len(datasets)
    finals = []
    for ds, sc in zip(datasets, scaling, strict=True):
        split.check(ds)
        finals.append(np.stack([flatten(tr, sc).values for tr in ds.trajectories[split.baseline_count :]]))
    scores = []
    best = None
    for s in sorted(set(grid)):
        sc = discriminability_score(finals, Kernel(s))
        scores.append((s, sc))
        log.debug("sigma=%g score=%r", s, sc)
        if math.isnan(sc):
            continue
        if best is None or sc > best[1]:
            best = (s, sc)
    if best is None:
        raise SelectionError(f"every grid bandwidth gave a degenerate score: {grid}")
    log.info("selected sigma=%g (score %.6g)", best[0], best[1])
    if details:
        return BandwidthSelection(best[0], tuple(scores))
    return best[0]
