"""
Temporal alignment of demonstration cycles.

Dynamic time warping over a normalised (position, velocity, acceleration)
feature cost, medoid-based phase labelling of all demonstrations, and an
open-ended subsequence variant used by the DTW phase baseline.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from basis import BasisSet, eval_basis_derivative
from config import Config

logger = logging.getLogger(__name__)

jitkw = {
    "nogil": True,
    "cache": False,
}

DIAGONAL, ADVANCE_U, ADVANCE_V = 0, 1, 2


@dataclass(frozen=True, eq=False)
class FeatureSeries:
    """Angular position, velocity and acceleration of one demonstration."""
    position: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    def __post_init__(self):
        lengths = {len(self.position), len(self.velocity), len(self.acceleration)}
        if len(lengths) != 1:
            raise ValueError(f"feature vectors differ in length: {sorted(lengths)}")
        if len(self.position) < 2:
            raise ValueError("a feature series needs at least 2 samples")

    def __len__(self) -> int:
        return len(self.position)

    def as_matrix(self) -> np.ndarray:
        return np.column_stack([self.position, self.velocity, self.acceleration]).astype(float)


@dataclass(frozen=True, eq=False)
class FeatureNormalizer:
    """Per-feature z-score statistics fitted over a pool of series."""
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, matrices: Sequence[np.ndarray]) -> "FeatureNormalizer":
        pooled = np.vstack(matrices)
        scale = pooled.std(axis=0)
        scale[~(scale > 0.0)] = 1.0
        return cls(mean=pooled.mean(axis=0), scale=scale)

    @classmethod
    def identity(cls, width: int) -> "FeatureNormalizer":
        return cls(mean=np.zeros(width), scale=np.ones(width))

    def apply(self, matrix: np.ndarray) -> np.ndarray:
        return (np.asarray(matrix, dtype=float) - self.mean) / self.scale


@dataclass(frozen=True, eq=False)
class DtwResult:
    """Total alignment cost and the warp path as an L x 2 array of (n, m)."""
    cost: float
    path: np.ndarray


def feature_cost(a: Sequence[float], b: Sequence[float],
                 scale: Optional[Sequence[float]] = None) -> float:
    """
    Sum of per-feature absolute differences after scaling.

    Args:
        a: Feature triple (position, velocity, acceleration)
        b: Feature triple
        scale: Per-feature normalisation scale (defaults to 1)

    Returns:
        Nonnegative cost
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if scale is None:
        scale = np.ones_like(a)
    return float(np.sum(np.abs(a / scale - b / np.asarray(scale, dtype=float))))


def cost_matrix(x: np.ndarray, y: np.ndarray, normalizer: FeatureNormalizer) -> np.ndarray:
    """Pairwise feature_cost between the rows of x and the rows of y."""
    return cdist(normalizer.apply(x), normalizer.apply(y), "cityblock")


@njit(**jitkw)
def _accumulate(cost, band):
    n, m = cost.shape
    acc = np.empty((n, m))
    acc[:, :] = np.inf
    steps = np.empty((n, m), dtype=np.int8)
    steps[:, :] = -1
    for i in range(n):
        for j in range(m):
            if band >= 0 and abs(i - j) > band:
                continue
            if i == 0 and j == 0:
                acc[i, j] = cost[i, j]
                continue
            best = np.inf
            step = -1
            if i > 0 and j > 0:
                best = acc[i - 1, j - 1]
                step = 0
            if i > 0 and acc[i - 1, j] < best:
                best = acc[i - 1, j]
                step = 1
            if j > 0 and acc[i, j - 1] < best:
                best = acc[i, j - 1]
                step = 2
            acc[i, j] = cost[i, j] + best
            steps[i, j] = step
    return acc, steps


@njit(**jitkw)
def _accumulate_open(cost):
    n, m = cost.shape
    acc = np.empty((n, m))
    for j in range(m):
        acc[0, j] = cost[0, j]
    for i in range(1, n):
        acc[i, 0] = cost[i, 0] + acc[i - 1, 0]
        for j in range(1, m):
            best = acc[i - 1, j - 1]
            if acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = cost[i, j] + best
    return acc


def _traceback(steps: np.ndarray) -> np.ndarray:
    i, j = steps.shape[0] - 1, steps.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        step = steps[i, j]
        if step == DIAGONAL:
            i, j = i - 1, j - 1
        elif step == ADVANCE_U:
            i -= 1
        else:
            j -= 1
        path.append((i, j))
    path.reverse()
    return np.asarray(path, dtype=np.int64)


def dtw_from_cost(cost: np.ndarray, band: Optional[int] = None) -> DtwResult:
    """
    Minimum-cost monotone warp through a precomputed cost matrix.

    Ties prefer the diagonal step, then advancing u, then advancing v.

    Args:
        cost: T_u x T_v local cost matrix
        band: Optional Sakoe-Chiba half width; widened to |T_u - T_v| if narrower

    Returns:
        DtwResult with the total cost and the warp path
    """
    n, m = cost.shape
    width = -1
    if band is not None:
        width = max(int(band), abs(n - m))
        if width > band:
            logger.warning(f"DTW band {band} widened to {width} to reach the end cell")
    acc, steps = _accumulate(np.ascontiguousarray(cost, dtype=np.float64), width)
    return DtwResult(cost=float(acc[-1, -1]), path=_traceback(steps))


def dtw(u: FeatureSeries, v: FeatureSeries,
        normalizer: Optional[FeatureNormalizer] = None,
        band: Optional[int] = None) -> DtwResult:
    """
    Align two feature series with dynamic time warping.

    Args:
        u: First series (rows of the cost matrix)
        v: Second series (columns)
        normalizer: Feature scaling; defaults to unit scaling
        band: Optional Sakoe-Chiba half width

    Returns:
        DtwResult with cost and warp path of (u index, v index) pairs

    Raises:
        ValueError: If either series has fewer than 2 samples
    """
    if len(u) < 2 or len(v) < 2:
        raise ValueError("DTW needs series of at least 2 samples")
    if normalizer is None:
        normalizer = FeatureNormalizer.identity(3)
    return dtw_from_cost(cost_matrix(u.as_matrix(), v.as_matrix(), normalizer), band)


def subsequence_dtw(query: np.ndarray, reference: np.ndarray,
                    normalizer: Optional[FeatureNormalizer] = None) -> Tuple[int, float]:
    """
    Match a query anywhere inside a longer reference.

    The query must be fully consumed; the match may start and end at any
    reference index.

    Args:
        query: T_q x k feature rows
        reference: T_r x k feature rows
        normalizer: Feature scaling; defaults to unit scaling

    Returns:
        (reference index matched to the last query row, match cost);
        the lowest index wins ties
    """
    query = np.atleast_2d(np.asarray(query, dtype=float))
    reference = np.atleast_2d(np.asarray(reference, dtype=float))
    if normalizer is None:
        normalizer = FeatureNormalizer.identity(query.shape[1])
    acc = _accumulate_open(np.ascontiguousarray(cost_matrix(query, reference, normalizer)))
    end = int(np.argmin(acc[-1]))
    return end, float(acc[-1, end])


def compute_acceleration(basis: BasisSet, weights: np.ndarray, phases: np.ndarray) -> np.ndarray:
    """Phase derivative of a velocity reconstruction at the given phases."""
    return eval_basis_derivative(basis, phases) @ np.asarray(weights, dtype=float)


def transport_labels(path: np.ndarray, reference_labels: np.ndarray, length: int) -> np.ndarray:
    """Average the reference labels each sample is warped onto."""
    sums = np.bincount(path[:, 0], weights=reference_labels[path[:, 1]], minlength=length)
    counts = np.bincount(path[:, 0], minlength=length)
    labels = sums / counts
    labels[0] = 0.0
    labels[-1] = Config.PHASE_PERIOD
    return labels


def align_demonstrations(demos: Sequence[FeatureSeries],
                         band: Optional[int] = None) -> List[np.ndarray]:
    """
    Assign phase labels in [0, 100] to every demonstration.

    The medoid demonstration (lowest summed DTW cost to all others, lowest
    index on ties) gets a linear ramp; every other demonstration inherits
    labels through its warp path onto the medoid.

    Args:
        demos: Feature series, one per demonstration
        band: Optional Sakoe-Chiba half width

    Returns:
        One nondecreasing label vector per demonstration, from 0 to 100

    Raises:
        ValueError: If demos is empty
    """
    if len(demos) == 0:
        raise ValueError("at least one demonstration is required for alignment")
    matrices = [demo.as_matrix() for demo in demos]
    normalizer = FeatureNormalizer.fit(matrices)
    count = len(demos)

    results = {}
    totals = np.zeros(count)
    for a in range(count):
        for b in range(a + 1, count):
            result = dtw_from_cost(cost_matrix(matrices[a], matrices[b], normalizer), band)
            results[(a, b)] = result
            totals[a] += result.cost
            totals[b] += result.cost

    medoid = int(np.argmin(totals))
    logger.info(f"Aligned {count} demonstrations to medoid #{medoid} "
                f"(summed cost {totals[medoid]:.3f})")

    reference = np.linspace(0.0, Config.PHASE_PERIOD, len(demos[medoid]))
    labels = []
    for index, demo in enumerate(demos):
        if index == medoid:
            labels.append(reference.copy())
            continue
        if index < medoid:
            path = results[(index, medoid)].path
        else:
            path = results[(medoid, index)].path[:, ::-1]
        labels.append(transport_labels(path, reference, len(demo)))
    return labels
