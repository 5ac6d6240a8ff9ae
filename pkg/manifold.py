"""
E x F phase lookup table over (angular position, angular velocity).

Every cell stores the phase of the nearest aligned training sample to the
cell center, measured in range-normalised coordinates, so the table is
total and queries are O(1).
"""

import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
from scipy.spatial.distance import cdist

from basis import wrap_phase
from config import Config

logger = logging.getLogger(__name__)

_CELL_BLOCK = 512


@dataclass(frozen=True, eq=False)
class PhaseManifold:
    """
    Immutable phase lookup table.

    Attributes:
        positions: Number of position bins E
        velocities: Number of velocity bins F
        pos_range: Closed position interval covered by the grid
        vel_range: Closed velocity interval covered by the grid
        table: E x F phases in [0, 100)
        occupancy: E x F flags, True where a training sample fell before fill-in
    """
    positions: int
    velocities: int
    pos_range: Tuple[float, float]
    vel_range: Tuple[float, float]
    table: np.ndarray
    occupancy: np.ndarray

    def __post_init__(self):
        if self.table.shape != (self.positions, self.velocities):
            raise ValueError(f"table shape {self.table.shape} does not match "
                             f"{self.positions} x {self.velocities}")
        if self.occupancy.shape != self.table.shape:
            raise ValueError("occupancy shape does not match the table")
        if not (self.pos_range[1] > self.pos_range[0] and self.vel_range[1] > self.vel_range[0]):
            raise ValueError("manifold ranges must have positive width")
        if not np.all(np.isfinite(self.table)) or np.any(self.table < 0.0) \
                or np.any(self.table >= Config.PHASE_PERIOD):
            raise ValueError("manifold phases must be finite and in [0, 100)")
        if not np.any(self.occupancy):
            raise ValueError("manifold has no occupied cell")
        self.table.setflags(write=False)
        self.occupancy.setflags(write=False)

    def cell_of(self, position: float, velocity: float) -> Tuple[int, int]:
        """Bin indices of a (clamped) query point."""
        lo, hi = self.pos_range
        row = int((min(max(position, lo), hi) - lo) / (hi - lo) * self.positions)
        lo, hi = self.vel_range
        col = int((min(max(velocity, lo), hi) - lo) / (hi - lo) * self.velocities)
        return min(row, self.positions - 1), min(col, self.velocities - 1)


def _padded_range(values: np.ndarray, margin: float) -> Tuple[float, float]:
    lo, hi = float(values.min()), float(values.max())
    width = hi - lo
    if width > 0.0:
        pad = margin * width
    else:
        pad = max(abs(lo) * margin, 1.0)
    return lo - pad, hi + pad


def _bin(values: np.ndarray, bounds: Tuple[float, float], count: int) -> np.ndarray:
    lo, hi = bounds
    index = ((np.clip(values, lo, hi) - lo) / (hi - lo) * count).astype(np.int64)
    return np.minimum(index, count - 1)


def build_manifold(aligned_samples: Union[np.ndarray, Sequence[Tuple[float, float, float]]],
                   positions: int = Config.DEFAULT_GRID_POSITIONS,
                   velocities: int = Config.DEFAULT_GRID_VELOCITIES,
                   margin: float = Config.MANIFOLD_MARGIN) -> PhaseManifold:
    """
    Build the lookup table from aligned (position, velocity, phase) samples.

    Args:
        aligned_samples: N x 3 array or sequence of (position, velocity, phase)
        positions: Position bin count E (>= 2)
        velocities: Velocity bin count F (>= 2)
        margin: Fractional range expansion on each side

    Returns:
        A PhaseManifold whose every cell holds the nearest sample's phase

    Raises:
        ValueError: If there are no samples, bin counts are < 2, or samples
            are not finite
    """
    samples = np.asarray(aligned_samples, dtype=float).reshape(-1, 3)
    if samples.shape[0] == 0:
        raise ValueError("at least one aligned sample is required to build the manifold")
    if positions < 2 or velocities < 2:
        raise ValueError(f"grid must be at least 2 x 2, got {positions} x {velocities}")
    if not np.all(np.isfinite(samples)):
        raise ValueError("aligned samples must be finite")

    pos_range = _padded_range(samples[:, 0], margin)
    vel_range = _padded_range(samples[:, 1], margin)
    pos_width = pos_range[1] - pos_range[0]
    vel_width = vel_range[1] - vel_range[0]

    normalized = np.column_stack([
        (samples[:, 0] - pos_range[0]) / pos_width,
        (samples[:, 1] - vel_range[0]) / vel_width,
    ])
    rows, cols = np.meshgrid((np.arange(positions) + 0.5) / positions,
                             (np.arange(velocities) + 0.5) / velocities, indexing="ij")
    centers = np.column_stack([rows.ravel(), cols.ravel()])

    phases = wrap_phase(samples[:, 2])
    nearest = np.empty(centers.shape[0], dtype=np.int64)
    for start in range(0, centers.shape[0], _CELL_BLOCK):
        block = cdist(centers[start:start + _CELL_BLOCK], normalized, "sqeuclidean")
        nearest[start:start + _CELL_BLOCK] = np.argmin(block, axis=1)
    table = phases[nearest].reshape(positions, velocities)

    occupancy = np.zeros((positions, velocities), dtype=bool)
    occupancy[_bin(samples[:, 0], pos_range, positions),
              _bin(samples[:, 1], vel_range, velocities)] = True

    logger.info(f"Built {positions}x{velocities} phase manifold from {samples.shape[0]} samples "
                f"({int(occupancy.sum())} occupied cells)")
    return PhaseManifold(positions=positions, velocities=velocities,
                         pos_range=pos_range, vel_range=vel_range,
                         table=table, occupancy=occupancy)


def lookup_phase(manifold: PhaseManifold, position: float, velocity: float) -> float:
    """
    Phase of the cell containing (position, velocity), clamped to the grid.

    Raises:
        ValueError: If either input is not finite
    """
    if not (math.isfinite(position) and math.isfinite(velocity)):
        raise ValueError(f"phase lookup needs finite inputs, got ({position}, {velocity})")
    row, col = manifold.cell_of(position, velocity)
    return float(manifold.table[row, col])


def lookup_phases(manifold: PhaseManifold, positions: np.ndarray,
                  velocities: np.ndarray) -> np.ndarray:
    """Vectorised lookup_phase for batches of queries."""
    positions = np.asarray(positions, dtype=float)
    velocities = np.asarray(velocities, dtype=float)
    if not (np.all(np.isfinite(positions)) and np.all(np.isfinite(velocities))):
        raise ValueError("phase lookup needs finite inputs")
    rows = _bin(positions, manifold.pos_range, manifold.positions)
    cols = _bin(velocities, manifold.vel_range, manifold.velocities)
    return manifold.table[rows, cols]
