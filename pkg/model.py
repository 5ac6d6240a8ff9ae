"""
Training pipeline: dataset in, PipModel out.

The learned model is the prior over concatenated basis weights (sample
mean and regularised sample covariance of the per-cycle weights), a
per-DOF measurement noise estimate and the phase manifold.
"""

import hashlib
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field

from alignment import FeatureSeries, align_demonstrations, compute_acceleration
from basis import BasisSet, eval_basis, fit_weights, make_basis, relative_ridge
from config import Config
from dataset import Dataset, DofRole, DofSpec, phase_input_indices, validate_dataset
from manifold import PhaseManifold, build_manifold

logger = logging.getLogger(__name__)


class TrainingConfig(BaseModel):
    """Training parameters; defaults come from Config."""
    basis_count: int = Field(default=Config.DEFAULT_BASIS_COUNT, ge=1)
    basis_counts: Dict[str, int] = Field(default_factory=dict)
    kappa: Optional[float] = Field(default=None, ge=0.0, le=Config.MAX_KAPPA)
    ridge: float = Field(default=Config.DEFAULT_RIDGE, ge=0.0)
    grid_positions: int = Field(default=Config.DEFAULT_GRID_POSITIONS, ge=2)
    grid_velocities: int = Field(default=Config.DEFAULT_GRID_VELOCITIES, ge=2)
    dtw_band: Optional[int] = Field(default=Config.DTW_BAND, ge=0)

    def count_for(self, dof: DofSpec) -> int:
        if dof.name in self.basis_counts:
            return self.basis_counts[dof.name]
        return dof.basis_count or self.basis_count


@dataclass(eq=False)
class PipModel:
    """
    Trained periodic interaction primitive.

    Attributes:
        dofs: DOF metadata in column order
        bases: One BasisSet per DOF
        prior_mean: mu_0, length B = sum of basis counts
        prior_cov: Sigma_0, B x B
        noise_diag: Per-DOF measurement variance
        manifold: Phase lookup table
        format_version: Model file format version
        metadata: Training summary (cycle ids, config, residual RMS)
    """
    dofs: List[DofSpec]
    bases: List[BasisSet]
    prior_mean: np.ndarray
    prior_cov: np.ndarray
    noise_diag: np.ndarray
    manifold: PhaseManifold
    format_version: int = Config.MODEL_FORMAT_VERSION
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.bases) != len(self.dofs):
            raise ValueError(f"{len(self.dofs)} DOFs but {len(self.bases)} basis sets")
        total = sum(b.count for b in self.bases)
        if self.prior_mean.shape != (total,):
            raise ValueError(f"prior_mean has shape {self.prior_mean.shape}, expected ({total},)")
        if self.prior_cov.shape != (total, total):
            raise ValueError(f"prior_cov has shape {self.prior_cov.shape}, expected ({total}, {total})")
        if self.noise_diag.shape != (len(self.dofs),):
            raise ValueError(f"noise_diag has shape {self.noise_diag.shape}, expected ({len(self.dofs)},)")
        observed = [i for i, d in enumerate(self.dofs) if d.role == DofRole.OBSERVED]
        if np.any(self.noise_diag[observed] <= 0.0):
            raise ValueError("noise_diag must be positive for observed DOFs")
        phase_input_indices(self.dofs)
        offsets = np.concatenate([[0], np.cumsum([b.count for b in self.bases])]).astype(int)
        self._offsets = offsets
        for array in (self.prior_mean, self.prior_cov, self.noise_diag):
            array.setflags(write=False)

    @property
    def names(self) -> List[str]:
        return [dof.name for dof in self.dofs]

    @property
    def total_basis(self) -> int:
        return int(self._offsets[-1])

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValueError(f"unknown DOF '{name}'") from None

    def block(self, index: int) -> slice:
        """Slice of DOF `index` inside the concatenated weight vector."""
        return slice(int(self._offsets[index]), int(self._offsets[index + 1]))

    @property
    def observed_indices(self) -> List[int]:
        return [i for i, d in enumerate(self.dofs) if d.role == DofRole.OBSERVED]

    @property
    def phase_inputs(self):
        return phase_input_indices(self.dofs)

    def fingerprint(self) -> str:
        """SHA-256 over the numeric content, for immutability checks."""
        digest = hashlib.sha256()
        for array in (self.prior_mean, self.prior_cov, self.noise_diag,
                      self.manifold.table, self.manifold.occupancy):
            digest.update(np.ascontiguousarray(array).tobytes())
        return digest.hexdigest()


def estimate_noise(residuals: Sequence[np.ndarray], peak_to_peak: Sequence[float]) -> np.ndarray:
    """
    Unbiased per-DOF residual variance with a scale-relative floor.

    Args:
        residuals: One residual vector per DOF (length >= 1)
        peak_to_peak: Per-DOF peak-to-peak amplitude used for the floor

    Returns:
        Variance per DOF, at least NOISE_FLOOR_REL * ptp^2
    """
    variances = np.empty(len(residuals))
    for d, (resid, ptp) in enumerate(zip(residuals, peak_to_peak)):
        resid = np.asarray(resid, dtype=float).ravel()
        if resid.size == 0:
            raise ValueError(f"residual vector {d} is empty")
        variance = float(np.var(resid, ddof=1)) if resid.size > 1 else 0.0
        floor = Config.NOISE_FLOOR_REL * float(ptp) ** 2
        variances[d] = max(variance, floor if floor > 0.0 else Config.NOISE_FLOOR_ABS)
    return variances


def weight_statistics(weights: np.ndarray):
    """
    Sample mean and regularised sample covariance of per-cycle weights.

    Uses deviations from the first cycle (shifted-data algorithm) so that
    identical cycles give an exactly zero sample covariance.

    Args:
        weights: N x B matrix of concatenated weight vectors

    Returns:
        (mu_0, Sigma_0, epsilon)
    """
    count, total = weights.shape
    shifted = weights - weights[0]
    mean_shift = shifted.mean(axis=0)
    mean = weights[0] + mean_shift
    if count > 1:
        cov = (shifted.T @ shifted - count * np.outer(mean_shift, mean_shift)) / (count - 1)
        cov = (cov + cov.T) / 2.0
    else:
        cov = np.zeros((total, total))
    trace = float(np.trace(cov))
    epsilon = Config.COV_REGULARIZER_REL * trace / total if trace > 0.0 else Config.COV_REGULARIZER_ABS
    cov[np.diag_indices_from(cov)] += epsilon
    return mean, cov, epsilon


def aligned_phase_inputs(bases: Sequence[BasisSet], weights: np.ndarray, inputs: Sequence[int],
                         phases: np.ndarray) -> np.ndarray:
    """
    (position, velocity, phase) rows of one cycle's fitted phase inputs.

    The per-cycle basis fits evaluated at the aligned labels stand in for the
    raw samples, so sensor noise does not leak into the lookup table.

    Args:
        bases: Basis set of every DOF
        weights: The cycle's concatenated weight vector
        inputs: (position index, velocity index)
        phases: The cycle's phase labels

    Returns:
        T x 3 array
    """
    offsets = np.concatenate([[0], np.cumsum([b.count for b in bases])]).astype(int)
    columns = []
    for d in inputs:
        block = weights[offsets[d]:offsets[d + 1]]
        columns.append(eval_basis(bases[d], phases) @ block)
    return np.column_stack(columns + [phases])


def _time_phases(times: np.ndarray) -> np.ndarray:
    return (times - times[0]) / (times[-1] - times[0]) * Config.PHASE_PERIOD


def train(dataset: Dataset, config: Optional[TrainingConfig] = None) -> PipModel:
    """
    Learn a PipModel from pre-segmented demonstration cycles.

    Args:
        dataset: Validated dataset with N >= 1 cycles
        config: Training parameters (defaults from Config)

    Returns:
        The trained model

    Raises:
        ValueError: If the dataset has no cycles
        DataError: If any value is non-finite (names cycle and column)
    """
    config = config or TrainingConfig()
    if not dataset.cycles:
        raise ValueError("training needs at least one cycle")
    validate_dataset(dataset)

    dofs = list(dataset.dofs)
    unknown = set(config.basis_counts) - {d.name for d in dofs}
    if unknown:
        raise ValueError(f"basis_counts names unknown DOFs: {sorted(unknown)}")
    bases = [make_basis(config.count_for(dof), config.kappa) for dof in dofs]
    pos_index, vel_index = phase_input_indices(dofs)
    logger.info(f"Training on {len(dataset.cycles)} cycles, {len(dofs)} DOFs, "
                f"B = {sum(b.count for b in bases)}")

    # Stage 1: provisional velocity fits give the acceleration feature
    vel_basis = bases[vel_index]
    features = []
    for cycle in dataset.cycles:
        provisional = _time_phases(cycle.times)
        velocity = cycle.values[:, vel_index]
        ridge = relative_ridge(vel_basis, provisional, config.ridge)
        weights = fit_weights(vel_basis, provisional, velocity, ridge)
        features.append(FeatureSeries(position=cycle.values[:, pos_index], velocity=velocity,
                                      acceleration=compute_acceleration(vel_basis, weights, provisional)))

    # Stage 2: phase labels from DTW against the medoid cycle
    labels = align_demonstrations(features, band=config.dtw_band)

    # Stage 3: per-cycle, per-DOF weights at the aligned phases
    all_weights = np.empty((len(dataset.cycles), sum(b.count for b in bases)))
    residuals: List[List[np.ndarray]] = [[] for _ in dofs]
    for n, (cycle, phases) in enumerate(zip(dataset.cycles, labels)):
        offset = 0
        for d, basis in enumerate(bases):
            values = cycle.values[:, d]
            weights = fit_weights(basis, phases, values, relative_ridge(basis, phases, config.ridge))
            all_weights[n, offset:offset + basis.count] = weights
            residuals[d].append(values - eval_basis(basis, phases) @ weights)
            offset += basis.count

    # Stage 4: prior over weights
    prior_mean, prior_cov, epsilon = weight_statistics(all_weights)

    # Stage 5: measurement noise from fit residuals
    stacked = np.vstack([cycle.values for cycle in dataset.cycles])
    peak_to_peak = np.ptp(stacked, axis=0)
    noise_diag = estimate_noise([np.concatenate(r) for r in residuals], peak_to_peak)

    # Stage 6: phase manifold from the fitted position/velocity trajectories
    samples = np.vstack([
        aligned_phase_inputs(bases, all_weights[n], (pos_index, vel_index), phases)
        for n, phases in enumerate(labels)
    ])
    manifold = build_manifold(samples, config.grid_positions, config.grid_velocities)

    metadata = {
        "cycle_ids": [cycle.cycle_id for cycle in dataset.cycles],
        "training": config.model_dump(),
        "covariance_regularizer": epsilon,
        "residual_rms": {dof.name: math.sqrt(v) for dof, v in zip(dofs, noise_diag)},
    }
    model = PipModel(dofs=dofs, bases=bases, prior_mean=prior_mean, prior_cov=prior_cov,
                     noise_diag=noise_diag, manifold=manifold, metadata=metadata)
    logger.info(f"✓ Model trained: B = {model.total_basis}, epsilon = {epsilon:.3g}")
    return model
