"""
Periodic von Mises basis functions over the phase domain [0, 100).

Provides basis construction, evaluation, the analytic phase derivative,
ridge-regularised weight fitting and trajectory reconstruction. Every
function here is pure, so a BasisSet can be shared freely between threads.
"""

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.linalg
from scipy.special import i0

from config import Config

PHASE_PERIOD = Config.PHASE_PERIOD
ALPHA = 2.0 * math.pi / PHASE_PERIOD  # radians per phase unit

ArrayLike = Union[float, Sequence[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class BasisSet:
    """Evenly spaced von Mises kernels for one DOF.

    Attributes:
        count: Number of basis functions B^d
        kappa: Concentration (inverse variance) shared by all kernels
        centers: Kernel centers in phase units, strictly increasing in [0, 100)
        alpha: Phase-to-radian scale, always 2*pi/100
    """
    count: int
    kappa: float
    centers: np.ndarray
    alpha: float = ALPHA

    @property
    def normalizer(self) -> float:
        return 2.0 * math.pi * float(i0(self.kappa))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A sampled reconstruction of one DOF over a full cycle."""
    values: np.ndarray
    phases: np.ndarray


def wrap_phase(phi: ArrayLike) -> np.ndarray:
    """Wrap phase values into [0, 100)."""
    wrapped = np.mod(np.asarray(phi, dtype=float), PHASE_PERIOD)
    # np.mod can round tiny negatives up to exactly the period
    return np.where(wrapped >= PHASE_PERIOD, 0.0, wrapped)


def half_overlap_kappa(count: int) -> float:
    """Concentration at which neighbouring kernels cross at half their peak.

    Solves exp(kappa * (cos(alpha * spacing / 2) - 1)) = 1/2 for kappa.
    """
    if count < 1:
        raise ValueError(f"basis count must be >= 1, got {count}")
    spacing = PHASE_PERIOD / count
    return math.log(2.0) / (1.0 - math.cos(ALPHA * spacing / 2.0))


def make_basis(count: int, kappa: Optional[float] = None) -> BasisSet:
    """
    Build a periodic basis with evenly spaced centers.

    Args:
        count: Number of basis functions (>= 1)
        kappa: Concentration; defaults to the half-overlap heuristic

    Returns:
        A BasisSet with centers b * 100 / count

    Raises:
        ValueError: If count < 1 or kappa is outside [0, MAX_KAPPA]
    """
    if not isinstance(count, (int, np.integer)) or count < 1:
        raise ValueError(f"basis count must be a positive integer, got {count!r}")
    if kappa is None:
        kappa = half_overlap_kappa(int(count))
    kappa = float(kappa)
    if not math.isfinite(kappa) or kappa < 0.0:
        raise ValueError(f"kappa must be a finite nonnegative number, got {kappa}")
    if kappa > Config.MAX_KAPPA:
        raise ValueError(
            f"kappa {kappa:.3f} exceeds the supported maximum {Config.MAX_KAPPA} "
            f"(basis count {count} needs an explicit kappa)"
        )
    centers = np.arange(int(count), dtype=float) * (PHASE_PERIOD / count)
    centers.setflags(write=False)
    return BasisSet(count=int(count), kappa=kappa, centers=centers)


def eval_basis(basis: BasisSet, phi: ArrayLike) -> np.ndarray:
    """
    Evaluate every kernel at the given phase(s).

    Args:
        basis: The basis set
        phi: Scalar or array of phases; wrapped into [0, 100)

    Returns:
        Array of shape phi.shape + (B^d,)
    """
    delta = wrap_phase(phi)[..., None] - basis.centers
    return np.exp(basis.kappa * np.cos(basis.alpha * delta)) / basis.normalizer


def eval_basis_derivative(basis: BasisSet, phi: ArrayLike) -> np.ndarray:
    """
    Derivative of every kernel with respect to phase (in phase units).

    Includes the chain-rule factor alpha, so it is the true derivative of
    eval_basis.

    Args:
        basis: The basis set
        phi: Scalar or array of phases

    Returns:
        Array of shape phi.shape + (B^d,)
    """
    delta = basis.alpha * (basis.centers - wrap_phase(phi)[..., None])
    scale = basis.alpha * basis.kappa / basis.normalizer
    return scale * np.sin(delta) * np.exp(basis.kappa * np.cos(delta))


def fit_weights(basis: BasisSet, phases: ArrayLike, values: ArrayLike,
                ridge: float = 0.0) -> np.ndarray:
    """
    Ridge-regularised least-squares fit of basis weights.

    Minimises sum_t (values_t - Phi(phi_t) . w)^2 + ridge * |w|^2.

    Args:
        basis: The basis set
        phases: Phase of each sample
        values: Sample values, same length as phases
        ridge: Absolute regularisation weight (>= 0)

    Returns:
        Weight vector of length B^d

    Raises:
        ValueError: On length mismatch, empty input, negative ridge or
            non-finite samples
    """
    phases = np.asarray(phases, dtype=float).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if phases.size != values.size:
        raise ValueError(f"phases ({phases.size}) and values ({values.size}) differ in length")
    if phases.size == 0:
        raise ValueError("at least one sample is required to fit weights")
    if not (np.all(np.isfinite(phases)) and np.all(np.isfinite(values))):
        raise ValueError("phases and values must be finite")
    if not math.isfinite(ridge) or ridge < 0.0:
        raise ValueError(f"ridge must be a finite nonnegative number, got {ridge}")

    design = eval_basis(basis, phases)
    if ridge == 0.0:
        weights, *_ = np.linalg.lstsq(design, values, rcond=None)
        return weights

    gram = design.T @ design
    gram[np.diag_indices_from(gram)] += ridge
    factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    return scipy.linalg.cho_solve(factor, design.T @ values, check_finite=False)


def relative_ridge(basis: BasisSet, phases: ArrayLike, ridge: float) -> float:
    """Scale a relative ridge by the mean diagonal of the design Gram matrix."""
    design = eval_basis(basis, np.asarray(phases, dtype=float).ravel())
    return ridge * float(np.einsum("ij,ij->", design, design)) / basis.count


def sample_phases(samples: int) -> np.ndarray:
    """The P evenly spaced phases i * 100 / P used for reconstruction."""
    if samples < 1:
        raise ValueError(f"samples must be >= 1, got {samples}")
    return np.arange(samples, dtype=float) * (PHASE_PERIOD / samples)


def reconstruct(basis: BasisSet, weights: ArrayLike, samples: int) -> Trajectory:
    """
    Reconstruct a full cycle from basis weights.

    Args:
        basis: The basis set
        weights: Weight vector of length B^d
        samples: Number of samples P (>= 1)

    Returns:
        Trajectory sampled at phases i * 100 / P
    """
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (basis.count,):
        raise ValueError(f"expected {basis.count} weights, got shape {weights.shape}")
    phases = sample_phases(samples)
    return Trajectory(values=eval_basis(basis, phases) @ weights, phases=phases)
