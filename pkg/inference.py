"""
Run-time inference engine.

Each step looks up the phase from the current phase-input sensors, then
conditions the Gaussian belief over the concatenated basis weights on the
observed DOFs (a Kalman measurement update with identity dynamics).
Trajectories of every DOF, observed or not, are reconstructed from the
belief with pointwise uncertainty.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from alignment import FeatureNormalizer, subsequence_dtw
from basis import Trajectory, eval_basis, sample_phases, wrap_phase
from config import Config
from manifold import lookup_phase
from model import PipModel

logger = logging.getLogger(__name__)


class PhaseUnavailableError(RuntimeError):
    """The phase-input sensors are masked, so no phase can be looked up."""


class NumericalError(RuntimeError):
    """A conditioning step would have produced a non-finite belief."""


@dataclass(frozen=True, eq=False)
class BeliefState:
    """Posterior over the concatenated weight vector."""
    mean: np.ndarray
    cov: np.ndarray
    step_count: int

    def trace(self) -> float:
        return float(np.trace(self.cov))


@dataclass(frozen=True, eq=False)
class ObservationFrame:
    """
    One time step of sensor readings.

    Attributes:
        values: Length-D vector; only masked-in observed entries are read
        mask: Length-D booleans, True where a reading is present
    """
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.mask.shape or self.values.ndim != 1:
            raise ValueError(f"values {self.values.shape} and mask {self.mask.shape} must be "
                             f"matching vectors")

    @classmethod
    def from_observed(cls, model: PipModel, readings: Sequence[Optional[float]]) -> "ObservationFrame":
        """
        Build a frame from readings of the observed DOFs in model order.

        None or NaN marks a masked sensor.
        """
        observed = model.observed_indices
        if len(readings) != len(observed):
            raise ValueError(f"expected {len(observed)} observed readings, got {len(readings)}")
        values = np.zeros(len(model.dofs))
        mask = np.zeros(len(model.dofs), dtype=bool)
        for d, reading in zip(observed, readings):
            if reading is None or (isinstance(reading, float) and math.isnan(reading)):
                continue
            values[d] = reading
            mask[d] = True
        return cls(values=values, mask=mask)


@dataclass(frozen=True, eq=False)
class PredictionBand:
    """Reconstructed trajectory of one DOF with pointwise standard deviation."""
    dof: str
    phases: np.ndarray
    mean: np.ndarray
    std: np.ndarray

    @property
    def trajectory(self) -> Trajectory:
        return Trajectory(values=self.mean, phases=self.phases)


def _active_rows(model: PipModel, mask: Sequence[bool]) -> list:
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (len(model.dofs),):
        raise ValueError(f"mask must have length {len(model.dofs)}, got {mask.shape}")
    return [d for d in model.observed_indices if mask[d]]


def build_observation_matrix(model: PipModel, phi: float, mask: Sequence[bool]) -> np.ndarray:
    """
    Block-diagonal observation matrix at one phase.

    One row per masked-in observed DOF, holding that DOF's basis values in
    its own column block. Latent and controlled DOFs never contribute rows.

    Args:
        model: Trained model
        phi: Phase in [0, 100)
        mask: Per-DOF presence flags

    Returns:
        H with shape (number of active rows, B)
    """
    active = _active_rows(model, mask)
    matrix = np.zeros((len(active), model.total_basis))
    for row, d in enumerate(active):
        matrix[row, model.block(d)] = eval_basis(model.bases[d], phi)
    return matrix


def is_symmetric_psd(cov: np.ndarray, tolerance: float = Config.PSD_TOLERANCE) -> bool:
    """Exact symmetry and eigenvalues >= -tolerance * trace."""
    if not np.array_equal(cov, cov.T):
        return False
    floor = -tolerance * max(float(np.trace(cov)), 0.0)
    return bool(np.linalg.eigvalsh(cov).min() >= floor)


class PipEngine:
    """
    Sequential belief over one model.

    step() calls must be serialised per engine; any number of engines may
    share one model.
    """

    def __init__(self, model: PipModel):
        self.model = model
        self._noise = np.asarray(model.noise_diag, dtype=float)
        self._pos_index, self._vel_index = model.phase_inputs
        self.reset()

    def reset(self) -> None:
        """Restore the prior belief."""
        self._mean = np.array(self.model.prior_mean, dtype=float)
        self._cov = np.array(self.model.prior_cov, dtype=float)
        self._steps = 0

    @property
    def step_count(self) -> int:
        return self._steps

    def snapshot(self) -> BeliefState:
        """Copy of the current belief."""
        return BeliefState(mean=self._mean.copy(), cov=self._cov.copy(), step_count=self._steps)

    def condition(self, frame: ObservationFrame, phase: float) -> BeliefState:
        """
        Condition the belief on a frame at a known phase.

        Args:
            frame: Observation frame
            phase: Phase in phase units (wrapped)

        Returns:
            The updated belief

        Raises:
            ValueError: If a masked-in observed value is not finite
            NumericalError: If the update would be non-finite (belief unchanged)
        """
        active = _active_rows(self.model, frame.mask)
        y = frame.values[active]
        if not np.all(np.isfinite(y)):
            raise ValueError("observation contains a non-finite value")
        if not active:
            self._steps += 1
            return self.snapshot()

        phase = float(wrap_phase(phase))
        H = build_observation_matrix(self.model, phase, frame.mask)
        cov_Ht = self._cov @ H.T
        innovation_cov = H @ cov_Ht
        innovation_cov[np.diag_indices_from(innovation_cov)] += self._noise[active]
        try:
            factor = scipy.linalg.cho_factor(innovation_cov, lower=True, check_finite=False)
            gain = scipy.linalg.cho_solve(factor, cov_Ht.T, check_finite=False).T
        except np.linalg.LinAlgError as e:
            raise NumericalError(f"innovation covariance is not positive definite: {e}") from e

        mean = self._mean + gain @ (y - H @ self._mean)
        cov = self._cov - gain @ cov_Ht.T
        cov = (cov + cov.T) / 2.0
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise NumericalError(f"non-finite belief at step {self._steps + 1}")
        self._mean, self._cov = mean, cov
        self._steps += 1
        return self.snapshot()

    def lookup(self, frame: ObservationFrame) -> float:
        """
        Phase from the frame's phase-input sensors.

        Raises:
            PhaseUnavailableError: If either phase input is masked
        """
        if not (frame.mask[self._pos_index] and frame.mask[self._vel_index]):
            raise PhaseUnavailableError("phase position/velocity sensors are masked")
        return lookup_phase(self.model.manifold, float(frame.values[self._pos_index]),
                            float(frame.values[self._vel_index]))

    def step(self, frame: ObservationFrame) -> Tuple[float, BeliefState]:
        """
        One run-time iteration: phase lookup, then conditioning.

        Raises:
            PhaseUnavailableError: Phase inputs masked (belief unchanged)
            ValueError: Non-finite masked-in observation
        """
        phase = self.lookup(frame)
        return phase, self.condition(frame, phase)

    def predict(self, dof: str, samples: int = Config.DEFAULT_PREDICTION_SAMPLES) -> PredictionBand:
        """
        Reconstruct one DOF over a full cycle from the current belief.

        Args:
            dof: DOF name
            samples: Number of phase samples P (>= 1)

        Raises:
            ValueError: Unknown DOF or P < 1
        """
        index = self.model.index(dof)
        phases = sample_phases(samples)
        block = self.model.block(index)
        design = eval_basis(self.model.bases[index], phases)
        cov = self._cov[block, block]
        variance = np.einsum("pi,ij,pj->p", design, cov, design)
        return PredictionBand(dof=dof, phases=phases, mean=design @ self._mean[block],
                              std=np.sqrt(np.maximum(variance, 0.0)))

    def estimate_at(self, phase: float) -> Tuple[np.ndarray, np.ndarray]:
        """Per-DOF mean and standard deviation at one phase."""
        means = np.empty(len(self.model.dofs))
        stds = np.empty(len(self.model.dofs))
        for d, basis in enumerate(self.model.bases):
            block = self.model.block(d)
            row = eval_basis(basis, phase)
            means[d] = row @ self._mean[block]
            stds[d] = math.sqrt(max(float(row @ self._cov[block, block] @ row), 0.0))
        return means, stds


def init_engine(model: PipModel) -> PipEngine:
    """Engine whose belief is the model prior."""
    return PipEngine(model)


class DtwPhaseEstimator:
    """
    Phase from subsequence DTW of recent (position, velocity) history against
    two periods of the prior-mean reconstruction of the phase inputs.
    """

    def __init__(self, model: PipModel, samples: int = Config.DEFAULT_PREDICTION_SAMPLES,
                 window: int = Config.BASELINE_WINDOW):
        if window < 2:
            raise ValueError(f"baseline window must be >= 2, got {window}")
        self.samples = samples
        self.window = window
        pos_index, vel_index = model.phase_inputs
        phases = sample_phases(samples)
        columns = []
        for d in (pos_index, vel_index):
            columns.append(eval_basis(model.bases[d], phases) @ model.prior_mean[model.block(d)])
        cycle = np.column_stack(columns)
        self.reference = np.vstack([cycle, cycle])
        self.normalizer = FeatureNormalizer.fit([cycle])

    def __call__(self, history: np.ndarray) -> float:
        history = np.asarray(history, dtype=float)
        if history.ndim != 2 or history.shape[1] != 2:
            raise ValueError(f"history must be N x 2 (position, velocity), got {history.shape}")
        if history.shape[0] < 2:
            raise ValueError("DTW phase baseline needs at least 2 history frames")
        if not np.all(np.isfinite(history)):
            raise ValueError("history must be finite")
        end, _ = subsequence_dtw(history[-self.window:], self.reference, self.normalizer)
        return float(wrap_phase((end % self.samples) * Config.PHASE_PERIOD / self.samples))


def dtw_phase_baseline(model: PipModel, history: np.ndarray) -> float:
    """
    Phase of the last history frame by DTW against the prior-mean cycle.

    Args:
        model: Trained model
        history: N x 2 array of (phase position, phase velocity), N >= 2

    Returns:
        Phase in [0, 100)

    Raises:
        ValueError: If fewer than 2 frames are given
    """
    return DtwPhaseEstimator(model)(history)
