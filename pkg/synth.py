"""
Synthetic periodic gait generator.

Every DOF is a truncated Fourier series of phase. Observed DOFs may carry a
per-cycle gain (stride-to-stride amplitude variability); a DOF may instead
be the phase derivative of another (angular velocity of an angle sensor);
latent and controlled DOFs add linear couplings to phase-shifted noiseless
observed signals. Each cycle samples the phase axis under a smooth monotone
time warp and adds Gaussian noise.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from basis import ALPHA
from config import Config
from dataset import Cycle, Dataset, DofRole, DofSpec, phase_input_indices

logger = logging.getLogger(__name__)

MAX_HARMONICS = 4
WARP_HARMONICS = 3


class SynthDof(BaseModel):
    """One generated channel."""
    name: str = Field(min_length=1)
    role: DofRole
    unit: str = ""
    offset: float = 0.0
    amplitudes: List[float] = Field(default_factory=list, max_length=MAX_HARMONICS)
    phases: List[float] = Field(default_factory=list, max_length=MAX_HARMONICS)  # radians
    derivative_of: Optional[str] = None
    derivative_scale: float = 1.0
    noise_std: float = Field(default=0.0, ge=0.0)
    is_phase_position: bool = False
    is_phase_velocity: bool = False

    @model_validator(mode="after")
    def _harmonics_match(self):
        if len(self.amplitudes) != len(self.phases):
            raise ValueError(f"DOF '{self.name}': amplitudes and phases differ in length")
        if self.derivative_of is not None and self.amplitudes:
            raise ValueError(f"DOF '{self.name}': a derivative DOF takes no harmonics of its own")
        return self

    def to_spec(self) -> DofSpec:
        return DofSpec(name=self.name, role=self.role, unit=self.unit,
                       is_phase_position=self.is_phase_position,
                       is_phase_velocity=self.is_phase_velocity)


class CouplingTerm(BaseModel):
    source: str
    weight: float
    shift: float = 0.0  # phase units


class Coupling(BaseModel):
    """Linear combination of phase-shifted observed signals added to a target DOF."""
    target: str
    terms: List[CouplingTerm] = Field(min_length=1)


class SynthConfig(BaseModel):
    """Generator parameters."""
    n_cycles: int = Field(default=20, ge=1)
    dofs: List[SynthDof] = Field(min_length=2)
    couplings: List[Coupling] = Field(default_factory=list)
    cycle_duration_s: float = Field(default=1.2, gt=0.0)
    duration_jitter: float = Field(default=0.0, ge=0.0, lt=1.0)
    speed_warp: float = Field(default=0.0, ge=0.0, lt=1.0)
    amplitude_jitter: float = Field(default=0.0, ge=0.0, lt=1.0)
    sample_rate_hz: float = Field(default=100.0, gt=0.0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)

    @model_validator(mode="after")
    def _references_resolve(self):
        by_name = {dof.name: dof for dof in self.dofs}
        if len(by_name) != len(self.dofs):
            raise ValueError("dofs: names must be unique")
        phase_input_indices([dof.to_spec() for dof in self.dofs])
        for dof in self.dofs:
            if dof.derivative_of is None:
                continue
            source = by_name.get(dof.derivative_of)
            if source is None or source.role != DofRole.OBSERVED or source.derivative_of is not None:
                raise ValueError(f"dofs: '{dof.name}' derivative_of must name an observed, "
                                 f"non-derivative DOF")
        targets = set()
        for coupling in self.couplings:
            target = by_name.get(coupling.target)
            if target is None or target.role == DofRole.OBSERVED:
                raise ValueError(f"couplings: target '{coupling.target}' must be a latent or "
                                 f"controlled DOF")
            if coupling.target in targets:
                raise ValueError(f"couplings: '{coupling.target}' has more than one coupling")
            targets.add(coupling.target)
            for term in coupling.terms:
                source = by_name.get(term.source)
                if source is None or source.role != DofRole.OBSERVED:
                    raise ValueError(f"couplings: '{coupling.target}' references '{term.source}', "
                                     f"which is not an observed DOF")
        return self

    def dof(self, name: str) -> SynthDof:
        for dof in self.dofs:
            if dof.name == name:
                return dof
        raise ValueError(f"unknown DOF '{name}'")

    def coupling_for(self, name: str) -> Optional[Coupling]:
        return next((c for c in self.couplings if c.target == name), None)


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-cycle true phase labels, noiseless signals and observed-DOF gains."""
    phases: List[np.ndarray]
    signals: List[np.ndarray]
    gains: List[Dict[str, float]]


def harmonic(amplitudes, phases, phi) -> np.ndarray:
    """sum_k a_k cos(k * alpha * phi + p_k), k = 1..K."""
    phi = np.asarray(phi, dtype=float)
    if not amplitudes:
        return np.zeros_like(phi)
    k = np.arange(1, len(amplitudes) + 1)
    angle = k * ALPHA * phi[..., None] + np.asarray(phases)
    return np.cos(angle) @ np.asarray(amplitudes, dtype=float)


def harmonic_derivative(amplitudes, phases, phi) -> np.ndarray:
    """Phase derivative of harmonic()."""
    phi = np.asarray(phi, dtype=float)
    if not amplitudes:
        return np.zeros_like(phi)
    k = np.arange(1, len(amplitudes) + 1)
    angle = k * ALPHA * phi[..., None] + np.asarray(phases)
    return -np.sin(angle) @ (np.asarray(amplitudes, dtype=float) * k * ALPHA)


def dof_signal(config: SynthConfig, name: str, phi,
               gains: Optional[Mapping[str, float]] = None) -> np.ndarray:
    """
    Noiseless value of one DOF at the given phases.

    Args:
        config: Generator configuration
        name: DOF name
        phi: Phase(s) in phase units
        gains: Per-observed-DOF amplitude gains, default 1

    Returns:
        Array shaped like phi
    """
    gains = gains or {}
    dof = config.dof(name)
    phi = np.asarray(phi, dtype=float)
    if dof.derivative_of is not None:
        source = config.dof(dof.derivative_of)
        derivative = harmonic_derivative(source.amplitudes, source.phases, phi)
        return dof.offset + dof.derivative_scale * gains.get(source.name, 1.0) * derivative
    gain = gains.get(name, 1.0) if dof.role == DofRole.OBSERVED else 1.0
    value = dof.offset + gain * harmonic(dof.amplitudes, dof.phases, phi)
    coupling = config.coupling_for(name)
    if coupling is not None:
        for term in coupling.terms:
            value = value + term.weight * dof_signal(config, term.source, phi + term.shift, gains)
    return value


def signals(config: SynthConfig, phi, gains: Optional[Mapping[str, float]] = None) -> np.ndarray:
    """Noiseless T x D matrix of every DOF at the given phases."""
    return np.column_stack([dof_signal(config, dof.name, phi, gains) for dof in config.dofs])


def mean_cycle(config: SynthConfig, samples: int = Config.DEFAULT_PREDICTION_SAMPLES):
    """Unit-gain cycle sampled at i * 100 / samples; returns (phases, P x D values)."""
    phases = np.arange(samples) * (Config.PHASE_PERIOD / samples)
    return phases, signals(config, phases)


def warp_phases(s: np.ndarray, strength: float, rng: np.random.Generator) -> np.ndarray:
    """
    Smooth monotone map from normalised time s in [0, 1] to phase [0, 100].

    The phase rate is 1 + strength * sum_k c_k sin(2 pi k s + theta_k) with
    sum |c_k| = 1, so it stays above 1 - strength > 0.
    """
    coefficients = rng.dirichlet(np.ones(WARP_HARMONICS)) * rng.choice([-1.0, 1.0], WARP_HARMONICS)
    offsets = rng.uniform(0.0, 2.0 * math.pi, WARP_HARMONICS)
    k = np.arange(1, WARP_HARMONICS + 1)
    rate = 1.0 + strength * (np.sin(2.0 * math.pi * k * s[:, None] + offsets) @ coefficients)
    cumulative = np.concatenate([[0.0], np.cumsum((rate[1:] + rate[:-1]) / 2.0 * np.diff(s))])
    phases = Config.PHASE_PERIOD * cumulative / cumulative[-1]
    phases[-1] = Config.PHASE_PERIOD
    return phases


def generate(config: SynthConfig) -> Tuple[Dataset, GroundTruth]:
    """
    Draw a synthetic dataset.

    Deterministic for a fixed config (seed included).

    Returns:
        (dataset, ground truth)
    """
    rng = np.random.default_rng(config.seed)
    observed = [dof.name for dof in config.dofs if dof.role == DofRole.OBSERVED]
    noise_std = np.array([dof.noise_std for dof in config.dofs])

    cycles, truth_phases, truth_signals, truth_gains = [], [], [], []
    start = 0.0
    for n in range(config.n_cycles):
        duration = config.cycle_duration_s * (1.0 + config.duration_jitter * rng.uniform(-1.0, 1.0))
        count = max(int(round(duration * config.sample_rate_hz)) + 1, 2)
        s = np.linspace(0.0, 1.0, count)
        phases = warp_phases(s, config.speed_warp, rng)
        gains = {name: 1.0 + config.amplitude_jitter * rng.uniform(-1.0, 1.0) for name in observed}
        clean = signals(config, phases, gains)
        values = clean + rng.standard_normal(clean.shape) * noise_std
        times = start + s * duration
        start = times[-1] + 1.0 / config.sample_rate_hz

        cycles.append(Cycle(cycle_id=f"c{n:04d}", times=times, values=values))
        truth_phases.append(phases)
        truth_signals.append(clean)
        truth_gains.append(gains)

    dataset = Dataset(dofs=[dof.to_spec() for dof in config.dofs], cycles=cycles)
    logger.info(f"✓ Generated {config.n_cycles} cycles, {len(config.dofs)} DOFs (seed {config.seed})")
    return dataset, GroundTruth(phases=truth_phases, signals=truth_signals, gains=truth_gains)


def _angle(name: str, offset: float, amplitudes, phases, duration: float) -> List[SynthDof]:
    """An observed angle sensor and its angular velocity (deg/s at the nominal cadence)."""
    return [
        SynthDof(name=f"{name}_angle", role=DofRole.OBSERVED, unit="deg", offset=offset,
                 amplitudes=amplitudes, phases=phases),
        SynthDof(name=f"{name}_velocity", role=DofRole.OBSERVED, unit="deg/s",
                 derivative_of=f"{name}_angle", derivative_scale=Config.PHASE_PERIOD / duration),
    ]


def default_synth_config(n_cycles: int = 20, noise_fraction: float = 0.02,
                         speed_warp: float = 0.3, amplitude_jitter: float = 0.1,
                         duration_jitter: float = 0.1, cycle_duration_s: float = 1.2,
                         sample_rate_hz: float = 100.0, seed: int = 0) -> SynthConfig:
    """
    Gait-like 14-DOF configuration: 8 observed sensors, 5 latent
    biomechanical variables and 1 controlled ankle command.

    The shank angle drives phase estimation; its harmonics keep the
    (angle, angular velocity) portrait close to an ellipse, so no stretch of
    the cycle crawls through the lookup grid.

    Args:
        noise_fraction: Sensor noise std as a fraction of each observed DOF's
            half peak-to-peak. Latent and controlled columns are noiseless.

    Returns:
        A validated SynthConfig
    """
    d = cycle_duration_s
    dofs = _angle("shank", 0.0, [30.0, 4.0, 1.0], [0.0, 0.5, 1.0], d) \
        + _angle("femur", 10.0, [25.0, 6.0, 2.0], [0.8, 1.6, 2.0], d) \
        + [
            SynthDof(name="heel_pressure", role=DofRole.OBSERVED, unit="kPa", offset=60.0,
                     amplitudes=[50.0, 20.0, 8.0, 3.0], phases=[0.3, 2.0, 1.0, 0.4]),
            SynthDof(name="meta1_pressure", role=DofRole.OBSERVED, unit="kPa", offset=50.0,
                     amplitudes=[40.0, 15.0, 6.0], phases=[1.5, 0.5, 2.5]),
            SynthDof(name="meta4_pressure", role=DofRole.OBSERVED, unit="kPa", offset=45.0,
                     amplitudes=[35.0, 12.0, 5.0], phases=[1.7, 0.9, 2.2]),
            SynthDof(name="toe_pressure", role=DofRole.OBSERVED, unit="kPa", offset=40.0,
                     amplitudes=[30.0, 14.0, 4.0], phases=[2.4, 1.1, 0.2]),
            SynthDof(name="ankle_angle", role=DofRole.LATENT, unit="deg", offset=2.0,
                     amplitudes=[3.0], phases=[1.0]),
            SynthDof(name="ankle_moment", role=DofRole.LATENT, unit="Nm/kg", offset=-0.5),
            SynthDof(name="ankle_force", role=DofRole.LATENT, unit="N/kg"),
            SynthDof(name="knee_angle", role=DofRole.LATENT, unit="deg", offset=20.0,
                     amplitudes=[5.0], phases=[0.3]),
            SynthDof(name="knee_moment", role=DofRole.LATENT, unit="Nm/kg"),
            SynthDof(name="ankle_command", role=DofRole.CONTROLLED, unit="deg", offset=2.0),
        ]
    dofs[0] = dofs[0].model_copy(update={"is_phase_position": True})
    dofs[1] = dofs[1].model_copy(update={"is_phase_velocity": True})

    def couple(target, *terms):
        return Coupling(target=target, terms=[CouplingTerm(source=s, weight=w, shift=p)
                                              for s, w, p in terms])

    couplings = [
        couple("ankle_angle", ("shank_angle", 0.5, 0.0), ("femur_angle", -0.3, 5.0)),
        couple("ankle_moment", ("heel_pressure", 0.01, 0.0), ("meta1_pressure", 0.015, -3.0),
               ("toe_pressure", 0.012, 2.0)),
        couple("ankle_force", ("heel_pressure", 0.05, 0.0), ("meta4_pressure", 0.04, 0.0),
               ("toe_pressure", 0.03, 4.0)),
        couple("knee_angle", ("femur_angle", 0.8, 8.0), ("shank_angle", -0.4, 0.0)),
        couple("knee_moment", ("femur_velocity", 0.01, 0.0), ("heel_pressure", 0.008, 6.0)),
        couple("ankle_command", ("shank_angle", 0.45, 3.0), ("femur_angle", -0.27, 8.0)),
    ]
    config = SynthConfig(n_cycles=n_cycles, dofs=dofs, couplings=couplings,
                         cycle_duration_s=cycle_duration_s, duration_jitter=duration_jitter,
                         speed_warp=speed_warp, amplitude_jitter=amplitude_jitter,
                         sample_rate_hz=sample_rate_hz, seed=seed)
    _, clean = mean_cycle(config, 200)
    half_range = np.ptp(clean, axis=0) / 2.0
    noisy = [dof.model_copy(update={"noise_std": float(noise_fraction * r)
                                    if dof.role == DofRole.OBSERVED else 0.0})
             for dof, r in zip(config.dofs, half_range)]
    return config.model_copy(update={"dofs": noisy})


def load_synth_config(path: Union[str, Path]) -> SynthConfig:
    """Read a JSON generator configuration."""
    config = SynthConfig.model_validate_json(Path(path).read_text(encoding="utf-8"))
    logger.info(f"Loaded synth config {path}: {config.n_cycles} cycles, {len(config.dofs)} DOFs")
    return config
