"""
Tests for the synthetic gait generator.
"""

import json

import numpy as np
import pytest
from pydantic import ValidationError

from config import Config
from dataset import DofRole, format_dataset, parse_dataset, validate_dataset
from model import train
from synth import (
    Coupling,
    CouplingTerm,
    SynthConfig,
    SynthDof,
    default_synth_config,
    dof_signal,
    generate,
    load_synth_config,
    mean_cycle,
)


# ── Helpers ───────────────────────────────────────────────


def _small_config(noise_std: float = 0.0, seed: int = 0, **overrides) -> SynthConfig:
    dofs = [
        SynthDof(name="a", role=DofRole.OBSERVED, amplitudes=[2.0, 0.5], phases=[0.0, 1.0],
                 noise_std=noise_std, is_phase_position=True),
        SynthDof(name="a_vel", role=DofRole.OBSERVED, derivative_of="a", derivative_scale=10.0,
                 noise_std=noise_std, is_phase_velocity=True),
        SynthDof(name="b", role=DofRole.OBSERVED, offset=3.0, amplitudes=[1.0, 0.0, 0.3],
                 phases=[2.0, 0.0, 0.5], noise_std=noise_std),
        SynthDof(name="hidden", role=DofRole.LATENT, noise_std=noise_std),
    ]
    coupling = Coupling(target="hidden", terms=[CouplingTerm(source="a", weight=0.5),
                                                CouplingTerm(source="b", weight=0.5, shift=10.0)])
    options = dict(n_cycles=5, dofs=dofs, couplings=[coupling], sample_rate_hz=50.0, seed=seed)
    options.update(overrides)
    return SynthConfig(**options)


# ── generate ──────────────────────────────────────────────


def test_same_seed_is_bit_identical():
    config = default_synth_config(n_cycles=4, seed=7)
    first, _ = generate(config)
    second, _ = generate(config)
    assert format_dataset(first) == format_dataset(second)


def test_different_seeds_differ():
    first, _ = generate(default_synth_config(n_cycles=2, seed=1))
    second, _ = generate(default_synth_config(n_cycles=2, seed=2))
    assert format_dataset(first) != format_dataset(second)


def test_degenerate_generator_gives_identical_cycles():
    config = default_synth_config(n_cycles=4, noise_fraction=0.0, speed_warp=0.0,
                                  amplitude_jitter=0.0, duration_jitter=0.0)
    dataset, _ = generate(config)
    for cycle in dataset.cycles[1:]:
        assert np.array_equal(cycle.values, dataset.cycles[0].values)
    model = train(dataset)
    assert np.array_equal(model.prior_cov, Config.COV_REGULARIZER_ABS * np.eye(model.total_basis))


def test_latent_coupling_by_construction():
    config = _small_config(amplitude_jitter=0.2, speed_warp=0.4)
    dataset, truth = generate(config)
    a, b, hidden = dataset.index("a"), dataset.index("b"), dataset.index("hidden")
    for phases, clean, gains in zip(truth.phases, truth.signals, truth.gains):
        np.testing.assert_allclose(dof_signal(config, "a", phases, gains), clean[:, a], atol=1e-12)
        recomputed = 0.5 * dof_signal(config, "a", phases, gains) \
            + 0.5 * dof_signal(config, "b", phases + 10.0, gains)
        assert np.max(np.abs(recomputed - clean[:, hidden])) <= 1e-10


def test_ground_truth_phases_strictly_increase():
    _, truth = generate(default_synth_config(n_cycles=6, seed=3, speed_warp=0.9))
    for phases in truth.phases:
        assert phases[0] == 0.0 and phases[-1] == 100.0
        assert np.all(np.diff(phases) > 0.0)


def test_dataset_is_valid_and_round_trips():
    dataset, _ = generate(default_synth_config(n_cycles=3, seed=4))
    validate_dataset(dataset)
    assert format_dataset(parse_dataset(format_dataset(dataset))) == format_dataset(dataset)


def test_velocity_is_scaled_phase_derivative():
    config = _small_config()
    phases = np.linspace(0.0, 100.0, 2001)
    position = dof_signal(config, "a", phases)
    velocity = dof_signal(config, "a_vel", phases)
    numeric = np.gradient(position, phases) * 10.0
    np.testing.assert_allclose(velocity[1:-1], numeric[1:-1], atol=1e-3)


def test_noise_increases_noise_estimate():
    levels = (0.01, 0.05, 0.2)
    means = []
    for level in levels:
        estimates = [train(generate(_small_config(noise_std=level, seed=seed, n_cycles=3))[0]).noise_diag[2]
                     for seed in range(20)]
        means.append(np.mean(estimates))
    assert means[0] < means[1] < means[2], f"noise estimates {means}"


# ── configuration ─────────────────────────────────────────


def test_default_config_layout():
    config = default_synth_config()
    roles = [dof.role for dof in config.dofs]
    assert len(config.dofs) == 14
    assert roles.count(DofRole.OBSERVED) == 8
    assert roles.count(DofRole.LATENT) == 5
    assert roles.count(DofRole.CONTROLLED) == 1
    assert config.dofs[0].is_phase_position and config.dofs[1].is_phase_velocity
    assert all(dof.noise_std > 0.0 for dof in config.dofs if dof.role == DofRole.OBSERVED)
    assert all(dof.noise_std == 0.0 for dof in config.dofs if dof.role != DofRole.OBSERVED)


def test_latent_columns_are_noiseless():
    config = default_synth_config(n_cycles=3, seed=5)
    dataset, truth = generate(config)
    hidden = [i for i, dof in enumerate(config.dofs) if dof.role != DofRole.OBSERVED]
    observed = [i for i, dof in enumerate(config.dofs) if dof.role == DofRole.OBSERVED]
    for cycle, clean in zip(dataset.cycles, truth.signals):
        assert np.array_equal(cycle.values[:, hidden], clean[:, hidden])
        assert np.all(np.abs(cycle.values[:, observed] - clean[:, observed]).max(axis=0) > 0.0)


def test_phase_portrait_has_no_slow_stretch():
    config = default_synth_config()
    _, clean = mean_cycle(config, 400)
    portrait = clean[:, :2] / np.ptp(clean[:, :2], axis=0)
    speed = np.linalg.norm(np.diff(portrait, axis=0, append=portrait[:1]), axis=1)
    assert speed.min() > 0.4 * speed.mean(), f"min speed {speed.min():.4g}, mean {speed.mean():.4g}"


def test_invalid_field_named():
    with pytest.raises(ValidationError, match="speed_warp"):
        _small_config(speed_warp=1.0)


def test_coupling_must_reference_observed():
    config = _small_config()
    bad = Coupling(target="hidden", terms=[CouplingTerm(source="hidden", weight=1.0)])
    with pytest.raises(ValidationError, match="not an observed DOF"):
        SynthConfig(n_cycles=2, dofs=config.dofs, couplings=[bad])


def test_too_many_harmonics():
    with pytest.raises(ValidationError):
        SynthDof(name="x", role=DofRole.OBSERVED, amplitudes=[1.0] * 5, phases=[0.0] * 5)


def test_load_config_file(tmp_path):
    path = tmp_path / "synth.json"
    path.write_text(json.dumps(_small_config(seed=9).model_dump(mode="json")))
    config = load_synth_config(path)
    assert config.seed == 9
    assert format_dataset(generate(config)[0]) == format_dataset(generate(_small_config(seed=9))[0])
