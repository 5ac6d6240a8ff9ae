"""
Tests for the training pipeline and noise estimation.
"""

import time

import numpy as np
import pytest

from basis import eval_basis, fit_weights, make_basis, reconstruct, relative_ridge
from config import Config
from dataset import Cycle, DataError, Dataset, DofRole, DofSpec
from model import TrainingConfig, aligned_phase_inputs, estimate_noise, train, weight_statistics
from synth import default_synth_config, generate, mean_cycle


# ── Helpers ───────────────────────────────────────────────


def _three_dofs():
    return [
        DofSpec(name="pos", role=DofRole.OBSERVED, is_phase_position=True),
        DofSpec(name="vel", role=DofRole.OBSERVED, is_phase_velocity=True),
        DofSpec(name="load", role=DofRole.LATENT),
    ]


def _span_cycle(cycle_id, load_weights, length=60):
    """Cycle whose columns lie exactly in the 10-function basis span."""
    basis = make_basis(10)
    phases = np.linspace(0.0, 100.0, length)
    design = eval_basis(basis, phases)
    pos = design @ np.cos(np.arange(10))
    vel = design @ np.sin(np.arange(10) + 1.0)
    values = np.column_stack([pos, vel, design @ load_weights])
    return Cycle(cycle_id, np.linspace(0.0, 1.0, length), values)


# ── train ─────────────────────────────────────────────────


def test_identical_cycles_give_regularizer_only(gait_train):
    cycle = gait_train[0].cycles[0]
    cycles = [Cycle(f"copy{i}", cycle.times, cycle.values) for i in range(4)]
    model = train(Dataset(dofs=gait_train[0].dofs, cycles=cycles))
    total = model.total_basis
    assert np.array_equal(model.prior_cov, Config.COV_REGULARIZER_ABS * np.eye(total))


def test_single_cycle_prior(gait_train):
    dataset = gait_train[0].subset(["c0000"])
    model = train(dataset)
    cycle = dataset.cycles[0]
    phases = np.linspace(0.0, 100.0, len(cycle))
    block = model.block(0)
    basis = model.bases[0]
    expected = fit_weights(basis, phases, cycle.values[:, 0],
                           relative_ridge(basis, phases, Config.DEFAULT_RIDGE))
    np.testing.assert_array_equal(model.prior_mean[block], expected)
    assert np.array_equal(model.prior_cov, Config.COV_REGULARIZER_ABS * np.eye(model.total_basis))


def test_empty_dataset_rejected():
    with pytest.raises(ValueError, match="at least one cycle"):
        train(Dataset(dofs=_three_dofs(), cycles=[]))


def test_non_finite_value_names_cycle_and_column():
    cycle = _span_cycle("bad", np.ones(10))
    cycle.values[5, 2] = np.inf
    with pytest.raises(DataError, match="cycle bad column load"):
        train(Dataset(dofs=_three_dofs(), cycles=[cycle]))


def test_prior_mean_equals_mean_of_exact_weights():
    rng = np.random.default_rng(0)
    load_weights = [rng.normal(size=10) * (i + 1) for i in range(5)]
    cycles = [_span_cycle(f"c{i}", w) for i, w in enumerate(load_weights)]
    model = train(Dataset(dofs=_three_dofs(), cycles=cycles), TrainingConfig(ridge=0.0))
    np.testing.assert_allclose(model.prior_mean[model.block(2)], np.mean(load_weights, axis=0),
                               atol=1e-8)


def test_prior_covariance_symmetric_and_positive(gait_model):
    cov = gait_model.prior_cov
    assert np.array_equal(cov, cov.T), "prior covariance must be exactly symmetric"
    epsilon = gait_model.metadata["covariance_regularizer"]
    assert np.linalg.eigvalsh(cov).min() >= epsilon / 2.0


def test_training_is_deterministic(gait_train, gait_model):
    assert train(gait_train[0]).fingerprint() == gait_model.fingerprint()


def test_observed_noise_positive(gait_model):
    assert np.all(gait_model.noise_diag[gait_model.observed_indices] > 0.0)


def test_metadata_records_training(gait_train, gait_model):
    assert gait_model.metadata["cycle_ids"] == [c.cycle_id for c in gait_train[0].cycles]
    assert set(gait_model.metadata["residual_rms"]) == set(gait_model.names)


def test_basis_count_overrides(gait_train):
    dataset = gait_train[0].subset(["c0000", "c0001", "c0002"])
    model = train(dataset, TrainingConfig(basis_count=6, basis_counts={"knee_angle": 8}))
    counts = {dof.name: basis.count for dof, basis in zip(model.dofs, model.bases)}
    assert counts["knee_angle"] == 8
    assert all(count == 6 for name, count in counts.items() if name != "knee_angle")
    assert model.total_basis == 6 * 13 + 8


def test_unknown_basis_override_rejected(gait_train):
    with pytest.raises(ValueError, match="unknown DOFs"):
        train(gait_train[0], TrainingConfig(basis_counts={"elbow": 4}))


def test_aligned_phase_inputs_follow_fitted_curves():
    bases = [make_basis(8), make_basis(10), make_basis(6)]
    weights = np.random.default_rng(4).normal(size=24)
    phases = np.linspace(0.0, 100.0, 37)
    rows = aligned_phase_inputs(bases, weights, (2, 0), phases)
    assert rows.shape == (37, 3)
    np.testing.assert_allclose(rows[:, 0], eval_basis(bases[2], phases) @ weights[18:])
    np.testing.assert_allclose(rows[:, 1], eval_basis(bases[0], phases) @ weights[:8])
    assert np.array_equal(rows[:, 2], phases)


def test_prior_mean_reconstructs_generator_mean_cycle():
    config = default_synth_config(n_cycles=20, seed=5, speed_warp=0.0)
    dataset, _ = generate(config)
    started = time.perf_counter()
    model = train(dataset)
    assert time.perf_counter() - started < 10.0, "training 20 cycles should take well under 10 s"

    phases, truth = mean_cycle(config, 100)
    for d, dof in enumerate(model.dofs):
        reconstructed = reconstruct(model.bases[d], model.prior_mean[model.block(d)], 100).values
        ptp = np.ptp(truth[:, d])
        mae = np.mean(np.abs(reconstructed - truth[:, d]))
        assert mae < 0.05 * ptp, f"{dof.name}: MAE {mae:.4g} vs peak-to-peak {ptp:.4g}"


# ── estimate_noise / weight_statistics ────────────────────


class TestEstimateNoise:
    def test_zero_residuals_hit_floor(self):
        variance = estimate_noise([np.zeros(10)], [4.0])
        assert variance[0] == pytest.approx(Config.NOISE_FLOOR_REL * 16.0)

    def test_constant_dof_uses_absolute_floor(self):
        assert estimate_noise([np.zeros(3)], [0.0])[0] == Config.NOISE_FLOOR_ABS

    def test_unbiased_variance(self):
        assert estimate_noise([np.array([-1.0, 1.0])], [2.0])[0] == pytest.approx(2.0)

    def test_single_residual(self):
        assert estimate_noise([np.array([3.0])], [1.0])[0] == pytest.approx(Config.NOISE_FLOOR_REL)

    def test_sampling_accuracy(self):
        residuals = np.random.default_rng(0).normal(scale=0.3, size=100_000)
        assert estimate_noise([residuals], [1.0])[0] == pytest.approx(0.09, rel=0.05)


def test_weight_statistics_single_cycle():
    weights = np.array([[1.0, 2.0, 3.0]])
    mean, cov, epsilon = weight_statistics(weights)
    np.testing.assert_array_equal(mean, weights[0])
    assert epsilon == Config.COV_REGULARIZER_ABS
    np.testing.assert_array_equal(cov, epsilon * np.eye(3))


def test_weight_statistics_matches_numpy():
    weights = np.random.default_rng(1).normal(size=(15, 6)) + 100.0
    mean, cov, epsilon = weight_statistics(weights)
    np.testing.assert_allclose(mean, weights.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(cov - epsilon * np.eye(6), np.cov(weights, rowvar=False), atol=1e-10)
