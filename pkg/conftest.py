"""
Shared pytest fixtures: synthetic gait datasets, trained models and a
random-model builder for engine property checks.
"""

import numpy as np
import pytest

from basis import make_basis
from dataset import DofRole, DofSpec
from manifold import build_manifold
from model import PipModel, train
from synth import default_synth_config, generate


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: timing and long-running acceptance checks")


def synthetic(n_cycles: int, seed: int, **overrides):
    return generate(default_synth_config(n_cycles=n_cycles, seed=seed, **overrides))


def circle_samples(count: int = 200, radius: float = 1.0) -> np.ndarray:
    """(position, velocity, phase) rows on a circle, one revolution per cycle."""
    phases = np.arange(count) * (100.0 / count)
    angle = 2.0 * np.pi * phases / 100.0
    return np.column_stack([radius * np.cos(angle), -radius * np.sin(angle), phases])


def make_random_model(rng: np.random.Generator, observed: int = 3, latent: int = 1,
                      basis_count: int = 10, noise: float = 0.01) -> PipModel:
    """A well-conditioned random model; the first two DOFs are the phase inputs."""
    dofs = []
    for i in range(observed):
        dofs.append(DofSpec(name=f"obs{i}", role=DofRole.OBSERVED, unit="u",
                            is_phase_position=i == 0, is_phase_velocity=i == 1))
    for i in range(latent):
        dofs.append(DofSpec(name=f"lat{i}", role=DofRole.LATENT, unit="u"))
    bases = [make_basis(basis_count) for _ in dofs]
    total = basis_count * len(dofs)
    factor = rng.normal(size=(total, total))
    cov = factor @ factor.T / total + 0.1 * np.eye(total)
    cov = (cov + cov.T) / 2.0
    return PipModel(dofs=dofs, bases=bases, prior_mean=rng.normal(size=total), prior_cov=cov,
                    noise_diag=np.full(len(dofs), noise), manifold=build_manifold(circle_samples()))


@pytest.fixture
def random_model():
    return make_random_model


@pytest.fixture(scope="session")
def gait_train():
    return synthetic(20, seed=11, amplitude_jitter=0.05)


@pytest.fixture(scope="session")
def gait_holdout():
    return synthetic(10, seed=12, amplitude_jitter=0.05)


@pytest.fixture(scope="session")
def gait_model(gait_train):
    return train(gait_train[0])


@pytest.fixture(scope="session")
def clean_train():
    return synthetic(12, seed=21, noise_fraction=0.0, speed_warp=0.0, amplitude_jitter=0.0)


@pytest.fixture(scope="session")
def clean_holdout():
    return synthetic(6, seed=22, noise_fraction=0.0, speed_warp=0.0, amplitude_jitter=0.0)


@pytest.fixture(scope="session")
def clean_model(clean_train):
    return train(clean_train[0])
