"""
Configuration module for the periodic interaction primitives toolkit.
All adjustable numeric defaults are defined here (code-first configuration).
Deployment-specific settings are loaded from the environment / .env file.
"""

import os
from dotenv import load_dotenv

load_dotenv()


def _optional_int(name: str):
    value = os.getenv(name, "").strip()
    return int(value) if value else None


class Config:
    """Static configuration class for all toolkit settings."""

    # Runtime Settings
    LOG_LEVEL = os.getenv("PIP_LOG_LEVEL", "INFO")
    MODEL_FORMAT = os.getenv("PIP_MODEL_FORMAT", "text")

    # Basis Settings
    DEFAULT_BASIS_COUNT = 10
    DEFAULT_RIDGE = 1e-6      # relative to the mean diagonal of the design Gram matrix
    MAX_KAPPA = 100.0
    PHASE_PERIOD = 100.0

    # Alignment Settings
    DTW_BAND = _optional_int("PIP_DTW_BAND")  # Sakoe-Chiba half width, None = unconstrained

    # Manifold Settings
    DEFAULT_GRID_POSITIONS = 50   # E
    DEFAULT_GRID_VELOCITIES = 50  # F
    MANIFOLD_MARGIN = 0.05

    # Training Settings
    COV_REGULARIZER_REL = 1e-6
    COV_REGULARIZER_ABS = 1e-8   # used when the sample covariance trace is 0
    NOISE_FLOOR_REL = 1e-8       # times (DOF peak-to-peak)^2
    NOISE_FLOOR_ABS = 1e-12      # used when a DOF is constant

    # Model File Settings
    MODEL_MAGIC = "PIPMODEL"
    MODEL_FORMAT_VERSION = 1

    # Inference Settings
    DEFAULT_PREDICTION_SAMPLES = 100
    BASELINE_WINDOW = int(os.getenv("PIP_BASELINE_WINDOW", "100"))
    PSD_TOLERANCE = 1e-9         # times trace

    # Evaluation Settings
    OBSERVE_FRACTION = 0.3
