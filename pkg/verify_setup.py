"""
Verification script to check if the environment is properly set up.
This script checks imports, environment overrides and the compiled DTW kernels
before running the toolkit.
"""

import os
import sys
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

ENV_OVERRIDES = {
    "PIP_LOG_LEVEL": "log level (default INFO)",
    "PIP_MODEL_FORMAT": "model store kind (default text)",
    "PIP_DTW_BAND": "Sakoe-Chiba half width (default unconstrained)",
    "PIP_BASELINE_WINDOW": "DTW baseline history window (default 100)",
}


def verify_imports():
    """Verify all required imports are available."""
    print("Checking imports...")

    try:
        import numpy
        print(f"  ✅ numpy (version {numpy.__version__})")
        import scipy
        print(f"  ✅ scipy (version {scipy.__version__})")
        import numba
        print(f"  ✅ numba (version {numba.__version__})")
    except ImportError as e:
        print(f"  ❌ {e}")
        return False

    try:
        import pydantic
        print(f"  ✅ pydantic (version {pydantic.VERSION})")

        major_version = int(pydantic.VERSION.split('.')[0])
        if major_version < 2:
            print(f"  ❌ Pydantic {pydantic.VERSION} is older than 2.x")
            return False
    except ImportError as e:
        print(f"  ❌ pydantic: {e}")
        return False

    return True


def verify_environment():
    """Report which optional environment overrides are set."""
    print("\nChecking environment variables...")

    for var, description in ENV_OVERRIDES.items():
        value = os.getenv(var)
        if value:
            print(f"  ✅ {var} = {value}")
        else:
            print(f"  ℹ️  {var} not set: {description}")

    return True


def verify_config():
    """Verify config.py loads and its overrides are usable."""
    print("\nChecking config.py...")

    try:
        from config import Config
        from storage import create_model_store
        create_model_store()
        if Config.DTW_BAND is not None and Config.DTW_BAND < 0:
            raise ValueError(f"PIP_DTW_BAND must be >= 0, got {Config.DTW_BAND}")
        if Config.BASELINE_WINDOW < 2:
            raise ValueError(f"PIP_BASELINE_WINDOW must be >= 2, got {Config.BASELINE_WINDOW}")
        print("  ✅ Config class loads successfully")
        print(f"  ✅ Model format: {Config.MODEL_FORMAT} (version {Config.MODEL_FORMAT_VERSION})")
        return True
    except Exception as e:
        print(f"  ❌ Config error: {e}")
        return False


def verify_kernels():
    """Compile the DTW kernels once and check a known alignment."""
    print("\nChecking DTW kernels...")

    try:
        import numpy as np
        from alignment import dtw_from_cost
        cost = np.array([[0.0, 1.0, 1.0], [1.0, 0.0, 1.0], [1.0, 1.0, 0.0]])
        result = dtw_from_cost(cost)
        if result.cost != 0.0 or result.path.tolist() != [[0, 0], [1, 1], [2, 2]]:
            print(f"  ❌ Unexpected alignment: {result.path.tolist()} (cost {result.cost})")
            return False
        print("  ✅ numba kernels compiled")
        return True
    except Exception as e:
        print(f"  ❌ Kernel error: {e}")
        return False


def main():
    """Run all verification checks."""
    print("=" * 60)
    print("ENVIRONMENT VERIFICATION")
    print("=" * 60)

    print(f"\nPython version: {sys.version.split()[0]}")
    print()

    imports_ok = verify_imports()
    env_ok = verify_environment()
    config_ok = imports_ok and verify_config()
    kernels_ok = imports_ok and verify_kernels()

    print("\n" + "=" * 60)

    if imports_ok and env_ok and config_ok and kernels_ok:
        print("✅ Environment OK")
        print("=" * 60)
        print("\nYou can now run: python main.py synth data/train.csv")
        return 0
    else:
        print("❌ Setup incomplete")
        print("=" * 60)
        print("\nPlease fix the issues above before running the toolkit.")
        print("Make sure to:")
        print("  1. Install dependencies: pip install -r requirements.txt")
        print("  2. Check the PIP_* overrides in your .env file")
        return 1


if __name__ == "__main__":
    sys.exit(main())
