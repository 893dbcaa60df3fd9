"""
Evaluation configuration and constants
"""

from pathlib import Path

# Paths
EVALS_DIR = Path(__file__).parent
RESULTS_DIR = EVALS_DIR / "results"
CONFIGS_DIR = EVALS_DIR.parent / "configs"

RESULTS_DIR.mkdir(exist_ok=True)

# Tolerances
IDENTITY_RTOL = 1e-10
ORACLE_ATOL = 1e-12
SOLVER_RTOL = 1e-10
RECOVERY_RTOL = 1e-8
EIGEN_RTOL = 1e-8
STABILITY_SLACK = 1e-10

# Small problem used by most unit tests
SMALL_MESH = (2, 2, 3)
SMALL_M = 4
SMALL_EPSILON = 1e-1

# Acceptance thresholds for the full-scale oscillatory run at eps = 5e-3
EXAMPLE2_L5_MAX_E1 = 0.04
EXAMPLE2_L5_MAX_E2 = 0.035
EXAMPLE2_L20_MAX_E = 0.025
EPS_ROBUST_MAX_E2 = 0.06
CONTRAST_E2_RTOL = 0.20
