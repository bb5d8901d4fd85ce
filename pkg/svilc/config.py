"""Config module."""

from __future__ import annotations

# Self-consistent field
SCF_TOL: float = 1e-8
SCF_MAX_ITER: int = 1000
SCF_MIXING: float = 0.3
ANDERSON_HISTORY: int = 5
CHARGE_TOL: float = 1e-8
DEGENERACY_TOL: float = 1e-8
SEED_MAGNITUDE: float = 0.4

# Phase-field solver
CHI_GTOL: float = 1e-10
CHI_MAX_ITER: int = 200
KKT_REGULARIZATION: float = 1e-12
NEWTON_POLISH_STEPS: int = 5
FLOW_CAPACITY_SCALE: float = 1e8
FLOW_CAPACITY_LIMIT: int = 2**30

# Observables
OVERLAP_THRESHOLD: float = 1e-14
ORTHONORMALITY_TOL: float = 1e-8
USE_OVERLAP: bool = True

# Qubit labels and sweeps
LABEL_THRESHOLD: float = 1e-8
TRACKING_OVERLAP: float = 0.5
CROSSING_REFINE_LEVELS: int = 3

# Parallel workers for joblib
N_JOBS: int = 1

# Output
FLOAT_FORMAT: str = "%.10e"
CHECKPOINT_FORMAT_VERSION: int = 1
