"""Physical constants and material parameters."""
from __future__ import annotations

from typing import Dict, Tuple

import scipy.constants

ELEMENTARY_CHARGE: float = scipy.constants.e
HBAR: float = scipy.constants.hbar
MEV_TO_JOULE: float = 1e-3 * scipy.constants.e
NM_TO_METER: float = scipy.constants.nano

# Dipole moments are reported in units of 1e-30 C m
DIPOLE_UNIT: float = 1e-30

# CuO2 plane
LATTICE_CONSTANT_NM: float = 0.4
TRANSFER_INTEGRAL_MEV: float = 130.0
U_OVER_T: float = 8.0

# Field polynomials (T) with x and y in lattice units: c_xx, c_x, c_yy, c_y
FIELD_THREE_QUBITS: Tuple[float, float, float, float] = (4.005, 540.0, 1.575, 135.0)
FIELD_SINGLE_QUBIT: Tuple[float, float, float, float] = (0.178, 6.0, 0.07, 6.0)

# Arrow length per lattice distance in current plots (2et/hbar)
CURRENT_ARROW_SCALE: float = 1 / 3

# State labels of three dipole-current qubits in table order
THREE_QUBIT_LABELS: Tuple[str, ...] = (
    "DDU",
    "UDU",
    "DUU",
    "UUU",
    "DDD",
    "UDD",
    "DUD",
    "UUD",
)

UNITS: Dict[str, str] = {
    "energy": "meV",
    "current": "2et/hbar",
    "dipole": "1e-30 C m",
    "field": "T",
    "length": "a",
}


def current_unit(t: float) -> float:
    """Returns the current unit 2et/hbar (A) for a transfer integral t (meV)."""
    return 2 * ELEMENTARY_CHARGE * t * MEV_TO_JOULE / HBAR
