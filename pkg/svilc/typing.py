"""Type aliases for arrays and lattice coordinates."""
from __future__ import annotations

from typing import Any, Tuple

import numpy as np

try:
    from numpy.typing import ArrayLike
except ImportError:
    ArrayLike = Any

ArrayLike1D = ArrayLike
ArrayLike2D = ArrayLike

ArrayND = np.ndarray
Array1D = ArrayND
Array2D = ArrayND

# Lattice coordinates are 1-based (x, y); vortex centers may sit at half-integers
Site = Tuple[int, int]
Point = Tuple[float, float]
