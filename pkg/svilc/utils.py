"""Utility functions."""

from __future__ import annotations

from collections.abc import Mapping
import hashlib
from typing import Any, Union

import numpy as np
import yaml

from svilc.typing import Array1D, ArrayLike1D


def wrap_angle(angles: Union[float, ArrayLike1D]) -> Union[float, Array1D]:
    """Wraps angles to the principal branch (-pi, pi].

    Exact ties at -pi are mapped to +pi.

    Args:
        angles: Angles (rad)

    Returns:
        wrapped: Wrapped angles (rad)
    """
    angles = np.asarray(angles, dtype=float)
    wrapped = np.mod(angles + np.pi, 2 * np.pi) - np.pi
    wrapped = np.where(wrapped <= -np.pi, np.pi, wrapped)
    if wrapped.ndim == 0:
        return float(wrapped)
    return wrapped


def content_hash(data: Mapping[str, Any]) -> str:
    """Returns the sha256 hex digest of a mapping in canonical YAML form."""
    text = yaml.safe_dump(dict(data), sort_keys=True, default_flow_style=False)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def is_half_integer(value: float) -> bool:
    """Returns True if value is an odd multiple of 1/2."""
    return bool(np.isclose(value % 1.0, 0.5))
