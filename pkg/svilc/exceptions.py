"""Exceptions."""
from __future__ import annotations

from typing import Optional


class SvilcError(Exception):
    """Base class for errors raised by svilc."""


class LatticeError(SvilcError, ValueError):
    """Invalid lattice geometry or loop."""


class LayoutError(SvilcError, ValueError):
    """Invalid qubit layout."""


class FeedError(SvilcError, ValueError):
    """Invalid feed specification."""


class PatternError(SvilcError, ValueError):
    """Winding pattern violates the parity or vortex constraints."""


class ConfigError(SvilcError, ValueError):
    """Invalid run configuration.

    Args:
        key: Dotted path of the offending key
        message: Description of the problem
        line: Line in the YAML file, when known
    """

    def __init__(self, key: str, message: str, line: Optional[int] = None) -> None:
        self.key = key
        self.line = line
        location = f" (line {line})" if line is not None else ""
        super().__init__(f"{key}{location}: {message}")


class ConvergenceError(SvilcError, RuntimeError):
    """Solver did not converge."""


class ChargeConservationError(SvilcError, RuntimeError):
    """Electron count drifted during the self-consistent cycle."""


class InfeasibleFeedError(ConvergenceError):
    """Feed current exceeds what the lattice can carry."""
