"""Spin-vortex-induced loop-current states on finite square lattices."""

from importlib import metadata

# Version of the svilc package
try:
    __version__ = metadata.version("svilc")
except metadata.PackageNotFoundError:
    __version__ = "0.0.0"
