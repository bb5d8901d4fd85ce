"""Input and output."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from os import PathLike
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import pandas as pd

from svilc import __version__, config
from svilc.chi import CurrentState
from svilc.data import CURRENT_ARROW_SCALE
from svilc.lattice import BondGraph, build_lattice, LatticeSpec
from svilc.meanfield import HubbardParams, MeanFieldSolution, OrbitalSet, SpinField
from svilc.typing import Array2D

PARTIAL_SUFFIX = ".partial"


def partial_path(path: Union[str, PathLike]) -> Path:
    """Returns the path a file is written to before the run succeeds."""
    path = Path(path)
    return path.with_name(path.name + PARTIAL_SUFFIX)


def finalize(paths: Iterable[Union[str, PathLike]]) -> list[Path]:
    """Renames partial files to their final names.

    Args:
        paths: Final paths

    Returns:
        finalized: Paths that were renamed
    """
    finalized = []
    for path in paths:
        path = Path(path)
        partial = partial_path(path)
        if partial.exists():
            partial.replace(path)
            finalized.append(path)
    return finalized


def _header(
    config_hash: Optional[str], metadata: Optional[Mapping[str, Any]]
) -> list[str]:
    lines = [f"# svilc {__version__}"]
    if config_hash is not None:
        lines.append(f"# config_hash: {config_hash}")
    for key, value in (metadata or {}).items():
        lines.append(f"# {key}: {value}")
    return lines


def write_table(
    frame: pd.DataFrame,
    path: Union[str, PathLike],
    config_hash: Optional[str] = None,
    metadata: Optional[Mapping[str, Any]] = None,
    index: bool = False,
) -> Path:
    """Writes a CSV table preceded by '#' header lines.

    The table goes to the partial path; finalize renames it.

    Args:
        frame: Table
        path: Final path
        config_hash: Hash of the run configuration
        metadata: Extra header entries
        index: Whether to write the index column

    Returns:
        written: Partial path written
    """
    written = partial_path(path)
    written.parent.mkdir(parents=True, exist_ok=True)
    with open(written, "w", newline="") as f:
        f.write("\n".join(_header(config_hash, metadata)) + "\n")
        frame.to_csv(
            f, index=index, float_format=config.FLOAT_FORMAT, lineterminator="\n"
        )
    return written


def read_table(
    path: Union[str, PathLike], index_col: Optional[int] = None
) -> tuple[pd.DataFrame, dict[str, str]]:
    """Reads a table written by write_table.

    Returns:
        frame: Table
        metadata: Header entries, including 'version'
    """
    metadata = {}
    with open(path) as f:
        for line in f:
            if not line.startswith("#"):
                break
            text = line[1:].strip()
            if text.startswith("svilc "):
                metadata["version"] = text.split(maxsplit=1)[1]
            elif ":" in text:
                key, value = text.split(":", 1)
                metadata[key.strip()] = value.strip()
    frame = pd.read_csv(path, comment="#", index_col=index_col)
    return frame, metadata


def current_frame(currents: Sequence[float], graph: BondGraph) -> pd.DataFrame:
    """Returns bond currents as a table x1 y1 x2 y2 current, flowing 1 -> 2."""
    tail = graph.coordinates[graph.bonds[:, 0]]
    head = graph.coordinates[graph.bonds[:, 1]]
    return pd.DataFrame(
        {
            "x1": tail[:, 0],
            "y1": tail[:, 1],
            "x2": head[:, 0],
            "y2": head[:, 1],
            "current (2et/hbar)": np.asarray(currents, dtype=float),
        }
    )


def export_currents(
    state: CurrentState,
    graph: BondGraph,
    path: Union[str, PathLike],
    config_hash: Optional[str] = None,
    metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    """Writes the bond currents of a state for quiver plotting."""
    header = {
        "state": state.label,
        "arrow_scale": f"{CURRENT_ARROW_SCALE:.6f} (2et/hbar) per lattice distance",
        "feed_total (2et/hbar)": f"{state.feed.total:.6f}",
    }
    header.update(metadata or {})
    return write_table(
        current_frame(state.bond_currents, graph), path, config_hash, header
    )


def matrix_frame(labels: Sequence[str], matrix: Array2D) -> pd.DataFrame:
    """Returns a labelled square table.

    Complex matrices with a non-negligible imaginary part are given as moduli.
    """
    matrix = np.asarray(matrix)
    if np.iscomplexobj(matrix):
        if np.max(np.abs(matrix.imag), initial=0.0) > 1e-12 * max(
            1.0, float(np.max(np.abs(matrix), initial=0.0))
        ):
            matrix = np.abs(matrix)
        else:
            matrix = matrix.real
    return pd.DataFrame(matrix, index=list(labels), columns=list(labels))


def write_matrix_table(
    labels: Sequence[str],
    matrix: Array2D,
    path: Union[str, PathLike],
    config_hash: Optional[str] = None,
    metadata: Optional[Mapping[str, Any]] = None,
) -> Path:
    frame = matrix_frame(labels, matrix)
    frame.index.name = "state"
    return write_table(frame, path, config_hash, metadata, index=True)


def write_checkpoint(meanfield: MeanFieldSolution, path: Union[str, PathLike]) -> Path:
    """Writes a mean-field solution to an npz file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    spec = meanfield.graph.spec
    params = meanfield.params
    fields = meanfield.fields
    zeta = np.nan if params.zeta_fixed is None else params.zeta_fixed
    with open(path, "wb") as f:
        np.savez(
            f,
            format_version=config.CHECKPOINT_FORMAT_VERSION,
            params=np.array([params.t, params.U, params.n_electrons, zeta]),
            lattice=np.array([spec.nx, spec.ny, spec.lattice_constant]),
            barrier_sites=np.array(sorted(spec.barrier_sites), dtype=int).reshape(
                -1, 2
            ),
            hole_sites=np.array(sorted(spec.hole_sites), dtype=float).reshape(-1, 2),
            density=fields.density,
            magnitude=fields.magnitude,
            azimuth=fields.azimuth,
            polar=fields.polar,
            coefficients=meanfield.orbitals.coefficients,
            orbital_energies=meanfield.orbitals.energies,
            n_occupied=meanfield.orbitals.n_occupied,
            scalars=np.array(
                [meanfield.total_energy, meanfield.residual, meanfield.iterations]
            ),
            flags=np.array([meanfield.converged, meanfield.degenerate]),
            bond_signs=meanfield.bond_signs,
            energy_history=np.array(meanfield.energy_history),
        )
    return path


def read_checkpoint(path: Union[str, PathLike]) -> MeanFieldSolution:
    """Reads a mean-field solution written by write_checkpoint.

    Raises:
        ValueError: When the format version is not supported or the stored
            arrays do not fit the lattice
    """
    with np.load(path) as data:
        version = int(data["format_version"])
        if version != config.CHECKPOINT_FORMAT_VERSION:
            raise ValueError(
                f"Checkpoint format version {version} not supported, "
                f"expected {config.CHECKPOINT_FORMAT_VERSION}."
            )
        nx, ny, lattice_constant = data["lattice"]
        spec = LatticeSpec(
            nx=int(nx),
            ny=int(ny),
            lattice_constant=float(lattice_constant),
            barrier_sites=frozenset(map(tuple, data["barrier_sites"].tolist())),
            hole_sites=frozenset(map(tuple, data["hole_sites"].tolist())),
        )
        graph = build_lattice(spec)
        t, U, n_electrons, zeta = data["params"]
        params = HubbardParams(
            t=float(t),
            U=float(U),
            n_electrons=int(n_electrons),
            zeta_fixed=None if np.isnan(zeta) else float(zeta),
        )
        fields = SpinField(
            density=data["density"],
            magnitude=data["magnitude"],
            azimuth=data["azimuth"],
            polar=data["polar"],
        )
        if fields.n_sites != graph.n_sites or len(data["bond_signs"]) != graph.n_bonds:
            raise ValueError(f"Checkpoint {path} does not match its lattice.")
        orbitals = OrbitalSet(
            coefficients=data["coefficients"],
            energies=data["orbital_energies"],
            n_occupied=int(data["n_occupied"]),
        )
        total_energy, residual, iterations = data["scalars"]
        converged, degenerate = data["flags"]
        return MeanFieldSolution(
            params=params,
            graph=graph,
            fields=fields,
            orbitals=orbitals,
            total_energy=float(total_energy),
            residual=float(residual),
            converged=bool(converged),
            iterations=int(iterations),
            degenerate=bool(degenerate),
            bond_signs=data["bond_signs"],
            energy_history=tuple(data["energy_history"].tolist()),
        )
