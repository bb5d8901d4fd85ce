"""Workflows."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
import itertools
from os import PathLike
from pathlib import Path
from typing import Any, Optional, Union

from loguru import logger
import numpy as np
import pandas as pd

from svilc.chi import (
    CurrentState,
    enumerate_patterns,
    node_divergence,
    solve_patterns,
)
from svilc.io import (
    export_currents,
    partial_path,
    read_checkpoint,
    write_checkpoint,
    write_matrix_table,
    write_table,
)
from svilc.lattice import BondGraph, build_lattice, LoopBasis, plaquette_loop_basis
from svilc.meanfield import (
    build_svq_texture,
    HubbardParams,
    MeanFieldSolution,
    scf_solve,
)
from svilc.observables import DipoleMatrix, transition_dipoles
from svilc.qubit import (
    build_system,
    fit_parabolas,
    qubit_coupling,
    QubitLayout,
    QubitSystem,
    solve_spectrum,
    Spectrum,
    SpectrumSweep,
    sweep_feed,
)
from svilc.settings import RunConfig


@dataclass
class Prepared:
    """Lattice and loops of a run."""

    run_config: RunConfig
    layout: QubitLayout
    graph: BondGraph
    basis: LoopBasis


@dataclass
class Outputs:
    """Files written during a run, kept under their partial names until finalized."""

    directory: Path
    config_hash: str
    paths: list[Path] = field(default_factory=list)

    def table(
        self,
        name: str,
        frame: pd.DataFrame,
        metadata: Optional[Mapping[str, Any]] = None,
        index: bool = False,
    ) -> Path:
        path = self.directory / name
        write_table(frame, path, self.config_hash, metadata, index=index)
        self.paths.append(path)
        return path

    def matrix(
        self,
        name: str,
        labels: Sequence[str],
        matrix: np.ndarray,
        metadata: Optional[Mapping[str, Any]] = None,
    ) -> Path:
        path = self.directory / name
        write_matrix_table(labels, matrix, path, self.config_hash, metadata)
        self.paths.append(path)
        return path


def prepare(run_config: RunConfig) -> Prepared:
    """Builds the layout, bond graph and loop basis of a configuration."""
    layout = run_config.layout()
    graph = build_lattice(layout.lattice)
    basis = plaquette_loop_basis(graph)
    return Prepared(run_config=run_config, layout=layout, graph=graph, basis=basis)


def run_scf(
    prepared: Prepared, checkpoint: Union[str, PathLike, None] = None
) -> MeanFieldSolution:
    """Solves the mean field, or reads it from an existing checkpoint.

    A checkpoint path that does not exist yet is written after the solve.

    Raises:
        ValueError: When the checkpoint belongs to another lattice or was
            solved with other Hubbard parameters
        ConvergenceError: When the self-consistent cycle does not converge
    """
    run_config = prepared.run_config
    graph = prepared.graph
    layout = prepared.layout
    physics = run_config.physics
    solver = run_config.solver
    params = HubbardParams(
        t=physics.t,
        U=physics.U,
        n_electrons=layout.electrons(graph),
        zeta_fixed=physics.zeta_fixed,
    )
    if checkpoint is not None and Path(checkpoint).exists():
        meanfield = read_checkpoint(checkpoint)
        if meanfield.graph.spec != graph.spec:
            raise ValueError(f"Checkpoint {checkpoint} belongs to another lattice.")
        if meanfield.params != params:
            raise ValueError(
                f"Checkpoint {checkpoint} was solved with {meanfield.params}, "
                f"the configuration asks for {params}."
            )
        logger.info(f"Read mean field from {checkpoint}.")
        return meanfield

    initial = build_svq_texture(
        graph,
        layout.vortices,
        n_electrons=params.n_electrons,
        magnitude=solver.seed_magnitude,
        noise=solver.seed_noise,
        seed=run_config.seed,
    )
    meanfield = scf_solve(
        params,
        initial,
        graph,
        tol=solver.scf_tol,
        max_iter=solver.scf_max_iter,
        mixing=solver.mixing,
        scheme=solver.scheme,  # type: ignore[arg-type]
        history=solver.anderson_history,
        basis=prepared.basis,
        raise_on_failure=True,
    )
    if checkpoint is not None:
        write_checkpoint(meanfield, checkpoint)
        logger.info(f"Wrote mean field to {checkpoint}.")
    return meanfield


def write_scf(meanfield: MeanFieldSolution, outputs: Outputs) -> Path:
    fields = meanfield.fields
    coordinates = meanfield.graph.coordinates
    frame = pd.DataFrame(
        {
            "x": coordinates[:, 0],
            "y": coordinates[:, 1],
            "density": fields.density,
            "spin_magnitude": fields.magnitude,
            "azimuth (rad)": fields.azimuth,
            "polar (rad)": fields.polar,
        }
    )
    metadata = {
        "total_energy (meV)": f"{meanfield.total_energy:.10e}",
        "converged": meanfield.converged,
        "iterations": meanfield.iterations,
        "degenerate": meanfield.degenerate,
    }
    return outputs.table("scf.csv", frame, metadata)


def run_patterns(
    prepared: Prepared, meanfield: MeanFieldSolution, outputs: Outputs, n_jobs: int
) -> list[CurrentState]:
    """Solves every winding pattern allowed by the texture at zero feed."""
    solver = prepared.run_config.solver
    patterns = enumerate_patterns(meanfield, prepared.basis)
    logger.info(f"Solving {len(patterns)} winding patterns.")
    states = solve_patterns(
        meanfield, prepared.basis, patterns, tol=solver.chi_tol, n_jobs=n_jobs
    )
    vortex_loops = np.flatnonzero(patterns[0].array) if patterns else []
    frame = pd.DataFrame(
        {
            "pattern": [state.label for state in states],
            "windings": [
                " ".join(str(state.winding.windings[k]) for k in vortex_loops)
                for state in states
            ],
            "energy (meV)": [state.total_energy for state in states],
            "stationarity (2et/hbar)": [state.stationarity for state in states],
            "regularized": [state.regularized for state in states],
        }
    )
    outputs.table(
        "patterns.csv",
        frame,
        {"vortex_loops": " ".join(str(k) for k in vortex_loops)},
    )
    return states


def run_system(
    prepared: Prepared, meanfield: MeanFieldSolution, n_jobs: int
) -> QubitSystem:
    solver = prepared.run_config.solver
    return build_system(
        prepared.layout,
        meanfield,
        basis=prepared.basis,
        tol=solver.chi_tol,
        threshold=solver.label_threshold,
        n_jobs=n_jobs,
    )


def write_states(
    system: QubitSystem, outputs: Outputs, export: bool = True
) -> list[Path]:
    """Writes the labelled zero-feed states and their bond currents."""
    graph = system.graph
    frame = pd.DataFrame(
        {
            "state": list(system.state_labels),
            "energy (meV)": [s.total_energy for s in system.states],
            "kinetic_energy (meV)": [s.energy for s in system.states],
        }
    )
    for q in range(system.layout.n_qubits):
        frame[f"column_current_{q + 1} (2et/hbar)"] = [
            label.currents[q] for label in system.labels
        ]
    frame["max_divergence (2et/hbar)"] = [
        float(np.max(np.abs(node_divergence(graph, s.bond_currents)), initial=0.0))
        for s in system.states
    ]
    paths = [outputs.table("states.csv", frame)]
    if export:
        for state in system.states:
            path = outputs.directory / f"currents_{state.label}.csv"
            export_currents(state, graph, path, outputs.config_hash)
            outputs.paths.append(path)
            paths.append(path)
    return paths


def run_spectrum(
    system: QubitSystem, run_config: RunConfig, outputs: Outputs, n_jobs: int
) -> Spectrum:
    """Solves the zero-feed spectrum and writes levels and H_B."""
    solver = run_config.solver
    spectrum = solve_spectrum(
        system,
        hamiltonian=solver.hamiltonian,  # type: ignore[arg-type]
        use_overlap=solver.use_overlap,
        tol=solver.chi_tol,
        threshold=solver.overlap_threshold,
        n_jobs=n_jobs,
    )
    basis = spectrum.basis
    energies = basis.energies
    gaps = np.diff(energies)
    frame = pd.DataFrame(
        {
            "state": list(basis.labels),
            "energy (meV)": energies,
            "hf_energy (meV)": basis.hf_energies,
            "field_energy (meV)": basis.field_energies,
            "weight": np.max(np.abs(basis.vectors), axis=0) ** 2,
        }
    )
    metadata = {"min_gap (meV)": f"{np.min(gaps, initial=np.inf):.10e}"}
    outputs.table("spectrum.csv", frame, metadata)
    coupling = spectrum.coupling
    outputs.matrix(
        "coupling.csv", coupling.labels, coupling.matrix, {"unit": "meV"}
    )
    outputs.matrix("overlap.csv", coupling.labels, coupling.overlap)
    degenerate = int(np.sum(gaps < 1e-9))
    logger.info(
        f"Spectrum: {len(energies)} levels, {degenerate} degenerate pairs, "
        f"min gap {np.min(gaps, initial=np.inf):.3e} meV."
    )
    return spectrum


def run_sweeps(
    system: QubitSystem, run_config: RunConfig, outputs: Outputs, n_jobs: int
) -> list[SpectrumSweep]:
    """Runs all configured sweeps and writes levels, crossings and fits."""
    solver = run_config.solver
    sweeps = []
    for section in run_config.sweeps:
        spec = section.spec()
        sweep = sweep_feed(
            system,
            spec,
            hamiltonian=solver.hamiltonian,  # type: ignore[arg-type]
            use_overlap=solver.use_overlap,
            tol=solver.chi_tol,
            tracking_overlap=solver.tracking_overlap,
            refine_levels=solver.refine_levels,
            n_jobs=n_jobs,
        )
        metadata = {
            "sweep": spec.name,
            "parameter": spec.parameter,
            "fixed": dict(spec.fixed),
            "ratios": dict(spec.ratios),
            "failed_points": sweep.failed,
            "relabels": sweep.relabels,
        }
        outputs.table(f"sweep_{spec.name}.csv", sweep.frame(), metadata)
        outputs.table(f"crossings_{spec.name}.csv", sweep.crossing_frame())

        try:
            fits = fit_parabolas(sweep)
        except ValueError as e:
            logger.warning(f"Sweep {spec.name!r}: no parabola fits: {e}")
        else:
            frame = pd.DataFrame(
                {
                    "state": list(fits),
                    "a (meV/(2et/hbar)^2)": [f.coefficients[0] for f in fits.values()],
                    "b (meV/(2et/hbar))": [f.coefficients[1] for f in fits.values()],
                    "c (meV)": [f.coefficients[2] for f in fits.values()],
                    "r_squared": [f.r_squared for f in fits.values()],
                }
            )
            n_qubits = system.layout.n_qubits
            couplings = {
                f"coupling_{i + 1}{j + 1} (meV/(2et/hbar)^2)": (
                    f"{qubit_coupling(fits, i, j):.10e}"
                )
                for i, j in itertools.combinations(range(n_qubits), 2)
            }
            outputs.table(f"parabolas_{spec.name}.csv", frame, couplings)
        sweeps.append(sweep)
    return sweeps


def run_dipoles(
    system: QubitSystem,
    spectrum: Spectrum,
    run_config: RunConfig,
    outputs: Outputs,
    n_jobs: int,
) -> DipoleMatrix:
    """Computes and writes dipole moments between spectrum states."""
    dipoles = transition_dipoles(
        spectrum.basis,
        spectrum.states,
        system.meanfield,
        threshold=run_config.solver.overlap_threshold,
        n_jobs=n_jobs,
    )
    metadata = {"unit": "1e-30 C m", "values": "permanent on the diagonal"}
    outputs.matrix("dipole_x.csv", dipoles.labels, dipoles.mu_x, metadata)
    outputs.matrix("dipole_y.csv", dipoles.labels, dipoles.mu_y, metadata)
    return dipoles


def write_checkpoint_output(meanfield: MeanFieldSolution, outputs: Outputs) -> Path:
    path = outputs.directory / "meanfield.npz"
    write_checkpoint(meanfield, partial_path(path))
    outputs.paths.append(path)
    return path

