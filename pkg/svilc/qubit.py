"""Dipole-current qubit layouts, state labels and feed-current sweeps."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, replace
import itertools
import math
from typing import Literal, Optional, Union

from joblib import delayed, Parallel
from loguru import logger
import numpy as np
import pandas as pd
from scipy.optimize import linear_sum_assignment

from svilc import config
from svilc.chi import (
    combine_feeds,
    CurrentState,
    FeedSpec,
    solve_patterns,
    WindingPattern,
)
from svilc.data import FIELD_SINGLE_QUBIT, FIELD_THREE_QUBITS
from svilc.exceptions import ConvergenceError, LayoutError
from svilc.lattice import (
    barrier_columns,
    BondGraph,
    LatticeSpec,
    LoopBasis,
    plaquette_loop_basis,
)
from svilc.meanfield import MeanFieldSolution
from svilc.observables import (
    coupling_matrix,
    CouplingMatrix,
    diagonalize_basis,
    FieldPolynomial,
    OrthogonalBasis,
)
from svilc.typing import Array1D, Array2D, Point, Site
from svilc.utils import is_half_integer

DCQ_BARRIER_COLUMNS: tuple[int, ...] = (30, 32, 82, 84)
DCQ_SVQ_CENTERS: tuple[Point, ...] = ((4.0, 4.0), (57.0, 8.0), (110.0, 12.0))
DCQ_NY: int = 15

# Sources then drains.
DCQ_FEEDS: dict[str, tuple[tuple[Site, ...], tuple[Site, ...]]] = {
    "J1": (((2, 1), (6, 15)), ((6, 1), (2, 15))),
    "J2": (((55, 1), (59, 15)), ((59, 1), (55, 15))),
    "J3": (((108, 1), (112, 15)), ((112, 1), (108, 15))),
    "J4": (((7, 1), (31, 15)), ((31, 1), (37, 15))),
    "J5": (((83, 1), (105, 15)), ((71, 1), (83, 15))),
}


def svq_vortices(center: Point, half_spacing: float) -> list[tuple[Point, int]]:
    """Returns the four vortices of a spin-vortex quartet.

    Vortices of winding +1 sit at the upper left and lower right, -1 at the
    upper right and lower left.
    """
    cx, cy = center
    d = half_spacing
    return [
        ((cx - d, cy + d), 1),
        ((cx + d, cy + d), -1),
        ((cx - d, cy - d), -1),
        ((cx + d, cy - d), 1),
    ]


@dataclass(frozen=True, eq=False)
class QubitLayout:
    """Lattice, spin-vortex quartets, feeds and field of a qubit device.

    Args:
        name: Layout name
        lattice: Lattice specification
        svq_centers: Centers of the spin-vortex quartets, one per qubit
        half_spacing: Distance of each vortex from its quartet center along x and y (a)
        field: Magnetic field polynomial
        feeds: Named unit feeds
        n_electrons: Number of electrons, one hole per vortex if None
    """

    name: str
    lattice: LatticeSpec
    svq_centers: tuple[Point, ...]
    half_spacing: float
    field: FieldPolynomial
    feeds: Mapping[str, FeedSpec] = field(default_factory=dict)
    n_electrons: Optional[int] = None

    @property
    def n_qubits(self) -> int:
        return len(self.svq_centers)

    @property
    def vortices(self) -> list[tuple[Point, int]]:
        vortices = []
        for center in self.svq_centers:
            vortices.extend(svq_vortices(center, self.half_spacing))
        return vortices

    def electrons(self, graph: BondGraph) -> int:
        if self.n_electrons is not None:
            return self.n_electrons
        return graph.n_sites - len(self.vortices)


def _vortex_points(
    centers: Sequence[Point], half_spacing: float
) -> frozenset[Point]:
    return frozenset(
        point for center in centers for point, _ in svq_vortices(center, half_spacing)
    )


def three_dcq_layout(ny: int = DCQ_NY) -> QubitLayout:
    """Returns the three-qubit layout on the 112 x ny plane with barrier atoms.

    Barrier columns keep Cu at the bottom and top rows so the plane stays
    connected. Feed sites given for row 15 are moved to row ny.
    """
    if ny != DCQ_NY:
        logger.warning(
            f"Layout has {ny} rows; feed sites on row {DCQ_NY} are moved to row {ny}."
        )

    def row(site: Site) -> Site:
        return (site[0], ny) if site[1] == DCQ_NY else site

    half_spacing = 1.5
    lattice = LatticeSpec(
        nx=112,
        ny=ny,
        barrier_sites=barrier_columns(DCQ_BARRIER_COLUMNS, range(2, ny)),
        hole_sites=_vortex_points(DCQ_SVQ_CENTERS, half_spacing),
    )
    feeds = {
        name: FeedSpec.uniform([row(s) for s in sources], [row(s) for s in drains])
        for name, (sources, drains) in DCQ_FEEDS.items()
    }
    return QubitLayout(
        name="paper-3dcq",
        lattice=lattice,
        svq_centers=DCQ_SVQ_CENTERS,
        half_spacing=half_spacing,
        feeds=feeds,
        field=FieldPolynomial(*FIELD_THREE_QUBITS),
    )


def desk_layout() -> QubitLayout:
    """Returns a single quartet on an 8 x 8 plane without barriers."""
    center = (4.5, 4.5)
    half_spacing = 1.0
    lattice = LatticeSpec(
        nx=8, ny=8, hole_sites=_vortex_points([center], half_spacing)
    )
    feeds = {"J1": FeedSpec.uniform([(3, 1), (6, 8)], [(6, 1), (3, 8)])}
    return QubitLayout(
        name="desk-1svq",
        lattice=lattice,
        svq_centers=(center,),
        half_spacing=half_spacing,
        feeds=feeds,
        field=FieldPolynomial(*FIELD_SINGLE_QUBIT),
        n_electrons=60,
    )


PRESETS = {"paper-3dcq": three_dcq_layout, "desk-1svq": desk_layout}


def _ring_sites(point: Point) -> list[Site]:
    x, y = point
    if is_half_integer(x) and is_half_integer(y):
        x0, y0 = math.floor(x), math.floor(y)
        return [(x0, y0), (x0 + 1, y0), (x0 + 1, y0 + 1), (x0, y0 + 1)]
    xi, yi = int(round(x)), int(round(y))
    return [
        (xi + dx, yi + dy)
        for dx in (-1, 0, 1)
        for dy in (-1, 0, 1)
        if (dx, dy) != (0, 0)
    ]


def validate_layout(layout: QubitLayout) -> QubitLayout:
    """Checks vortex rings and feed sites against the lattice.

    Raises:
        LayoutError: When a vortex ring or feed site is outside the lattice or
            on a barrier, or a feed lists a site twice
    """
    spec = layout.lattice
    if layout.n_qubits == 0:
        raise LayoutError(f"Layout {layout.name!r} has no spin-vortex quartets.")
    if layout.half_spacing <= 0:
        raise LayoutError("half_spacing must be positive.")

    for point, _ in layout.vortices:
        for site in _ring_sites(point):
            if not spec.contains(site):
                raise LayoutError(
                    f"Ring site {site} of vortex {point} is outside the lattice."
                )
            if site in spec.barrier_sites:
                raise LayoutError(f"Ring site {site} of vortex {point} is a barrier.")

    for name, feed in layout.feeds.items():
        sites = feed.sites
        duplicates = sorted({s for s in sites if sites.count(s) > 1})
        if duplicates:
            raise LayoutError(f"Feed {name!r} lists sites {duplicates} more than once.")
        for site in sites:
            if not spec.contains(site):
                raise LayoutError(f"Feed {name!r} site {site} is outside the lattice.")
            if site in spec.barrier_sites:
                raise LayoutError(f"Feed {name!r} site {site} is a barrier site.")

    return layout


def assemble_layout(
    source: Union[str, QubitLayout], ny: Optional[int] = None
) -> QubitLayout:
    """Returns a validated layout from a preset name or a custom layout.

    Args:
        source: Preset name ('paper-3dcq' or 'desk-1svq') or layout
        ny: Number of rows of the paper-3dcq plane

    Returns:
        layout: Validated layout

    Raises:
        LayoutError: When the preset is unknown or the layout is invalid
    """
    if isinstance(source, QubitLayout):
        return validate_layout(source)
    if source not in PRESETS:
        raise LayoutError(
            f"Preset {source!r} not supported. Choose from {sorted(PRESETS)}."
        )
    if source == "paper-3dcq":
        layout = three_dcq_layout(DCQ_NY if ny is None else ny)
    else:
        layout = desk_layout()
    return validate_layout(layout)


def dcq_patterns(layout: QubitLayout, basis: LoopBasis) -> list[WindingPattern]:
    """Returns the dipole-current patterns, one per choice of qubit states.

    In each quartet the two left vortices carry winding s and the two right
    vortices -s, so the loop currents add up in the central column. Labels are
    sign strings until states are labelled by their currents.
    """
    patterns = []
    vortex_loops = [
        [
            (basis.loop_at(point), point[0] < cx)
            for point, _ in svq_vortices((cx, cy), layout.half_spacing)
        ]
        for cx, cy in layout.svq_centers
    ]
    for signs in itertools.product((1, -1), repeat=layout.n_qubits):
        windings = np.zeros(basis.n_loops, dtype=int)
        for sign, loops in zip(signs, vortex_loops):
            for loop, left in loops:
                windings[loop] = sign if left else -sign
        label = "".join("+" if s > 0 else "-" for s in signs)
        patterns.append(WindingPattern(tuple(windings.tolist()), label=label))
    return patterns


@dataclass(frozen=True)
class StateLabel:
    """U/D label of a state with the column currents it is based on.

    Args:
        label: One character per qubit, '?' when ambiguous
        currents: Mean vertical current in each central column (2et/hbar)
    """

    label: str
    currents: tuple[float, ...]

    @property
    def ambiguous(self) -> bool:
        return "?" in self.label


def column_bonds(graph: BondGraph, center: Point, half_spacing: float) -> Array1D:
    """Returns the vertical bonds of the central column of a quartet."""
    cx, cy = center
    tail = graph.coordinates[graph.bonds[:, 0]]
    head = graph.coordinates[graph.bonds[:, 1]]
    mask = (
        graph.vertical
        & (tail[:, 0] > cx - half_spacing)
        & (tail[:, 0] < cx + half_spacing)
        & (tail[:, 1] >= math.ceil(cy - half_spacing))
        & (head[:, 1] <= math.floor(cy + half_spacing))
    )
    bonds: Array1D = np.flatnonzero(mask)
    return bonds


def label_states(
    states: Sequence[CurrentState],
    layout: QubitLayout,
    graph: BondGraph,
    threshold: float = config.LABEL_THRESHOLD,
) -> list[StateLabel]:
    """Labels each qubit U or D by the net vertical current in its central column.

    Args:
        states: Solved states
        layout: Qubit layout
        graph: Bond graph of the states
        threshold: Current below which the label is ambiguous (2et/hbar)

    Returns:
        labels: One label per state
    """
    columns = [
        column_bonds(graph, center, layout.half_spacing)
        for center in layout.svq_centers
    ]
    labels = []
    for state in states:
        currents = tuple(
            float(np.mean(state.bond_currents[bonds])) if len(bonds) > 0 else 0.0
            for bonds in columns
        )
        label = "".join(
            "U" if c > threshold else "D" if c < -threshold else "?" for c in currents
        )
        if "?" in label:
            logger.warning(
                f"Pattern {state.label!r} has an ambiguous label {label!r}: "
                f"column currents {currents}."
            )
        labels.append(StateLabel(label=label, currents=currents))
    return labels


def label_sort_key(label: str) -> tuple[int, ...]:
    """Returns the table position of a label: DDU, UDU, DUU, UUU, DDD, ..."""
    key = []
    for position in reversed(range(len(label))):
        first = "U" if position == len(label) - 1 else "D"
        char = label[position]
        key.append(0 if char == first else 2 if char == "?" else 1)
    return tuple(key)


@dataclass(frozen=True, eq=False)
class QubitSystem:
    """Mean field and zero-feed dipole-current states of a layout.

    Args:
        layout: Qubit layout
        meanfield: Mean-field solution
        basis: Loop basis
        patterns: Winding patterns labelled by their qubit states, in table order
        states: Zero-feed states in pattern order
        labels: Labels with column currents in pattern order
    """

    layout: QubitLayout
    meanfield: MeanFieldSolution
    basis: LoopBasis
    patterns: tuple[WindingPattern, ...]
    states: tuple[CurrentState, ...]
    labels: tuple[StateLabel, ...]

    @property
    def graph(self) -> BondGraph:
        return self.meanfield.graph

    @property
    def state_labels(self) -> tuple[str, ...]:
        return tuple(pattern.label for pattern in self.patterns)


def build_system(
    layout: QubitLayout,
    meanfield: MeanFieldSolution,
    basis: Optional[LoopBasis] = None,
    tol: float = config.CHI_GTOL,
    threshold: float = config.LABEL_THRESHOLD,
    n_jobs: int = config.N_JOBS,
) -> QubitSystem:
    """Solves the dipole-current patterns at zero feed and labels them."""
    graph = meanfield.graph
    if basis is None:
        basis = plaquette_loop_basis(graph)
    patterns = dcq_patterns(layout, basis)
    states = solve_patterns(meanfield, basis, patterns, tol=tol, n_jobs=n_jobs)
    labels = label_states(states, layout, graph, threshold=threshold)

    names = [label.label for label in labels]
    if len(set(names)) < len(names):
        logger.warning(f"Labels {names} are not unique.")
    order = sorted(range(len(states)), key=lambda k: label_sort_key(names[k]))
    patterns = [
        WindingPattern(patterns[k].windings, label=names[k]) for k in order
    ]
    states = [
        replace(states[k], winding=pattern) for k, pattern in zip(order, patterns)
    ]
    logger.info(f"Qubit states in table order: {', '.join(p.label for p in patterns)}.")

    return QubitSystem(
        layout=layout,
        meanfield=meanfield,
        basis=basis,
        patterns=tuple(patterns),
        states=tuple(states),
        labels=tuple(labels[k] for k in order),
    )


@dataclass(frozen=True, eq=False)
class Spectrum:
    """States, H_B couplings and orthogonal basis at one feed setting."""

    feed: FeedSpec
    states: tuple[CurrentState, ...]
    coupling: CouplingMatrix
    basis: OrthogonalBasis

    @property
    def energies(self) -> Array1D:
        return self.basis.energies

    @property
    def labels(self) -> tuple[str, ...]:
        return self.basis.labels


def solve_spectrum(
    system: QubitSystem,
    feed: Optional[FeedSpec] = None,
    hamiltonian: Literal["field", "total"] = "field",
    use_overlap: bool = config.USE_OVERLAP,
    tol: float = config.CHI_GTOL,
    threshold: float = config.OVERLAP_THRESHOLD,
    n_jobs: int = config.N_JOBS,
) -> Spectrum:
    """Solves all qubit states with a feed and diagonalizes HF + H_B.

    Args:
        system: Qubit system
        feed: External feed, none by default
        hamiltonian: Operator whose eigenstates form the basis
        use_overlap: Use the determinant overlaps as metric
        tol: Phase-field tolerance (2et/hbar)
        threshold: Overlap threshold for determinant elements
        n_jobs: Parallel workers

    Returns:
        spectrum: States and levels

    Raises:
        ConvergenceError: When a phase field does not converge
    """
    if feed is None or not feed.sources:
        states = list(system.states)
        feed = FeedSpec()
    else:
        states = solve_patterns(
            system.meanfield, system.basis, system.patterns, feed, tol, n_jobs
        )
    coupling = coupling_matrix(
        states, system.meanfield, system.layout.field, threshold, n_jobs
    )
    basis = diagonalize_basis(
        coupling,
        [state.total_energy for state in states],
        use_overlap=use_overlap,
        hamiltonian=hamiltonian,
    )
    return Spectrum(feed=feed, states=tuple(states), coupling=coupling, basis=basis)


@dataclass(frozen=True)
class SweepSpec:
    """One-parameter feed sweep.

    Without ratios the named feed takes the grid values. With ratios every
    listed feed takes grid value times its ratio. Fixed feeds keep their values.

    Args:
        name: Sweep name
        parameter: Swept feed, or a name for the ratio-locked parameter
        grid: Parameter values (2et/hbar)
        fixed: Feed values held fixed (2et/hbar)
        ratios: Feed ratios for a ratio-locked sweep
    """

    name: str
    parameter: str
    grid: tuple[float, ...]
    fixed: Mapping[str, float] = field(default_factory=dict)
    ratios: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))

    def values_at(self, value: float) -> dict[str, float]:
        values = dict(self.fixed)
        if self.ratios:
            for name, ratio in self.ratios.items():
                values[name] = values.get(name, 0.0) + ratio * value
        else:
            values[self.parameter] = values.get(self.parameter, 0.0) + value
        return values

    @property
    def feed_names(self) -> set[str]:
        names = set(self.fixed) | set(self.ratios)
        if not self.ratios:
            names.add(self.parameter)
        return names


@dataclass(frozen=True)
class Crossing:
    """Sign change of the energy difference of two tracked levels."""

    labels: tuple[str, str]
    value: float
    index: int
    refined: bool = False


@dataclass(frozen=True, eq=False)
class SpectrumSweep:
    """Label-tracked levels along a sweep.

    Args:
        spec: Sweep specification
        labels: Tracked labels
        energies: Levels per grid point and label, NaN where the point failed (meV)
        vectors: Basis vectors per point, columns in tracked label order
        relabels: (point index, label) where the best overlap was below threshold
        failed: Indices of failed points
        crossings: Detected crossings
    """

    spec: SweepSpec
    labels: tuple[str, ...]
    energies: Array2D
    vectors: list[Optional[Array2D]]
    relabels: list[tuple[int, str]] = field(default_factory=list)
    failed: list[int] = field(default_factory=list)
    crossings: list[Crossing] = field(default_factory=list)

    @property
    def grid(self) -> Array1D:
        return np.array(self.spec.grid)

    def frame(self) -> pd.DataFrame:
        data = {f"{self.spec.parameter} (2et/hbar)": self.grid}
        for k, label in enumerate(self.labels):
            data[f"E_{label} (meV)"] = self.energies[:, k]
        return pd.DataFrame(data)

    def crossing_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "state_a": [c.labels[0] for c in self.crossings],
                "state_b": [c.labels[1] for c in self.crossings],
                f"{self.spec.parameter} (2et/hbar)": [c.value for c in self.crossings],
                "grid_index": [c.index for c in self.crossings],
                "refined": [c.refined for c in self.crossings],
            }
        )


def _sweep_point(
    system: QubitSystem,
    feed: FeedSpec,
    hamiltonian: Literal["field", "total"],
    use_overlap: bool,
    tol: float,
) -> Optional[tuple[Array1D, Array2D]]:
    try:
        spectrum = solve_spectrum(
            system, feed, hamiltonian=hamiltonian, use_overlap=use_overlap, tol=tol
        )
    except ConvergenceError as e:
        logger.warning(f"Sweep point with feed total {feed.total:.4f} failed: {e}")
        return None
    return spectrum.energies, spectrum.basis.vectors


def _match(reference: Array2D, vectors: Array2D) -> tuple[Array1D, Array1D]:
    """Returns the column of vectors matching each reference column and its overlap."""
    overlaps = np.abs(reference.conj().T @ vectors)
    rows, cols = linear_sum_assignment(-overlaps)
    permutation = np.empty(len(rows), dtype=int)
    permutation[rows] = cols
    return permutation, overlaps[rows, cols][np.argsort(rows)]


def sweep_feed(
    system: QubitSystem,
    spec: SweepSpec,
    hamiltonian: Literal["field", "total"] = "field",
    use_overlap: bool = config.USE_OVERLAP,
    tol: float = config.CHI_GTOL,
    tracking_overlap: float = config.TRACKING_OVERLAP,
    refine_levels: int = config.CROSSING_REFINE_LEVELS,
    n_jobs: int = config.N_JOBS,
) -> SpectrumSweep:
    """Sweeps a feed and tracks labelled levels by eigenvector overlap.

    Grid points run in parallel; failed points are marked and the sweep
    continues.

    Args:
        system: Qubit system
        spec: Sweep specification
        hamiltonian: Operator whose eigenstates form the basis
        use_overlap: Use the determinant overlaps as metric
        tol: Phase-field tolerance (2et/hbar)
        tracking_overlap: Overlap below which a relabel event is recorded
        refine_levels: Bisection levels for each crossing, 0 to skip
        n_jobs: Parallel workers

    Returns:
        sweep: Tracked levels with crossings
    """
    feeds = system.layout.feeds
    points = [combine_feeds(feeds, spec.values_at(value)) for value in spec.grid]
    results = Parallel(n_jobs=n_jobs)(
        delayed(_sweep_point)(system, feed, hamiltonian, use_overlap, tol)
        for feed in points
    )

    labels = system.state_labels
    n = len(labels)
    energies = np.full((len(points), n), np.nan)
    vectors: list[Optional[Array2D]] = []
    relabels: list[tuple[int, str]] = []
    failed: list[int] = []
    # Start from the pattern basis so tracked labels are the pattern labels
    reference: Array2D = np.eye(n, dtype=complex)
    for index, result in enumerate(results):
        if result is None:
            failed.append(index)
            vectors.append(None)
            continue
        values, current = result
        permutation, overlaps = _match(reference, current)
        for k in np.flatnonzero(overlaps < tracking_overlap):
            relabels.append((index, labels[k]))
            logger.info(
                f"Level {labels[k]!r} at {spec.parameter}={spec.grid[index]:.6f}: "
                f"overlap {overlaps[k]:.3f} with the previous point."
            )
        energies[index] = values[permutation]
        reference = current[:, permutation]
        vectors.append(reference)

    if failed:
        logger.warning(
            f"Sweep {spec.name!r}: {len(failed)} of {len(points)} points failed."
        )

    sweep = SpectrumSweep(
        spec=spec,
        labels=labels,
        energies=energies,
        vectors=vectors,
        relabels=relabels,
        failed=failed,
    )
    crossings = detect_crossings(sweep)
    if refine_levels > 0:
        crossings = refine_crossings(
            system,
            sweep,
            crossings,
            levels=refine_levels,
            hamiltonian=hamiltonian,
            use_overlap=use_overlap,
            tol=tol,
        )
    sweep.crossings.extend(crossings)
    logger.info(f"Sweep {spec.name!r}: {len(crossings)} crossings.")

    return sweep


def find_crossings(
    grid: Sequence[float], energies: Array2D, labels: Sequence[str]
) -> list[Crossing]:
    """Returns sign changes of all pairwise level differences.

    The crossing value is linearly interpolated between grid points. Points
    with missing energies are skipped.
    """
    grid = np.asarray(grid, dtype=float)
    crossings = []
    for a, b in itertools.combinations(range(len(labels)), 2):
        difference = energies[:, a] - energies[:, b]
        valid = np.flatnonzero(np.isfinite(difference))
        for i, j in zip(valid[:-1], valid[1:]):
            d_i, d_j = difference[i], difference[j]
            if d_i * d_j < 0:
                value = grid[i] - d_i * (grid[j] - grid[i]) / (d_j - d_i)
            elif d_j == 0 and d_i != 0:
                following = [k for k in valid if k > j and difference[k] != 0]
                if not following or d_i * difference[following[0]] > 0:
                    continue
                value = grid[j]
            else:
                continue
            crossings.append(Crossing((labels[a], labels[b]), float(value), int(i)))
    crossings.sort(key=lambda c: (c.value, c.labels))
    return crossings


def detect_crossings(sweep: SpectrumSweep) -> list[Crossing]:
    """Returns the crossings of the tracked levels of a sweep."""
    return find_crossings(sweep.spec.grid, sweep.energies, sweep.labels)


def refine_crossings(
    system: QubitSystem,
    sweep: SpectrumSweep,
    crossings: Sequence[Crossing],
    levels: int = config.CROSSING_REFINE_LEVELS,
    hamiltonian: Literal["field", "total"] = "field",
    use_overlap: bool = config.USE_OVERLAP,
    tol: float = config.CHI_GTOL,
) -> list[Crossing]:
    """Refines crossings by bisection between their bracketing grid points.

    Levels at the midpoints are tracked against the vectors at the lower end of
    the bracket. A crossing whose midpoint fails keeps its last bracket.
    """
    labels = list(sweep.labels)
    grid = sweep.spec.grid
    refined = []
    for crossing in crossings:
        a, b = labels.index(crossing.labels[0]), labels.index(crossing.labels[1])
        lo = crossing.index
        hi = next(
            (
                k
                for k in range(lo + 1, len(grid))
                if np.all(np.isfinite(sweep.energies[k]))
            ),
            None,
        )
        if hi is None:
            logger.warning(
                f"Crossing {crossing.labels} at {crossing.value:.6f} has no later "
                "solved point. Kept unrefined."
            )
            refined.append(crossing)
            continue
        x_lo, x_hi = grid[lo], grid[hi]
        d_lo = sweep.energies[lo, a] - sweep.energies[lo, b]
        d_hi = sweep.energies[hi, a] - sweep.energies[hi, b]
        reference = sweep.vectors[lo]
        for _ in range(levels):
            x_mid = 0.5 * (x_lo + x_hi)
            feed = combine_feeds(system.layout.feeds, sweep.spec.values_at(x_mid))
            result = _sweep_point(system, feed, hamiltonian, use_overlap, tol)
            if result is None or reference is None:
                break
            values, current = result
            permutation, _ = _match(reference, current)
            d_mid = values[permutation[a]] - values[permutation[b]]
            if d_mid == 0:
                x_lo = x_hi = x_mid
                d_lo = d_hi = 0.0
                break
            if d_mid * d_lo > 0:
                x_lo, d_lo, reference = x_mid, d_mid, current[:, permutation]
            else:
                x_hi, d_hi = x_mid, d_mid
        if d_hi == d_lo:
            value = x_lo
        else:
            value = x_lo - d_lo * (x_hi - x_lo) / (d_hi - d_lo)
        refined.append(replace(crossing, value=float(value), refined=True))
        logger.debug(
            f"Crossing {crossing.labels}: {crossing.value:.6f} -> {value:.6f}."
        )
    return refined


@dataclass(frozen=True)
class ParabolaFit:
    """Quadratic fit E = a x^2 + b x + c of a level along a sweep.

    Args:
        label: Level label
        coefficients: a (meV per (2et/hbar)^2), b, c
        r_squared: Coefficient of determination
    """

    label: str
    coefficients: tuple[float, float, float]
    r_squared: float

    @property
    def curvature(self) -> float:
        return self.coefficients[0]


def fit_parabolas(sweep: SpectrumSweep) -> dict[str, ParabolaFit]:
    """Fits each tracked level to a quadratic in the swept parameter.

    Raises:
        ValueError: When a level has fewer than three valid points
    """
    grid = sweep.grid
    fits = {}
    for k, label in enumerate(sweep.labels):
        energies = sweep.energies[:, k]
        valid = np.isfinite(energies)
        if np.sum(valid) < 3:
            raise ValueError(f"Level {label!r} has fewer than three valid points.")
        x, y = grid[valid], energies[valid]
        coefficients = np.polyfit(x, y, 2)
        residual = float(np.sum((y - np.polyval(coefficients, x)) ** 2))
        total = float(np.sum((y - np.mean(y)) ** 2))
        r_squared = 1.0 - residual / total if total > 0 else 1.0
        fits[label] = ParabolaFit(
            label=label,
            coefficients=tuple(float(c) for c in coefficients),
            r_squared=r_squared,
        )
    return fits


def qubit_coupling(fits: Mapping[str, ParabolaFit], i: int, j: int) -> float:
    """Returns the ZZ-type coupling of qubits i and j from fitted curvatures.

    The coupling is |sum_labels s_i s_j a_label| / n_labels with s = +1 for U
    and -1 for D. Ambiguous labels are skipped.
    """
    terms = []
    for label, fit in fits.items():
        if "?" in label:
            continue
        s_i = 1 if label[i] == "U" else -1
        s_j = 1 if label[j] == "U" else -1
        terms.append(s_i * s_j * fit.curvature)
    if not terms:
        return 0.0
    return abs(float(np.sum(terms)) / len(terms))
