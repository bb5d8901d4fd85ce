"""Square-lattice geometry, barrier masks and loop bases."""

from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

from loguru import logger
import numpy as np
from scipy.sparse import coo_matrix, csr_matrix
from scipy.sparse.csgraph import connected_components

from svilc.data import LATTICE_CONSTANT_NM
from svilc.exceptions import LatticeError
from svilc.typing import Array1D, Array2D, ArrayLike1D, Point, Site
from svilc.utils import is_half_integer, wrap_angle


@dataclass(frozen=True)
class LatticeSpec:
    """Finite square lattice with barrier atoms.

    Coordinates are 1-based (x, y). Vortex centers in hole_sites may sit at
    plaquette centers (half-integer coordinates) or on sites.

    Args:
        nx: Number of sites along x
        ny: Number of sites along y
        lattice_constant: Lattice constant (nm)
        barrier_sites: Sites substituted by barrier atoms
        hole_sites: Vortex centers with a doped hole

    Raises:
        LatticeError: When the geometry is invalid
    """

    nx: int
    ny: int
    lattice_constant: float = LATTICE_CONSTANT_NM
    barrier_sites: frozenset[Site] = frozenset()
    hole_sites: frozenset[Point] = frozenset()

    def __post_init__(self) -> None:
        object.__setattr__(
            self,
            "barrier_sites",
            frozenset((int(x), int(y)) for x, y in self.barrier_sites),
        )
        object.__setattr__(
            self,
            "hole_sites",
            frozenset((float(x), float(y)) for x, y in self.hole_sites),
        )
        if self.nx < 1 or self.ny < 1:
            raise LatticeError(
                f"Lattice size must be positive, got {self.nx}x{self.ny}."
            )
        if self.lattice_constant <= 0:
            raise LatticeError("lattice_constant must be positive.")
        for x, y in self.barrier_sites:
            if not self.contains((x, y)):
                raise LatticeError(f"Barrier site {(x, y)} is outside the lattice.")
        for x, y in self.hole_sites:
            if not self.contains((x, y)):
                raise LatticeError(f"Vortex hole {(x, y)} is outside the lattice.")
        barriers = {(float(x), float(y)) for x, y in self.barrier_sites}
        overlap = barriers & self.hole_sites
        if overlap:
            raise LatticeError(f"Sites {sorted(overlap)} are both barrier and hole.")

    def contains(self, point: Sequence[float]) -> bool:
        """Returns True if point lies within [1, nx] x [1, ny]."""
        x, y = point
        return bool(1 <= x <= self.nx and 1 <= y <= self.ny)


def barrier_columns(
    columns: Iterable[int], rows: Iterable[int]
) -> frozenset[Site]:
    """Returns barrier sites for the given columns restricted to rows."""
    rows = list(rows)
    return frozenset((int(x), int(y)) for x in columns for y in rows)


@dataclass(frozen=True, eq=False)
class BondGraph:
    """Nearest-neighbor graph over the active sites of a lattice.

    Sites are indexed row-major (x fastest). Each bond (i, j) has i < j and is
    oriented from i to j, i.e. along +x or +y.
    """

    spec: LatticeSpec
    coordinates: Array2D
    bonds: Array2D
    adjacency: tuple[tuple[int, ...], ...]

    @property
    def n_sites(self) -> int:
        return len(self.coordinates)

    @property
    def n_bonds(self) -> int:
        return len(self.bonds)

    @cached_property
    def site_lookup(self) -> dict[Site, int]:
        return {(int(x), int(y)): i for i, (x, y) in enumerate(self.coordinates)}

    @cached_property
    def bond_lookup(self) -> dict[tuple[int, int], int]:
        return {(int(i), int(j)): b for b, (i, j) in enumerate(self.bonds)}

    def has_site(self, site: Sequence[int]) -> bool:
        return (int(site[0]), int(site[1])) in self.site_lookup

    def site_index(self, site: Sequence[int]) -> int:
        """Returns the index of an active site.

        Raises:
            LatticeError: When the site is a barrier or outside the lattice
        """
        key = (int(site[0]), int(site[1]))
        if key not in self.site_lookup:
            raise LatticeError(f"Site {key} is not an active lattice site.")
        return self.site_lookup[key]

    def bond_index(self, i: int, j: int) -> tuple[int, int]:
        """Returns bond index and orientation (+1 for i -> j, -1 for j -> i).

        Raises:
            LatticeError: When i and j are not nearest neighbors
        """
        if (i, j) in self.bond_lookup:
            return self.bond_lookup[(i, j)], 1
        if (j, i) in self.bond_lookup:
            return self.bond_lookup[(j, i)], -1
        raise LatticeError(f"Sites {i} and {j} are not bonded.")

    @cached_property
    def gradient(self) -> csr_matrix:
        """Bond-site incidence: +1 at the head and -1 at the tail of each bond."""
        n_bonds = self.n_bonds
        rows = np.repeat(np.arange(n_bonds), 2)
        cols = self.bonds[:, ::-1].ravel()
        data = np.tile([1.0, -1.0], n_bonds)
        return csr_matrix((data, (rows, cols)), shape=(n_bonds, self.n_sites))

    def laplacian(self) -> csr_matrix:
        """Returns the unit-conductance graph Laplacian."""
        return csr_matrix(self.gradient.T @ self.gradient)

    @cached_property
    def vertical(self) -> Array1D:
        """Mask of bonds along y."""
        delta = self.coordinates[self.bonds[:, 1]] - self.coordinates[self.bonds[:, 0]]
        return delta[:, 1] == 1

    @cached_property
    def midpoints(self) -> Array2D:
        return 0.5 * (
            self.coordinates[self.bonds[:, 0]] + self.coordinates[self.bonds[:, 1]]
        )

    def adjacency_matrix(self) -> csr_matrix:
        n = self.n_sites
        data = np.ones(self.n_bonds)
        matrix = csr_matrix((data, (self.bonds[:, 0], self.bonds[:, 1])), shape=(n, n))
        return csr_matrix(matrix + matrix.T)


def build_lattice(spec: LatticeSpec) -> BondGraph:
    """Builds the bond graph over the active sites of a lattice.

    Args:
        spec: Lattice specification

    Returns:
        graph: Bond graph with row-major site indexing

    Raises:
        LatticeError: When all sites are barriers or the graph is disconnected
    """
    active = [
        (x, y)
        for y in range(1, spec.ny + 1)
        for x in range(1, spec.nx + 1)
        if (x, y) not in spec.barrier_sites
    ]
    if len(active) == 0:
        raise LatticeError("Barrier mask covers all sites.")
    lookup = {site: i for i, site in enumerate(active)}

    bonds = []
    neighbors: list[list[int]] = [[] for _ in active]
    for i, (x, y) in enumerate(active):
        for neighbor in ((x + 1, y), (x, y + 1)):
            j = lookup.get(neighbor)
            if j is not None:
                bonds.append((i, j))
                neighbors[i].append(j)
                neighbors[j].append(i)

    graph = BondGraph(
        spec=spec,
        coordinates=np.array(active, dtype=int),
        bonds=np.array(bonds, dtype=int).reshape(-1, 2),
        adjacency=tuple(tuple(sorted(n)) for n in neighbors),
    )

    n_components, labels = connected_components(
        graph.adjacency_matrix(), directed=False, return_labels=True
    )
    if n_components > 1:
        sizes = np.bincount(labels).tolist()
        logger.error(
            f"Barrier mask splits the {spec.nx}x{spec.ny} lattice into "
            f"{n_components} regions of sizes {sizes}."
        )
        raise LatticeError(
            f"Lattice is disconnected into {n_components} regions of sizes {sizes}. "
            "Leave bridging rows of Cu in the barrier columns."
        )
    logger.debug(
        f"Built {spec.nx}x{spec.ny} lattice: {graph.n_sites} sites, "
        f"{graph.n_bonds} bonds, {len(spec.barrier_sites)} barrier sites."
    )

    return graph


@dataclass(frozen=True, eq=False)
class LoopBasis:
    """Independent loops of a planar bond graph.

    Loops are the bounded faces of the lattice embedding, each a cyclic
    counter-clockwise sequence of site indices without the repeated endpoint.

    Args:
        graph: Bond graph the loops live on
        loops: Loop site sequences
        incidence: Signed loop-bond incidence (n_loops, n_bonds)
        boundary: Counter-clockwise outer boundary
        areas: Enclosed areas (a^2)
        centroids: Mean loop vertex positions (a)
    """

    graph: BondGraph
    loops: tuple[tuple[int, ...], ...]
    incidence: csr_matrix
    boundary: tuple[int, ...]
    areas: Array1D
    centroids: Array2D

    @property
    def n_loops(self) -> int:
        return len(self.loops)

    def loop_at(self, point: Sequence[float]) -> int:
        """Returns the index of the loop enclosing a point.

        Raises:
            LatticeError: When no loop encloses the point
        """
        coordinates = self.graph.coordinates
        angles = np.arctan2(coordinates[:, 1] - point[1], coordinates[:, 0] - point[0])
        for index, loop in enumerate(self.loops):
            if winding_number(angles, loop) != 0:
                return index
        raise LatticeError(f"No basis loop encloses {tuple(point)}.")


def _signed_area(coordinates: Array2D) -> float:
    x, y = coordinates[:, 0], coordinates[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _remove_spurs(face: list[int]) -> list[int]:
    """Removes back-and-forth excursions along dangling bonds."""
    sequence = list(face)
    changed = True
    while changed and len(sequence) > 2:
        changed = False
        n = len(sequence)
        for k in range(n):
            if sequence[(k - 1) % n] == sequence[(k + 1) % n]:
                drop = {k, (k + 1) % n}
                sequence = [s for m, s in enumerate(sequence) if m not in drop]
                changed = True
                break
    return sequence


def _trace_faces(graph: BondGraph) -> list[list[int]]:
    """Traces all faces of the planar lattice embedding."""
    coordinates = graph.coordinates
    rings = []
    for v, neighbors in enumerate(graph.adjacency):
        delta = coordinates[list(neighbors)] - coordinates[v]
        angles = np.mod(np.arctan2(delta[:, 1], delta[:, 0]), 2 * np.pi)
        rings.append([neighbors[k] for k in np.argsort(angles)])
    position = {(v, u): k for v, ring in enumerate(rings) for k, u in enumerate(ring)}

    faces = []
    visited: set[tuple[int, int]] = set()
    for i, j in graph.bonds.tolist():
        for start in ((i, j), (j, i)):
            if start in visited:
                continue
            face = []
            u, v = start
            while (u, v) not in visited:
                visited.add((u, v))
                face.append(u)
                ring = rings[v]
                # Tightest left turn keeps the face on the left
                w = ring[(position[(v, u)] - 1) % len(ring)]
                u, v = v, w
            faces.append(face)
    return faces


def plaquette_loop_basis(graph: BondGraph) -> LoopBasis:
    """Returns the minimal-face loop basis of a connected bond graph.

    Faces of a masked square lattice are plaquettes, or larger rings where
    barrier sites were removed.

    Args:
        graph: Connected bond graph

    Returns:
        basis: Loop basis with n_loops = n_bonds - n_sites + 1

    Raises:
        LatticeError: When the face count does not match the cycle rank
    """
    coordinates = graph.coordinates
    faces = _trace_faces(graph)
    n_expected = graph.n_bonds - graph.n_sites + 1

    if len(faces) == 0:
        outer: list[int] = [0]
        interior: list[list[int]] = []
    else:
        areas = [_signed_area(coordinates[face].astype(float)) for face in faces]
        i_outer = int(np.argmin(areas))
        outer = _remove_spurs(faces[i_outer])[::-1]
        interior = [_remove_spurs(f) for k, f in enumerate(faces) if k != i_outer]

    if len(interior) != n_expected:
        raise LatticeError(
            f"Found {len(interior)} faces but the cycle rank is {n_expected}."
        )

    loops = []
    for face in interior:
        k = int(np.argmin(face))
        loops.append(tuple(face[k:] + face[:k]))
    centroids = [coordinates[list(loop)].mean(axis=0) for loop in loops]
    order = sorted(
        range(len(loops)),
        key=lambda k: (
            round(float(centroids[k][1]), 9),
            round(float(centroids[k][0]), 9),
            len(loops[k]),
        ),
    )
    loops = [loops[k] for k in order]

    rows, cols, data = [], [], []
    for index, loop in enumerate(loops):
        for a, b in zip(loop, loop[1:] + loop[:1]):
            bond, sign = graph.bond_index(a, b)
            rows.append(index)
            cols.append(bond)
            data.append(float(sign))
    incidence = coo_matrix(
        (data, (rows, cols)), shape=(len(loops), graph.n_bonds)
    ).tocsr()
    incidence.eliminate_zeros()

    basis = LoopBasis(
        graph=graph,
        loops=tuple(loops),
        incidence=incidence,
        boundary=tuple(outer),
        areas=np.array(
            [_signed_area(coordinates[list(loop)].astype(float)) for loop in loops]
        ),
        centroids=np.array(centroids, dtype=float).reshape(-1, 2),
    )
    logger.debug(f"Loop basis with {basis.n_loops} loops.")

    return basis


def site_ring(graph: BondGraph, center: Sequence[float]) -> tuple[int, ...]:
    """Returns the counter-clockwise ring of sites around a center.

    A plaquette center gives its four corners, a site center the eight
    surrounding sites.

    Args:
        graph: Bond graph
        center: Plaquette center (half-integer) or site (integer) coordinates

    Returns:
        ring: Site indices

    Raises:
        LatticeError: When the center is neither kind or a ring site is missing
    """
    cx, cy = float(center[0]), float(center[1])
    if is_half_integer(cx) and is_half_integer(cy):
        offsets = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)]
    elif float(cx).is_integer() and float(cy).is_integer():
        offsets = [(-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0)]
    else:
        raise LatticeError(f"Center {(cx, cy)} is neither a site nor a plaquette.")
    return tuple(
        graph.site_index((int(round(cx + dx)), int(round(cy + dy))))
        for dx, dy in offsets
    )


def winding_number(
    angles: ArrayLike1D,
    loop: Sequence[int],
    graph: Optional[BondGraph] = None,
) -> int:
    """Returns the winding number of an angle field around a closed loop.

    Consecutive differences are wrapped to (-pi, pi] before summation.

    Args:
        angles: Angle per site (rad)
        loop: Cyclic site sequence, optionally with the first site repeated at the end
        graph: Bond graph used to check that consecutive sites are bonded

    Returns:
        winding: Winding number

    Raises:
        LatticeError: When the loop is not closed
    """
    loop = list(loop)
    if len(loop) > 1 and loop[0] == loop[-1]:
        loop = loop[:-1]
    if len(loop) < 2:
        raise LatticeError("Loop is not closed: it needs at least two sites.")
    if graph is not None:
        for a, b in zip(loop, loop[1:] + loop[:1]):
            try:
                graph.bond_index(a, b)
            except LatticeError as e:
                raise LatticeError(f"Loop is not closed: {e}") from e
    theta = np.asarray(angles, dtype=float)[loop]
    differences = wrap_angle(np.roll(theta, -1) - theta)
    winding = float(np.sum(differences)) / (2 * np.pi)

    return int(np.rint(winding))
