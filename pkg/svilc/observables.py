"""Magnetic-field coupling, basis construction and transition dipoles."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal, Optional, Union

from joblib import delayed, Parallel
from loguru import logger
import numpy as np
import scipy.linalg
from scipy.sparse import coo_matrix, csr_matrix, diags, identity

from svilc import config
from svilc.chi import CurrentState, dressed_orbitals
from svilc.data import (
    current_unit,
    DIPOLE_UNIT,
    ELEMENTARY_CHARGE,
    MEV_TO_JOULE,
    NM_TO_METER,
)
from svilc.lattice import BondGraph
from svilc.meanfield import MeanFieldSolution
from svilc.typing import Array1D, Array2D, ArrayLike1D

Operator = Union[Array2D, csr_matrix]


@dataclass(frozen=True)
class FieldPolynomial:
    """Out-of-plane field B = c0 + c_xx x^2 + c_x x + c_yy y^2 + c_y y (T).

    x and y are in lattice units. The vector potential is A = (0, A_y, 0) with
    A_y = int_0^x B(x', y) dx' + gauge_offset.
    """

    c_xx: float = 0.0
    c_x: float = 0.0
    c_yy: float = 0.0
    c_y: float = 0.0
    c0: float = 0.0
    gauge_offset: float = 0.0

    def __call__(self, x: ArrayLike1D, y: ArrayLike1D) -> Array1D:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        field: Array1D = (
            self.c0
            + self.c_xx * x ** 2
            + self.c_x * x
            + self.c_yy * y ** 2
            + self.c_y * y
        )
        return field

    @property
    def is_zero(self) -> bool:
        return not any((self.c_xx, self.c_x, self.c_yy, self.c_y, self.c0))

    def potential(self, x: ArrayLike1D, y: ArrayLike1D) -> Array1D:
        """Returns A_y (T a)."""
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        potential: Array1D = (
            self.c_xx * x ** 3 / 3
            + self.c_x * x ** 2 / 2
            + (self.c_yy * y ** 2 + self.c_y * y + self.c0) * x
            + self.gauge_offset
        )
        return potential


def vector_potential(field: FieldPolynomial, graph: BondGraph) -> Array1D:
    """Returns the line integral of A along every bond i -> j (T a^2).

    Horizontal bonds carry no A_x; vertical bonds are integrated in closed form.
    """
    integrals = np.zeros(graph.n_bonds)
    vertical = graph.vertical
    tail = graph.coordinates[graph.bonds[vertical, 0]].astype(float)
    head = graph.coordinates[graph.bonds[vertical, 1]].astype(float)
    x, y1, y2 = tail[:, 0], tail[:, 1], head[:, 1]
    dy = y2 - y1
    integrals[vertical] = (
        field.c_xx * x ** 3 / 3 * dy
        + field.c_x * x ** 2 / 2 * dy
        + x
        * (
            field.c_yy * (y2 ** 3 - y1 ** 3) / 3
            + field.c_y * (y2 ** 2 - y1 ** 2) / 2
            + field.c0 * dy
        )
        + field.gauge_offset * dy
    )
    return integrals


def field_couplings(
    field: FieldPolynomial, graph: BondGraph, t: float
) -> Array1D:
    """Returns the energy per unit bond current, Phi_b * I0 (meV per 2et/hbar)."""
    a = graph.spec.lattice_constant * NM_TO_METER
    couplings: Array1D = (
        vector_potential(field, graph) * a ** 2 * current_unit(t) / MEV_TO_JOULE
    )
    return couplings


def magnetic_energy(
    currents: ArrayLike1D, field: FieldPolynomial, graph: BondGraph, t: float
) -> float:
    """Returns the classical current-field energy -sum_b kappa_b J_b (meV)."""
    return float(-np.sum(field_couplings(field, graph, t) * np.asarray(currents)))


def field_operator(field: FieldPolynomial, graph: BondGraph, t: float) -> csr_matrix:
    """Returns H_B as a one-body matrix in the 2j+sigma basis (meV).

    Its expectation value in any determinant is -sum_b kappa_b J_b.
    """
    kappa = field_couplings(field, graph, t)
    i, j = graph.bonds[:, 0], graph.bonds[:, 1]
    rows, cols, data = [], [], []
    for sigma in (0, 1):
        rows += [2 * i + sigma, 2 * j + sigma]
        cols += [2 * j + sigma, 2 * i + sigma]
        data += [0.5j * kappa, -0.5j * kappa]
    n = 2 * graph.n_sites
    return coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    ).tocsr()


def position_operators(graph: BondGraph) -> tuple[csr_matrix, csr_matrix]:
    """Returns x and y relative to the lattice center as one-body matrices (a)."""
    spec = graph.spec
    center = np.array([(spec.nx + 1) / 2, (spec.ny + 1) / 2])
    relative = graph.coordinates - center
    return (
        diags(np.repeat(relative[:, 0], 2).astype(complex)).tocsr(),
        diags(np.repeat(relative[:, 1], 2).astype(complex)).tocsr(),
    )


def number_operator(graph: BondGraph) -> csr_matrix:
    return identity(2 * graph.n_sites, dtype=complex, format="csr")


@dataclass(frozen=True)
class ElementResult:
    """Matrix element between two determinants.

    Args:
        value: <a|O|b>
        overlap: <a|b>
        singular: Whether the overlap fell below the threshold
    """

    value: complex
    overlap: complex
    singular: bool


def transition_elements(
    orbitals_a: Array2D,
    orbitals_b: Array2D,
    operators: Sequence[Operator],
    threshold: float = config.OVERLAP_THRESHOLD,
) -> list[ElementResult]:
    """Returns one-body elements between nonorthogonal determinants.

    Uses <a|O|b> = det(M) tr(M^-1 A^dag O B) with M = A^dag B the occupied
    overlap matrix.

    Args:
        orbitals_a: Occupied orbitals of determinant a (2 n_sites, n_occupied)
        orbitals_b: Occupied orbitals of determinant b (2 n_sites, n_occupied)
        operators: One-body matrices
        threshold: Overlap modulus below which elements are set to zero

    Returns:
        results: One result per operator
    """
    bra = orbitals_a.conj().T
    overlap_matrix = bra @ orbitals_b
    sign, log_det = np.linalg.slogdet(overlap_matrix)
    if not np.isfinite(log_det) or log_det < np.log(threshold):
        overlap = complex(sign * np.exp(log_det)) if np.isfinite(log_det) else 0j
        return [ElementResult(0j, overlap, True) for _ in operators]
    overlap = complex(sign * np.exp(log_det))

    results = []
    for operator in operators:
        transformed = bra @ (operator @ orbitals_b)
        value = overlap * np.trace(np.linalg.solve(overlap_matrix, transformed))
        results.append(ElementResult(complex(value), overlap, False))
    return results


def one_body_element(
    state_a: CurrentState,
    state_b: CurrentState,
    operator: Operator,
    meanfield: MeanFieldSolution,
    threshold: float = config.OVERLAP_THRESHOLD,
) -> ElementResult:
    """Returns <a|O|b> for two states sharing the orbitals of one mean field."""
    result = transition_elements(
        dressed_orbitals(state_a, meanfield),
        dressed_orbitals(state_b, meanfield),
        [operator],
        threshold=threshold,
    )[0]
    if result.singular:
        logger.debug(
            f"Overlap of {state_a.label!r} and {state_b.label!r} below {threshold:.0e}."
        )
    return result


@dataclass(frozen=True, eq=False)
class CouplingMatrix:
    """H_B and overlaps in the basis of current patterns.

    Args:
        labels: Pattern labels
        matrix: <a|H_B|b> (meV)
        overlap: <a|b>
        singular: Pairs whose overlap fell below the threshold
    """

    labels: tuple[str, ...]
    matrix: Array2D
    overlap: Array2D
    singular: Array2D

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))


def _pair_matrices(
    orbitals: Sequence[Array2D],
    operators: Sequence[Operator],
    threshold: float,
    n_jobs: int,
) -> tuple[list[Array2D], Array2D, Array2D]:
    n = len(orbitals)
    pairs = [(a, b) for a in range(n) for b in range(a, n)]
    results = Parallel(n_jobs=n_jobs)(
        delayed(transition_elements)(orbitals[a], orbitals[b], operators, threshold)
        for a, b in pairs
    )
    matrices = [np.zeros((n, n), dtype=complex) for _ in operators]
    overlap = np.zeros((n, n), dtype=complex)
    singular = np.zeros((n, n), dtype=bool)
    for (a, b), elements in zip(pairs, results):
        for matrix, element in zip(matrices, elements):
            matrix[a, b] = element.value
            matrix[b, a] = np.conj(element.value)
        overlap[a, b] = elements[0].overlap
        overlap[b, a] = np.conj(elements[0].overlap)
        singular[a, b] = singular[b, a] = elements[0].singular
    return matrices, overlap, singular


def coupling_matrix(
    states: Sequence[CurrentState],
    meanfield: MeanFieldSolution,
    field: FieldPolynomial,
    threshold: float = config.OVERLAP_THRESHOLD,
    n_jobs: int = config.N_JOBS,
) -> CouplingMatrix:
    """Returns H_B between all pairs of states."""
    graph = meanfield.graph
    operator = field_operator(field, graph, meanfield.params.t)
    orbitals = [dressed_orbitals(state, meanfield) for state in states]
    (matrix,), overlap, singular = _pair_matrices(
        orbitals, [operator], threshold, n_jobs
    )
    n_singular = int(np.sum(np.triu(singular, 1)))
    if n_singular > 0:
        logger.info(f"{n_singular} state pairs have vanishing overlap.")
    return CouplingMatrix(
        labels=tuple(state.label for state in states),
        matrix=matrix,
        overlap=overlap,
        singular=singular,
    )


@dataclass(frozen=True, eq=False)
class OrthogonalBasis:
    """States built from current patterns, ordered by ascending energy.

    Args:
        pattern_labels: Labels of the underlying patterns
        vectors: Pattern coefficients, one column per state
        energies: Total energies (meV)
        hf_energies: Hartree-Fock parts (meV)
        field_energies: H_B parts (meV)
        indices: Pattern with the largest weight per state
        orthonormality_error: Largest deviation of V^dag S V from the identity
    """

    pattern_labels: tuple[str, ...]
    vectors: Array2D
    energies: Array1D
    hf_energies: Array1D
    field_energies: Array1D
    indices: list[int]
    orthonormality_error: float = 0.0

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(self.pattern_labels[i] for i in self.indices)


def _resolve_degenerate(
    values: Array1D, vectors: Array2D, secondary: Array2D, tol: float = 1e-10
) -> Array2D:
    """Diagonalizes a secondary operator inside degenerate eigenspaces."""
    vectors = vectors.copy()
    scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
    start = 0
    while start < len(values):
        stop = start + 1
        while stop < len(values) and values[stop] - values[start] < tol * scale:
            stop += 1
        if stop - start > 1:
            block = vectors[:, start:stop]
            projected = block.conj().T @ secondary @ block
            _, rotation = np.linalg.eigh(projected)
            vectors[:, start:stop] = block @ rotation
        start = stop
    return vectors


def orthonormality_error(vectors: Array2D, overlap: Array2D) -> float:
    """Returns max |V^dag S V - 1| for state vectors in a pattern basis."""
    gram = vectors.conj().T @ overlap @ vectors
    return float(np.max(np.abs(gram - np.eye(len(gram))), initial=0.0))


def diagonalize_basis(
    coupling: CouplingMatrix,
    hf_energies: ArrayLike1D,
    use_overlap: bool = config.USE_OVERLAP,
    hamiltonian: Literal["field", "total"] = "field",
) -> OrthogonalBasis:
    """Builds orthogonal states from current patterns.

    States diagonalize H_B restricted to the pattern subspace ('field'), or
    diag(E_HF) + H_B ('total'). Degenerate H_B eigenspaces are resolved by the
    Hartree-Fock energies. Each state energy is <HF + H_B>.

    With use_overlap the generalized problem H v = E S v is solved, so the
    states are orthonormal under the determinant overlaps S. Without it the
    patterns are treated as orthonormal and an error is logged when S is not
    close to the identity.

    Args:
        coupling: H_B between patterns
        hf_energies: Hartree-Fock energy of each pattern (meV)
        use_overlap: Solve the generalized problem with the pattern overlaps
        hamiltonian: 'field' or 'total'

    Returns:
        basis: States in ascending energy order

    Raises:
        ValueError: When hamiltonian is not supported or the overlap matrix is
            not positive definite
    """
    hf = np.diag(np.asarray(hf_energies, dtype=float)).astype(complex)
    if hamiltonian == "field":
        target = coupling.matrix
    elif hamiltonian == "total":
        target = hf + coupling.matrix
    else:
        raise ValueError(
            f"hamiltonian={hamiltonian!r} not supported. Use 'field' or 'total'."
        )

    if use_overlap:
        try:
            values, vectors = scipy.linalg.eigh(target, coupling.overlap)
        except scipy.linalg.LinAlgError as e:
            raise ValueError(
                "Pattern overlap matrix is not positive definite. "
                "Two patterns may describe the same state."
            ) from e
    else:
        values, vectors = np.linalg.eigh(target)
    if hamiltonian == "field":
        vectors = _resolve_degenerate(values, vectors, hf)
    error = orthonormality_error(vectors, coupling.overlap)
    if error > config.ORTHONORMALITY_TOL:
        logger.error(
            f"States deviate from orthonormality by {error:.3e} under the pattern "
            "overlaps. Use the overlap metric."
        )

    hf_parts = np.real(np.einsum("ak,ab,bk->k", vectors.conj(), hf, vectors))
    field_parts = np.real(
        np.einsum("ak,ab,bk->k", vectors.conj(), coupling.matrix, vectors)
    )
    energies = hf_parts + field_parts
    order = np.argsort(energies, kind="stable")
    vectors = vectors[:, order]

    # Pattern with highest weight for each state
    indices = np.argmax(np.abs(vectors), axis=0).tolist()

    return OrthogonalBasis(
        pattern_labels=coupling.labels,
        vectors=vectors,
        energies=energies[order],
        hf_energies=hf_parts[order],
        field_energies=field_parts[order],
        indices=indices,
        orthonormality_error=error,
    )


@dataclass(frozen=True, eq=False)
class DipoleMatrix:
    """Dipole moments between orthogonal states (1e-30 C m).

    Args:
        labels: State labels
        mu_x: x components
        mu_y: y components
    """

    labels: tuple[str, ...]
    mu_x: Array2D
    mu_y: Array2D

    @property
    def permanent_x(self) -> Array1D:
        return np.real(np.diag(self.mu_x))

    @property
    def permanent_y(self) -> Array1D:
        return np.real(np.diag(self.mu_y))

    @property
    def transitions_x(self) -> Array2D:
        transitions: Array2D = self.mu_x - np.diag(np.diag(self.mu_x))
        return transitions

    @property
    def transitions_y(self) -> Array2D:
        transitions: Array2D = self.mu_y - np.diag(np.diag(self.mu_y))
        return transitions


def transition_dipoles(
    basis: OrthogonalBasis,
    states: Sequence[CurrentState],
    meanfield: MeanFieldSolution,
    labels: Optional[Sequence[str]] = None,
    threshold: float = config.OVERLAP_THRESHOLD,
    n_jobs: int = config.N_JOBS,
) -> DipoleMatrix:
    """Returns mu = -e sum_j (r_j - r_center) <a|n_j|b> between basis states.

    Args:
        basis: Orthogonal states
        states: Patterns the basis is built from, in basis pattern order
        meanfield: Mean-field solution
        labels: State labels, the dominant pattern labels by default
        threshold: Overlap threshold for determinant elements
        n_jobs: Parallel workers

    Returns:
        dipoles: Dipole matrices

    Raises:
        ValueError: When the basis states are not orthonormal under the pattern
            overlaps
    """
    graph = meanfield.graph
    x_operator, y_operator = position_operators(graph)
    orbitals = [dressed_orbitals(state, meanfield) for state in states]
    (x_patterns, y_patterns), overlap, _ = _pair_matrices(
        orbitals, [x_operator, y_operator], threshold, n_jobs
    )
    V = basis.vectors
    # Dipoles are origin independent only between orthonormal states
    error = orthonormality_error(V, overlap)
    if error > config.ORTHONORMALITY_TOL:
        raise ValueError(
            f"Basis states deviate from orthonormality by {error:.3e}. "
            "Build the basis with the overlap metric."
        )
    unit = -ELEMENTARY_CHARGE * graph.spec.lattice_constant * NM_TO_METER / DIPOLE_UNIT
    if labels is None:
        labels = basis.labels
    return DipoleMatrix(
        labels=tuple(labels),
        mu_x=unit * (V.conj().T @ x_patterns @ V),
        mu_y=unit * (V.conj().T @ y_patterns @ V),
    )
