"""Truncated single-mode Fock space: ladder operators, coherent states, moments.

Density matrices stay dense; operators above ``FOCK.DENSE_LIMIT`` levels are
held as CSR matrices. Everything is immutable once built.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.linalg import expm
from scipy.special import gammaln
from scipy.stats import poisson

from .conf import get_setting
from .exceptions import (
    DimensionMismatchError,
    InvalidDimensionError,
    InvalidStateError,
    TruncationError,
)

logger = logging.getLogger(__name__)


def _frozen(array):
    array = np.array(array, dtype=complex)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FockOperator:
    entries: object

    def __post_init__(self):
        shape = self.entries.shape
        if len(shape) != 2 or shape[0] != shape[1]:
            raise InvalidDimensionError(f"Operator must be square, got shape {shape}.")
        if shape[0] < 2:
            raise InvalidDimensionError(f"Fock cutoff must be at least 2, got {shape[0]}.")
        data = self.entries.data if sparse.issparse(self.entries) else self.entries
        if not np.all(np.isfinite(data)):
            raise InvalidDimensionError("Operator entries must be finite.")

    @classmethod
    def from_matrix(cls, matrix, dense_limit=None):
        dense_limit = get_setting("FOCK", "DENSE_LIMIT", dense_limit)
        if matrix.shape[0] > dense_limit:
            return cls(sparse.csr_matrix(matrix, dtype=complex))
        dense = matrix.toarray() if sparse.issparse(matrix) else matrix
        return cls(_frozen(dense))

    @property
    def dim(self):
        return self.entries.shape[0]

    @property
    def is_sparse(self):
        return sparse.issparse(self.entries)

    def toarray(self):
        return self.entries.toarray() if self.is_sparse else np.array(self.entries)

    def tocsr(self):
        return sparse.csr_matrix(self.entries, dtype=complex)

    @property
    def is_hermitian(self):
        deviation = self.tocsr() - self.tocsr().conj().T
        return deviation.nnz == 0 or np.max(np.abs(deviation.data)) <= get_setting("FOCK", "HERMITIAN_TOL")

    def dag(self):
        return FockOperator.from_matrix(self.entries.conj().T)

    def __matmul__(self, other):
        return FockOperator.from_matrix(self.tocsr() @ other.tocsr())


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    entries: np.ndarray

    def __post_init__(self):
        entries = _frozen(self.entries)
        object.__setattr__(self, "entries", entries)
        n = entries.shape[0]
        if entries.ndim != 2 or entries.shape[1] != n:
            raise InvalidStateError(f"Density matrix must be square, got shape {entries.shape}.")
        if n < 2:
            raise InvalidDimensionError(f"Fock cutoff must be at least 2, got {n}.")
        if not np.all(np.isfinite(entries)):
            raise InvalidStateError("Density matrix has non-finite entries.")
        herm_err = np.max(np.abs(entries - entries.conj().T))
        if herm_err > get_setting("FOCK", "HERMITIAN_TOL"):
            raise InvalidStateError(f"Density matrix is not Hermitian (deviation {herm_err:.3e}).")
        trace = np.trace(entries).real
        if abs(trace - 1) > get_setting("FOCK", "TRACE_TOL"):
            raise InvalidStateError(f"Density matrix trace is {trace!r}, expected 1.")
        lowest = np.linalg.eigvalsh(0.5 * (entries + entries.conj().T))[0]
        if lowest < -get_setting("FOCK", "POSITIVITY_TOL"):
            raise InvalidStateError(f"Density matrix has negative eigenvalue {lowest:.3e}.")

    @classmethod
    def from_unnormalized(cls, matrix):
        """Hermitise and renormalise a solver output before validation."""
        matrix = np.asarray(matrix, dtype=complex)
        matrix = 0.5 * (matrix + matrix.conj().T)
        return cls(matrix / np.trace(matrix).real)

    @classmethod
    def from_vector(cls, psi):
        psi = np.asarray(psi, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @property
    def dim(self):
        return self.entries.shape[0]

    def populations(self):
        return np.real(np.diag(self.entries))


@dataclass(frozen=True, eq=False)
class CoherentStateVector:
    amplitude: complex
    components: np.ndarray

    @property
    def dim(self):
        return self.components.shape[0]

    @property
    def leakage(self):
        return 1.0 - float(np.vdot(self.components, self.components).real)


def _check_dim(n_max):
    if int(n_max) != n_max or n_max < 2:
        raise InvalidDimensionError(f"Fock cutoff must be an integer >= 2, got {n_max!r}.")
    return int(n_max)


def annihilation(n_max):
    n_max = _check_dim(n_max)
    a = sparse.diags(np.sqrt(np.arange(1, n_max)), offsets=1, shape=(n_max, n_max), dtype=complex)
    return FockOperator.from_matrix(a)


def creation(n_max):
    return annihilation(n_max).dag()


def number_operator(n_max):
    n_max = _check_dim(n_max)
    return FockOperator.from_matrix(sparse.diags(np.arange(n_max, dtype=complex)))


def identity(n_max):
    n_max = _check_dim(n_max)
    return FockOperator.from_matrix(sparse.identity(n_max, dtype=complex, format="csr"))


def coherent_matrix(nodes, n_max):
    """Rows e^{-|μ|²/2} μⁿ/√n! for every node μ, factorials via log-gamma.

    No truncation guard: a state supported well below ``n_max`` has exact
    overlaps with these truncated vectors at any |μ|.
    """
    nodes = np.asarray(nodes, dtype=complex).reshape(-1, 1)
    n = np.arange(n_max)
    radius = np.abs(nodes)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_radius = np.where(n == 0, 0.0, n * np.log(radius))
    log_mag = -0.5 * radius ** 2 + log_radius - 0.5 * gammaln(n + 1)
    return np.exp(log_mag) * np.exp(1j * n * np.angle(nodes))


def required_cutoff_for(mu, occupation_ratio=None, leakage_bound=None):
    """Smallest cutoff passing both the occupation guard and the leakage bound."""
    occupation_ratio = get_setting("FOCK", "COHERENT_OCCUPATION_RATIO", occupation_ratio)
    leakage_bound = get_setting("FOCK", "LEAKAGE_BOUND", leakage_bound)
    mean = abs(mu) ** 2
    n_max = max(2, math.ceil(mean / occupation_ratio))
    while poisson.sf(n_max - 1, mean) > leakage_bound:
        n_max += 1
    return n_max


def coherent_state(mu, n_max, occupation_ratio=None, leakage_bound=None):
    n_max = _check_dim(n_max)
    occupation_ratio = get_setting("FOCK", "COHERENT_OCCUPATION_RATIO", occupation_ratio)
    leakage_bound = get_setting("FOCK", "LEAKAGE_BOUND", leakage_bound)
    if abs(mu) ** 2 > occupation_ratio * n_max:
        required = required_cutoff_for(mu, occupation_ratio, leakage_bound)
        raise TruncationError(
            f"|mu|^2={abs(mu) ** 2:.4g} is too large for n_max={n_max}; need about {required}.",
            required_n_max=required,
        )
    state = CoherentStateVector(complex(mu), _frozen(coherent_matrix([mu], n_max)[0]))
    if state.leakage > leakage_bound:
        required = required_cutoff_for(mu, occupation_ratio, leakage_bound)
        raise TruncationError(
            f"Coherent state {mu} leaks {state.leakage:.3e} above n_max={n_max}; need about {required}.",
            required_n_max=required,
        )
    return state


def fock_state(n, n_max):
    n_max = _check_dim(n_max)
    psi = np.zeros(n_max, dtype=complex)
    psi[n] = 1.0
    return DensityMatrix.from_vector(psi)


def coherent_density(mu, n_max):
    """|μ⟩⟨μ| in the truncated space, renormalised."""
    n_max = _check_dim(n_max)
    return DensityMatrix.from_vector(coherent_matrix([mu], n_max)[0])


def thermal_state(nbar, n_max):
    n_max = _check_dim(n_max)
    n = np.arange(n_max)
    weights = np.exp(n * np.log(nbar / (1.0 + nbar))) if nbar > 0 else (n == 0).astype(float)
    return DensityMatrix(np.diag(weights / weights.sum()).astype(complex))


def squeezed_vacuum(r, n_max, phi=0.0, padding=40):
    """S(ξ)|0⟩ with ξ = r e^{iφ}; for φ = 0 the q-quadrature variance is e^{-2r}/2."""
    n_max = _check_dim(n_max)
    big = n_max + padding
    a = annihilation(big).toarray()
    xi = r * np.exp(1j * phi)
    squeeze = expm(0.5 * (np.conj(xi) * a @ a - xi * a.conj().T @ a.conj().T))
    return DensityMatrix.from_vector(squeeze[:n_max, 0])


def expectation(rho, op):
    if rho.dim != op.dim:
        raise DimensionMismatchError(f"State has dim {rho.dim}, operator has dim {op.dim}.")
    # tr(ρO) = Σ_ij ρ_ij O_ji
    matrix = op.tocsr()
    value = complex(matrix.multiply(rho.entries.T).sum())
    if abs(value.imag) > get_setting("FOCK", "EXPECTATION_IMAG_TOL") and op.is_hermitian:
        raise InvalidStateError(f"Hermitian observable has imaginary expectation {value.imag:.3e}.")
    return value


def trace_distance(rho, sigma):
    if rho.dim != sigma.dim:
        raise DimensionMismatchError(f"Cannot compare states of dim {rho.dim} and {sigma.dim}.")
    diff = rho.entries - sigma.entries
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


def von_neumann_entropy(rho):
    p = np.linalg.eigvalsh(rho.entries)
    p = p[p > 1e-300]
    return float(-np.sum(p * np.log(p)))


def vectorize(matrix):
    """Column stacking, the convention of every superoperator in this package."""
    return np.asarray(matrix).reshape(-1, order="F")


def unvectorize(vector, dim):
    return np.asarray(vector).reshape((dim, dim), order="F")


def recommended_cutoff(N, n_ref, c1=None, c2=None):
    """n_max = ceil(c₁·N·n + c₂·√(N·n)), never below 2."""
    c1 = get_setting("FOCK", "CUTOFF_C1", c1)
    c2 = get_setting("FOCK", "CUTOFF_C2", c2)
    load = N * max(n_ref, 0.0)
    return max(2, math.ceil(c1 * load + c2 * math.sqrt(load)))
