"""Lindblad generator of the driven Kerr cavity and its steady state.

Vectorisation is column stacking, so vec(AρB) = (Bᵀ ⊗ A) vec(ρ) and

    𝓛 = -i(I⊗H - Hᵀ⊗I) + 2κ(ā⊗a - ½ I⊗a†a - ½ (a†a)ᵀ⊗I).
"""
import logging
import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import ArpackError, ArpackNoConvergence, eigs, splu

from .conf import get_setting
from .exceptions import (
    CutoffError,
    DegenerateSteadyStateError,
    EigensolverError,
    InvalidDimensionError,
    NonFiniteParameterError,
    StepSizeError,
)
from .fock_algebra import DensityMatrix, annihilation, unvectorize, vectorize

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Superoperator:
    matrix: sparse.csr_matrix
    n_max: int

    @property
    def dim(self):
        return self.n_max ** 2

    def apply(self, rho):
        """𝓛(ρ) as a dense matrix; accepts a DensityMatrix or a plain array."""
        entries = getattr(rho, "entries", rho)
        return unvectorize(self.matrix @ vectorize(entries), self.n_max)

    def trace_functional_residual(self):
        """max |Σ_k 𝓛[(k,k), :]|, zero for a trace-preserving generator."""
        diag_rows = np.arange(self.n_max) * (self.n_max + 1)
        return float(np.max(np.abs(np.asarray(self.matrix[diag_rows, :].sum(axis=0)))))


@dataclass(frozen=True, eq=False)
class SteadyStateSolution:
    rho: DensityMatrix
    liouvillian: Superoperator
    residual: float
    eigenvalue: complex
    solve_time: float
    cutoff_drift: float = math.nan

    @property
    def n_max(self):
        return self.liouvillian.n_max


def required_cutoff(p):
    """Cutoff rule evaluated on the upper mean-field branch reachable at ``p``."""
    from .fock_algebra import recommended_cutoff
    from .kerr_model import bistability_window, mean_field_curve

    roots = mean_field_curve(p, p.eps)
    n_ref = max(roots) if roots else 0.0
    window = bistability_window(p)
    if window is not None:
        n_ref = max(n_ref, window.n_plus)
    return recommended_cutoff(p.N, n_ref)


def build_kerr_liouvillian(p, n_max, check_cutoff=True):
    if int(n_max) != n_max or n_max < 2:
        raise InvalidDimensionError(f"Fock cutoff must be an integer >= 2, got {n_max!r}.")
    n_max = int(n_max)
    for name in ("delta", "u", "kappa", "eps"):
        if not math.isfinite(getattr(p, name)):
            raise NonFiniteParameterError(f"Kerr parameter {name} is not finite.")
    if check_cutoff:
        needed = required_cutoff(p)
        if n_max < needed:
            raise CutoffError(f"n_max={n_max} is below the cutoff rule ({needed}) for {p}.")

    a = annihilation(n_max).tocsr()
    ad = a.conj().T.tocsr()
    num = ad @ a
    eye = sparse.identity(n_max, dtype=complex, format="csr")
    hamiltonian = (
        p.delta * num
        + (p.u / (2.0 * p.N)) * (ad @ ad @ a @ a)
        + 1j * p.drive * (ad - a)
    )
    unitary = -1j * (sparse.kron(eye, hamiltonian) - sparse.kron(hamiltonian.T, eye))
    dissipator = 2.0 * p.kappa * (
        sparse.kron(a.conj(), a)
        - 0.5 * sparse.kron(eye, num)
        - 0.5 * sparse.kron(num.T, eye)
    )
    matrix = sparse.csr_matrix(unitary + dissipator)
    logger.debug("Built Liouvillian for %s at n_max=%d (nnz=%d).", p, n_max, matrix.nnz)
    return Superoperator(matrix, n_max)


def _start_vector(dim):
    # fixed Arnoldi start so repeated runs reproduce bit for bit
    return np.full(dim, 1.0 / math.sqrt(dim), dtype=complex)


def _dense_spectrum(L):
    values, vectors = scipy.linalg.eig(L.matrix.toarray())
    order = np.argsort(np.abs(values))
    return values[order], vectors[:, order]


def _nullspace_candidates(L, shift):
    matrix = L.matrix.tocsc()
    if L.dim <= get_setting("LIOUVILLIAN", "DENSE_EIG_LIMIT"):
        values, vectors = _dense_spectrum(L)
        return values[:2], vectors[:, :2]
    try:
        values, vectors = eigs(matrix, k=2, sigma=shift, which="LM", v0=_start_vector(L.dim))
    except (ArpackNoConvergence, ArpackError, RuntimeError) as exc:
        logger.warning("Shift-invert failed (%s); falling back to smallest-magnitude Arnoldi.", exc)
        try:
            values, vectors = eigs(matrix, k=2, which="SM", maxiter=50 * L.dim, v0=_start_vector(L.dim))
        except (ArpackNoConvergence, ArpackError) as inner:
            raise EigensolverError(f"Steady-state eigensolver did not converge: {inner}") from inner
    order = np.argsort(np.abs(values))
    return values[order], vectors[:, order]


def steady_state(L, shift=None, return_info=False):
    """Null eigenvector of 𝓛, Hermitised and normalised to unit trace."""
    shift = get_setting("LIOUVILLIAN", "SHIFT", shift)
    degeneracy_tol = get_setting("LIOUVILLIAN", "DEGENERACY_TOL")
    residual_tol = get_setting("LIOUVILLIAN", "RESIDUAL_TOL")
    start = time.perf_counter()

    values, vectors = _nullspace_candidates(L, shift)
    if abs(values[1]) < degeneracy_tol:
        raise DegenerateSteadyStateError(
            f"Two eigenvalues below {degeneracy_tol:g}: {values[0]:.3e}, {values[1]:.3e}."
        )
    vector = vectors[:, 0]
    # a few inverse-iteration sweeps against the shifted factorisation
    lu = splu((L.matrix - shift * sparse.identity(L.dim, format="csr")).tocsc())
    for _ in range(3):
        vector = lu.solve(vector)
        vector /= np.linalg.norm(vector)

    rho = DensityMatrix.from_unnormalized(unvectorize(vector, L.n_max))
    residual = float(np.linalg.norm(L.apply(rho)))
    elapsed = time.perf_counter() - start
    logger.debug("Steady state: λ0=%.3e, residual=%.3e, %.3fs.", abs(values[0]), residual, elapsed)
    if residual > residual_tol:
        raise EigensolverError(f"Steady-state residual {residual:.3e} exceeds {residual_tol:g}.")
    if return_info:
        return SteadyStateSolution(rho, L, residual, complex(values[0]), elapsed)
    return rho


def mean_photon_number(rho):
    return float(np.dot(np.arange(rho.dim), rho.populations()))


def converged_steady_state(p, n_max=None, step=None, tol=None, max_cutoff=None):
    """Steady state certified against the same solve at ``n_max + step``."""
    step = get_setting("LIOUVILLIAN", "CONVERGENCE_STEP", step)
    tol = get_setting("LIOUVILLIAN", "CONVERGENCE_TOL", tol)
    max_cutoff = get_setting("LIOUVILLIAN", "MAX_CUTOFF", max_cutoff)
    n_max = required_cutoff(p) if n_max is None else int(n_max)

    current = steady_state(build_kerr_liouvillian(p, n_max, check_cutoff=False), return_info=True)
    while True:
        n_next = current.n_max + step
        if n_next > max_cutoff:
            raise CutoffError(f"Cutoff did not converge below n_max={max_cutoff} for {p}.")
        candidate = steady_state(
            build_kerr_liouvillian(p, n_next, check_cutoff=False), return_info=True
        )
        drift = abs(mean_photon_number(candidate.rho) - mean_photon_number(current.rho))
        if drift < tol:
            return SteadyStateSolution(
                candidate.rho, candidate.liouvillian, candidate.residual,
                candidate.eigenvalue, current.solve_time + candidate.solve_time, drift,
            )
        logger.warning("Photon number drifts by %.3e between n_max=%d and %d; raising cutoff.",
                       drift, current.n_max, n_next)
        current = candidate


def spectral_radius_estimate(L):
    if L.dim <= get_setting("LIOUVILLIAN", "DENSE_EIG_LIMIT"):
        return float(np.max(np.abs(scipy.linalg.eigvals(L.matrix.toarray()))))
    try:
        value = eigs(L.matrix, k=1, which="LM", tol=1e-3, return_eigenvectors=False,
                     v0=_start_vector(L.dim))
        return 1.05 * float(np.abs(value[0]))
    except (ArpackNoConvergence, ArpackError):
        return float(sparse.linalg.norm(L.matrix, 1))


def evolve_trajectory(rho0, L, times, dt=None):
    """RK4 with a fixed step, sampled at the requested (sorted, non-negative) times."""
    safety = get_setting("LIOUVILLIAN", "RK4_SAFETY")
    drift_tol = get_setting("LIOUVILLIAN", "TRACE_DRIFT_TOL")
    dt_max = safety / max(spectral_radius_estimate(L), 1e-300)
    if dt is None:
        dt = dt_max
    elif dt > dt_max * (1 + 1e-9):
        raise StepSizeError(f"dt={dt:g} exceeds the RK4 stability bound {dt_max:g}.")

    matrix = L.matrix
    diagonal = np.arange(L.n_max) * (L.n_max + 1)
    vector = vectorize(rho0.entries).astype(complex)
    trace0 = vector[diagonal].sum().real
    now, states = 0.0, []
    for target in times:
        if target < now:
            raise ValueError("Sample times must be sorted and non-negative.")
        steps = math.ceil((target - now) / dt - 1e-12)
        if steps:
            h = (target - now) / steps
            for _ in range(steps):
                k1 = matrix @ vector
                k2 = matrix @ (vector + 0.5 * h * k1)
                k3 = matrix @ (vector + 0.5 * h * k2)
                k4 = matrix @ (vector + h * k3)
                vector = vector + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        now = target
        drift = abs(vector[diagonal].sum().real - trace0)
        if drift > drift_tol:
            raise StepSizeError(f"Trace drifted by {drift:.3e} at t={now:g}; reduce dt.")
        states.append(DensityMatrix.from_unnormalized(unvectorize(vector, L.n_max)))
    return states


def evolve(rho0, L, t_final, dt=None):
    return evolve_trajectory(rho0, L, [t_final], dt)[-1]


def liouvillian_gap(L, k=None, shift=None):
    """-Re λ₁ for the non-zero eigenvalue λ₁ of largest real part.

    Above DENSE_EIG_LIMIT only the ``k`` eigenvalues nearest the shift are
    searched, so a slow mode whose |λ| exceeds all of them (large imaginary
    part) is missed and the gap comes out too large; raise ``k`` to widen the
    search radius.
    """
    shift = get_setting("LIOUVILLIAN", "SHIFT", shift)
    if L.dim <= get_setting("LIOUVILLIAN", "DENSE_EIG_LIMIT"):
        values, _ = _dense_spectrum(L)
    else:
        k = min(get_setting("LIOUVILLIAN", "GAP_EIGENVALUES", k), L.dim - 2)
        try:
            values = eigs(L.matrix.tocsc(), k=k, sigma=shift, which="LM",
                          return_eigenvectors=False, v0=_start_vector(L.dim))
        except (ArpackNoConvergence, ArpackError) as exc:
            raise EigensolverError(f"Gap eigensolver did not converge: {exc}") from exc
        values = values[np.argsort(np.abs(values))]
    return max(0.0, float(-np.max(values[1:].real)))
