"""Husimi phase space: Q on a quadrature grid, Wehrl entropy and entropy rates.

Q(μ) = ⟨μ|ρ|μ⟩/π, and its derivative follows from

    ∂_μ̄ Q = -μ Q + ⟨μ|aρ|μ⟩/π,     ∂_μ Q = conj(∂_μ̄ Q),

so no finite differences enter any entropy rate. Integrals use the tensor
trapezoidal rule with measure d²μ = d Re μ d Im μ.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from django.core.exceptions import ValidationError

from .conf import get_setting
from .exceptions import MassDeficitError, QuadratureError, SingularExpansionError
from .fock_algebra import annihilation, coherent_matrix, expectation, number_operator
from .models import EntropyBudget, GridSpec

logger = logging.getLogger(__name__)

NODE_CHUNK = 8192


@dataclass(frozen=True, eq=False)
class PhaseSpaceGrid:
    center: complex
    half_width: float
    points_per_axis: int
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def spacing(self):
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def spec(self):
        return GridSpec(self.center, self.half_width, self.points_per_axis)


@dataclass(frozen=True, eq=False)
class PhaseSpaceField:
    grid: PhaseSpaceGrid
    Q: np.ndarray
    dQ_dmubar: np.ndarray

    @property
    def dQ_dmu(self):
        return np.conj(self.dQ_dmubar)

    @property
    def mass(self):
        return float(np.dot(self.grid.weights, self.Q))

    def current(self, kappa, shift=0j):
        """J = κ((μ - shift) Q + ∂_μ̄ Q); with shift = α√N this is J^ν."""
        return kappa * ((self.grid.nodes - shift) * self.Q + self.dQ_dmubar)

    def support(self, q_floor=None):
        """Mask of nodes kept in 1/Q integrals, and the Q-mass it drops."""
        q_floor = get_setting("PHASE_SPACE", "Q_FLOOR", q_floor)
        mask = self.Q > q_floor * self.Q.max()
        excluded = float(np.dot(self.grid.weights[~mask], self.Q[~mask]))
        return mask, excluded


@dataclass(frozen=True)
class NormalOrderedHamiltonian:
    """H₀ = N Σ h_rs (a†/√N)^r (a/√N)^s with intensive coefficients h_rs."""

    coefficients: dict

    def __post_init__(self):
        self.clean()

    def clean(self):
        for (r, s), value in self.coefficients.items():
            if int(r) != r or int(s) != s or r < 0 or s < 0:
                raise ValidationError(f"Powers must be non-negative integers, got {(r, s)}.")
            mirror = self.coefficients.get((s, r), 0.0)
            if abs(value - np.conj(mirror)) > 1e-12 * max(1.0, abs(value)):
                raise ValidationError(f"h_{r}{s} must equal conj(h_{s}{r}).")


@dataclass(frozen=True)
class UnitaryGeneratorCoefficients:
    xi1: complex
    xi2: complex
    xi11: complex


def build_grid(center, half_width, points_per_axis=None):
    points_per_axis = get_setting("PHASE_SPACE", "POINTS_PER_AXIS", points_per_axis)
    minimum = get_setting("PHASE_SPACE", "MIN_POINTS_PER_AXIS")
    if not (math.isfinite(half_width) and half_width > 0):
        raise ValidationError(f"half_width must be positive, got {half_width!r}.")
    if points_per_axis < minimum:
        raise ValidationError(f"points_per_axis must be at least {minimum}, got {points_per_axis}.")
    axis = np.linspace(-half_width, half_width, points_per_axis)
    step = axis[1] - axis[0]
    weights_1d = np.full(points_per_axis, step)
    weights_1d[[0, -1]] *= 0.5
    re, im = np.meshgrid(axis, axis, indexing="ij")
    nodes = complex(center) + (re + 1j * im).ravel()
    weights = np.outer(weights_1d, weights_1d).ravel()
    for array in (nodes, weights):
        array.setflags(write=False)
    return PhaseSpaceGrid(complex(center), float(half_width), int(points_per_axis), nodes, weights)


def grid_for_state(rho, points_per_axis=None, factor=None):
    """Centre at ⟨a⟩, half-width factor·max(1, √(⟨δa†δa⟩ + 1))."""
    factor = get_setting("PHASE_SPACE", "HALF_WIDTH_FACTOR", factor)
    a_mean = expectation(rho, annihilation(rho.dim))
    variance = expectation(rho, number_operator(rho.dim)).real - abs(a_mean) ** 2
    half_width = factor * max(1.0, math.sqrt(max(variance, 0.0) + 1.0))
    return build_grid(a_mean, half_width, points_per_axis)


def husimi_at(rho, nodes):
    """Q and ∂_μ̄Q at arbitrary nodes."""
    nodes = np.asarray(nodes, dtype=complex).ravel()
    entries = np.asarray(rho.entries)
    a_rho = annihilation(rho.dim).tocsr() @ entries
    q = np.empty(nodes.size)
    d_q = np.empty(nodes.size, dtype=complex)
    for start in range(0, nodes.size, NODE_CHUNK):
        block = slice(start, start + NODE_CHUNK)
        kets = coherent_matrix(nodes[block], rho.dim)
        bras = kets.conj()
        q[block] = np.einsum("ij,ij->i", bras @ entries, kets).real / np.pi
        d_q[block] = -nodes[block] * q[block] + np.einsum("ij,ij->i", bras @ a_rho, kets) / np.pi
    return q, d_q


def husimi_field(rho, grid, mass_tol=None):
    mass_tol = get_setting("PHASE_SPACE", "MASS_TOL", mass_tol)
    q, d_q = husimi_at(rho, grid.nodes)
    peak = q.max()
    if q.min() < -1e-10 * peak:
        raise QuadratureError(f"Husimi function is negative ({q.min():.3e}); state is not physical.")
    q = np.clip(q, 0.0, None)
    field = PhaseSpaceField(grid, q, d_q)
    mass = field.mass
    if mass < 1.0 - mass_tol:
        raise MassDeficitError(
            f"Grid holds only {mass:.8f} of the Husimi mass; enlarge half_width={grid.half_width:g}."
        )
    if mass > 1.0 + mass_tol:
        raise QuadratureError(f"Husimi mass {mass:.8f} exceeds 1; refine the grid.")
    return field


def covering_field(rho, points_per_axis=None, factor=None, growth=None, attempts=None):
    """Husimi field on the auto-placed grid, widened until it holds the mass.

    Each retry scales half_width and points_per_axis by ``growth``; the node
    spacing stays fixed.
    """
    growth = get_setting("PHASE_SPACE", "GRID_GROWTH", growth)
    attempts = get_setting("PHASE_SPACE", "GRID_ATTEMPTS", attempts)
    grid = grid_for_state(rho, points_per_axis, factor)
    for attempt in range(1, attempts + 1):
        try:
            return husimi_field(rho, grid)
        except MassDeficitError:
            if attempt == attempts:
                raise
            logger.warning("Husimi mass leaks past half_width=%g; widening the grid.", grid.half_width)
            grid = build_grid(grid.center, grid.half_width * growth,
                              math.ceil(grid.points_per_axis * growth))


def wehrl_entropy(f):
    positive = f.Q > 0
    q = f.Q[positive]
    return float(-np.dot(f.grid.weights[positive], q * np.log(q)))


def husimi_moment(f, r, s):
    """∫ μ^s μ̄^r Q d²μ = ⟨a^s a†^r⟩ (anti-normal order)."""
    mu = f.grid.nodes
    return complex(np.dot(f.grid.weights, mu ** s * np.conj(mu) ** r * f.Q))


def entropy_flux(rho, kappa):
    return 2.0 * kappa * expectation(rho, number_operator(rho.dim)).real


def flux_split(rho, kappa, N):
    """(Φ_ext, Φ_q) with Φ_ext = 2κN|α|², α = ⟨a⟩/√N."""
    phi = entropy_flux(rho, kappa)
    alpha = expectation(rho, annihilation(rho.dim)) / math.sqrt(N)
    phi_ext = 2.0 * kappa * N * abs(alpha) ** 2
    return phi_ext, phi - phi_ext


def pi_d(f, kappa, alpha, N, q_floor=None):
    """(2/κ)∫|J^ν|²/Q d²ν over the support of Q."""
    mask, _ = f.support(q_floor)
    current = f.current(kappa, shift=alpha * math.sqrt(N))[mask]
    return float((2.0 / kappa) * np.dot(f.grid.weights[mask], np.abs(current) ** 2 / f.Q[mask]))


def _real_or_fail(value, label):
    warn_tol = get_setting("PHASE_SPACE", "IMAG_WARN_TOL")
    fail_tol = get_setting("PHASE_SPACE", "IMAG_FAIL_TOL")
    residue = abs(value.imag)
    if residue > fail_tol:
        raise QuadratureError(f"{label} has imaginary residue {residue:.3e}.")
    if residue > warn_tol:
        logger.warning("%s has imaginary residue %.3e.", label, residue)
    return float(value.real), residue


def pi_u_kerr(f, u, N, q_floor=None, return_residue=False):
    """(iu/2N)∫ [μ²(∂_μQ)² - μ̄²(∂_μ̄Q)²]/Q d²μ."""
    mask, _ = f.support(q_floor)
    mu = f.grid.nodes[mask]
    d_bar = f.dQ_dmubar[mask]
    d = np.conj(d_bar)
    integrand = (mu ** 2 * d ** 2 - np.conj(mu) ** 2 * d_bar ** 2) / f.Q[mask]
    value = (1j * u / (2.0 * N)) * np.dot(f.grid.weights[mask], integrand)
    result, residue = _real_or_fail(value, "Kerr unitary production")
    if result < 0:
        logger.warning("Unitary production is negative (%.3e).", result)
    return (result, residue) if return_residue else result


def kerr_normal_ordered(p):
    """Kerr Hamiltonian plus pump in intensive normal-ordered form."""
    return NormalOrderedHamiltonian({
        (1, 1): complex(p.delta),
        (2, 2): complex(p.u / 2.0),
        (1, 0): 1j * p.eps,
        (0, 1): -1j * p.eps,
    })


def _series(H, alpha, powers):
    total = 0j
    for (r, s), h in H.coefficients.items():
        a_pow, abar_pow, weight = powers(r, s)
        if weight == 0:
            continue
        if alpha == 0 and (a_pow < 0 or abar_pow < 0):
            raise SingularExpansionError(f"Term h_{r}{s} needs a negative power of alpha = 0.")
        total += h * complex(alpha) ** a_pow * np.conj(complex(alpha)) ** abar_pow * weight
    return -1j * total


def xi_coefficients(H, alpha):
    return UnitaryGeneratorCoefficients(
        xi1=_series(H, alpha, lambda r, s: (s - 1, r, s)),
        xi2=_series(H, alpha, lambda r, s: (s - 2, r, s * (s - 1))),
        xi11=_series(H, alpha, lambda r, s: (s - 1, r - 1, r * s)),
    )


def pi_u_leading(f, xi, q_floor=None):
    """½∫ [ξ₂(∂_ν̄Q)² + ξ̄₂(∂_νQ)²]/Q d²ν; ∂_ν̄ = ∂_μ̄ so any grid centre works."""
    mask, _ = f.support(q_floor)
    d_bar = f.dQ_dmubar[mask]
    terms = xi.xi2 * d_bar ** 2 + np.conj(xi.xi2) * np.conj(d_bar) ** 2
    value = 0.5 * np.dot(f.grid.weights[mask], terms / f.Q[mask])
    return _real_or_fail(value, "Leading-order unitary production")[0]


def single_mode_husimi_covariance(rho):
    """Single-mode Σ_Q = σ + I/2 in quadratures q = (a + a†)/√2, p = i(a† - a)/√2."""
    a = annihilation(rho.dim)
    mean = expectation(rho, a)
    squared = expectation(rho, a @ a) - mean ** 2
    excess = expectation(rho, number_operator(rho.dim)).real - abs(mean) ** 2
    sigma = np.array([
        [squared.real + excess + 0.5, squared.imag],
        [squared.imag, -squared.real + excess + 0.5],
    ])
    return sigma + 0.5 * np.eye(2)


def gaussian_pi_d_single_mode(sigma_q, kappa):
    """κ[tr Σ_Q - 4 + tr Σ_Q⁻¹] for a single-mode Gaussian Husimi function."""
    return float(kappa * (np.trace(sigma_q) - 4.0 + np.trace(np.linalg.inv(sigma_q))))


def gaussian_pi_u_leading(sigma_q, xi2):
    precision = np.linalg.inv(sigma_q)
    moment = 0.5 * (precision[0, 0] - precision[1, 1] + 2j * precision[0, 1])
    return float((xi2 * moment).real)


def entropy_budget(rho, p, grid=None, balance_tol=None, field=None):
    """Full budget of one Kerr state; any state is accepted, dS/dt = Π - Φ.

    Without ``grid`` or ``field`` the grid is placed by ``covering_field``.
    """
    balance_tol = get_setting("PHASE_SPACE", "BALANCE_TOL", balance_tol)
    alpha = expectation(rho, annihilation(rho.dim)) / math.sqrt(p.N)
    phi_ext, phi_q = flux_split(rho, p.kappa, p.N)
    if field is None:
        field = covering_field(rho) if grid is None else husimi_field(rho, grid)
    _, excluded = field.support()
    pi_u, residue = pi_u_kerr(field, p.u, p.N, return_residue=True)
    budget = EntropyBudget(
        S=wehrl_entropy(field),
        Phi_ext=phi_ext,
        Phi_q=phi_q,
        Pi_u=pi_u,
        Pi_d=pi_d(field, p.kappa, alpha, p.N),
        alpha=complex(alpha),
        N=p.N,
        balance_tol=balance_tol,
        Pi_u_imag=residue,
        excluded_mass=excluded,
    )
    if not budget.balance_ok:
        logger.warning(
            "Entropy balance off by %.3e (tol %.1e) for %s; refine the grid.",
            budget.balance_residual, balance_tol, p,
        )
    return budget
