"""Gaussianised open Dicke model: mean field, Holstein-Primakoff fluctuations,
Lyapunov steady state and the closed-form Husimi entropy budget.

Fluctuation quadratures are ordered R = (δq_b, δp_b, δq_a, δp_a), with
δq = (δc + δc†)/√2 and δp = i(δc† - δc)/√2. The Husimi covariance is
Σ_Q = σ + I/2 and P = Σ_Q⁻¹. In these coordinates Q_μ = 4·p_R.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
from scipy.stats import multivariate_normal

from .conf import get_setting
from .exceptions import (
    FluxlabError,
    InsufficientPointsError,
    InvalidCovarianceError,
    SingularBranchError,
    UnstableSystemError,
)
from .models import DickeBudget, DickeScanPoint, HPCoefficients, MeanFieldState
from .signals import sweep_point_computed

logger = logging.getLogger(__name__)

SYMPLECTIC_FORM = np.kron(np.eye(2), np.array([[0.0, 1.0], [-1.0, 0.0]]))
SPIN, CAVITY = slice(0, 2), slice(2, 4)


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    sigma: np.ndarray
    residual: float = 0.0

    def __post_init__(self):
        sigma = np.array(self.sigma, dtype=float)
        sigma.setflags(write=False)
        object.__setattr__(self, "sigma", sigma)
        if sigma.shape != (4, 4):
            raise InvalidCovarianceError(f"Covariance must be 4x4, got {sigma.shape}.")
        if np.max(np.abs(sigma - sigma.T)) > 1e-12 * max(1.0, np.max(np.abs(sigma))):
            raise InvalidCovarianceError("Covariance matrix is not symmetric.")

    @property
    def cavity_excess(self):
        """⟨δa†δa⟩ = (σ₃₃ + σ₄₄ - 1)/2."""
        return 0.5 * (self.sigma[2, 2] + self.sigma[3, 3] - 1.0)


@dataclass(frozen=True)
class MonteCarloEstimate:
    samples: int
    S: float
    S_se: float
    Pi_d: float
    Pi_d_se: float
    Pi_u: float
    Pi_u_se: float


@dataclass(frozen=True)
class SideFit:
    slope: float
    stderr: float
    intercept: float
    n_points: int


@dataclass(frozen=True)
class DivergenceFit:
    lambda_c: float
    window: tuple
    core: Optional[float]
    left: Optional[SideFit] = None
    right: Optional[SideFit] = None
    warnings: tuple = ()


@dataclass(frozen=True)
class KinkReport:
    lambda_c: float
    step: float
    left_slope: float
    right_slope: float
    left_error: float
    right_error: float
    jump: float
    jump_bound: float
    values: dict = field(default_factory=dict)

    @property
    def is_kink(self):
        return abs(self.left_slope - self.right_slope) > 10.0 * (self.left_error + self.right_error)

    @property
    def is_continuous(self):
        return self.jump <= self.jump_bound


def critical_coupling(p):
    """λ_c = ½√((ω₀/ω)(κ² + ω²))."""
    return 0.5 * math.sqrt((p.omega0 / p.omega) * (p.kappa ** 2 + p.omega ** 2))


def gamma_core(p):
    """Relative half-width |λ/λ_c - 1| of the region rounded by the spin loss γ."""
    return get_setting("DICKE", "CORE_FACTOR") * p.gamma / p.kappa


def mean_field_rhs(alpha, beta, w, p):
    """(dα/dt, dβ/dt, dw/dt) of the intensive mean-field equations."""
    alpha, beta = complex(alpha), complex(beta)
    quadrature = alpha + alpha.conjugate()
    d_alpha = -(p.kappa + 1j * p.omega) * alpha - 1j * p.lam * (beta + beta.conjugate())
    d_beta = -1j * p.omega0 * beta + 2j * p.lam * quadrature * w
    d_w = 1j * p.lam * quadrature * (beta - beta.conjugate())
    return d_alpha, d_beta, d_w.real


def mean_field_fixed_point(p):
    """Downward-spin fixed point; the ordered branch for λ > λ_c."""
    lambda_c = critical_coupling(p)
    if p.lam > lambda_c:
        ratio = (lambda_c / p.lam) ** 2
        beta = 0.5 * math.sqrt(1.0 - ratio ** 2)
        w = -0.5 * ratio
        alpha = -2j * p.lam * beta / (p.kappa + 1j * p.omega)
    else:
        beta, w, alpha = 0.0, -0.5, 0j
    residual = max(abs(value) for value in mean_field_rhs(alpha, beta, w, p))
    return MeanFieldState(alpha=complex(alpha), beta=complex(beta), w=w, residual=residual)


def hp_coefficients(mf, p):
    beta = mf.beta.real
    if abs(beta) > 0.5:
        raise SingularBranchError(f"|beta|={abs(beta):.6g} exceeds 1/2; no Holstein-Primakoff branch.")
    root = math.sqrt(max(0.0, 1.0 - 4.0 * beta ** 2))
    minus = math.sqrt(max(0.0, (1.0 - root) / 2.0))
    plus = math.sqrt((1.0 + root) / 2.0)
    if plus < 1e-12:
        raise SingularBranchError("beta_tilde_plus vanishes; the spin is fully inverted.")
    quadrature = 2.0 * mf.alpha.real
    ratio = minus / plus
    return HPCoefficients(
        beta_tilde_minus=minus,
        beta_tilde_plus=plus,
        omega0_tilde=p.omega0 - p.lam * quadrature * ratio,
        lambda_tilde=p.lam * plus * (1.0 - ratio ** 2),
        zeta=0.5 * p.lam * quadrature * ratio * (1.0 + 0.5 * ratio ** 2),
    )


def drift_diffusion(hp, p):
    g, k = p.gamma, p.kappa
    w0, lt, z = hp.omega0_tilde, hp.lambda_tilde, hp.zeta
    A = np.array([
        [-g, w0, 0.0, 0.0],
        [4.0 * z - w0, -g, -2.0 * lt, 0.0],
        [0.0, 0.0, -k, p.omega],
        [-2.0 * lt, 0.0, -p.omega, -k],
    ])
    return A, np.diag([g, g, k, k])


def solve_lyapunov(A, D):
    """σ with Aσ + σAᵀ + D = 0 for Hurwitz A."""
    margin = get_setting("DICKE", "HURWITZ_MARGIN")
    eigenvalues = np.linalg.eigvals(A)
    worst = eigenvalues[np.argmax(eigenvalues.real)]
    if worst.real >= -margin:
        raise UnstableSystemError(
            f"Drift matrix is not Hurwitz: eigenvalue {worst:.6g}.", eigenvalue=complex(worst)
        )
    sigma = scipy.linalg.solve_continuous_lyapunov(A, -D)
    sigma = 0.5 * (sigma + sigma.T)
    scale = max(1.0, np.linalg.norm(sigma))
    residual = float(np.linalg.norm(A @ sigma + sigma @ A.T + D) / scale)
    if residual > get_setting("DICKE", "LYAPUNOV_TOL"):
        raise InvalidCovarianceError(f"Lyapunov residual {residual:.3e} is too large.")
    lowest = np.linalg.eigvalsh(sigma + 0.5j * SYMPLECTIC_FORM)[0]
    if lowest < -get_setting("DICKE", "PHYSICALITY_TOL") * scale:
        raise InvalidCovarianceError(f"Covariance violates the uncertainty relation ({lowest:.3e}).")
    logger.debug("Lyapunov solve: residual %.3e, max Re eig %.3e.", residual, worst.real)
    return CovarianceMatrix(sigma, residual)


def husimi_covariance(cov):
    sigma_q = cov.sigma + 0.5 * np.eye(4)
    try:
        np.linalg.cholesky(sigma_q)
    except np.linalg.LinAlgError as exc:
        raise InvalidCovarianceError("Husimi covariance is not positive definite.") from exc
    return sigma_q


def unitary_drift_diffusion(A, p):
    """Traceless Hamiltonian drift A_u and the Husimi diffusion K_u = -(A_u + A_uᵀ)/2."""
    A_u = A + np.diag([p.gamma, p.gamma, p.kappa, p.kappa])
    return A_u, -0.5 * (A_u + A_u.T)


def _channel_production(rate, sigma_q, precision, block):
    return rate * (np.trace(sigma_q[block, block]) - 4.0 + np.trace(precision[block, block]))


def _non_negative(value, label):
    if value < 0:
        if value < -1e-10 * max(1.0, abs(value)):
            raise InvalidCovarianceError(f"{label} is negative ({value:.3e}).")
        return 0.0
    return float(value)


def gaussian_budget(sigma, hp, p, mf, N=1):
    """Closed-form budget of the Gaussian Husimi function; a channel headline, b channel aside."""
    sigma_q = husimi_covariance(sigma)
    precision = np.linalg.inv(sigma_q)
    A, _ = drift_diffusion(hp, p)
    _, K_u = unitary_drift_diffusion(A, p)
    sign, logdet = np.linalg.slogdet(sigma_q)
    if sign <= 0:
        raise InvalidCovarianceError("Husimi covariance has non-positive determinant.")

    budget = DickeBudget(
        S=2.0 * (1.0 + math.log(math.pi)) + 0.5 * logdet,
        Phi_ext=2.0 * p.kappa * N * abs(mf.alpha) ** 2,
        Phi_q=_non_negative(p.kappa * (sigma_q[2, 2] + sigma_q[3, 3] - 2.0), "Cavity flux"),
        Pi_u=0.5 * float(np.trace(K_u @ precision)),
        Pi_d=_non_negative(_channel_production(p.kappa, sigma_q, precision, CAVITY), "Cavity production"),
        alpha=mf.alpha,
        N=N,
        Pi_d_b=_non_negative(_channel_production(p.gamma, sigma_q, precision, SPIN), "Spin production"),
        Phi_q_b=_non_negative(p.gamma * (sigma_q[0, 0] + sigma_q[1, 1] - 2.0), "Spin flux"),
    )
    if budget.full_balance_residual > 1e-6:
        logger.warning("Gaussian balance off by %.3e at lambda=%g.", budget.full_balance_residual, p.lam)
    return budget


def monte_carlo_oracle(sigma, hp, p, samples=10 ** 6, seed=0, chunk=None):
    """Sample the defining integrals of S, Π_d and Π_u from the Gaussian Q itself.

    Each chunk draws from its own Philox stream spawned from ``seed``, so the
    estimate does not depend on how the chunks are scheduled.
    """
    chunk = get_setting("DICKE", "MC_CHUNK", chunk)
    sigma_q = husimi_covariance(sigma)
    precision = np.linalg.inv(sigma_q)
    A, _ = drift_diffusion(hp, p)
    _, K_u = unitary_drift_diffusion(A, p)
    factor = np.linalg.cholesky(sigma_q)
    density = multivariate_normal(mean=np.zeros(4), cov=sigma_q)

    sizes = [min(chunk, samples - start) for start in range(0, samples, chunk)]
    streams = np.random.SeedSequence(seed).spawn(len(sizes))
    totals = np.zeros((3, 2))
    for size, stream in zip(sizes, streams):
        rng = np.random.Generator(np.random.Philox(stream))
        r = rng.standard_normal((size, 4)) @ factor.T
        grad = -r @ precision
        entropy = -(density.logpdf(r) + 2.0 * math.log(2.0))
        nu = (r[:, 2] + 1j * r[:, 3]) / math.sqrt(2.0)
        dlnq_dnubar = (grad[:, 2] + 1j * grad[:, 3]) / math.sqrt(2.0)
        dissipative = 2.0 * p.kappa * np.abs(nu + dlnq_dnubar) ** 2
        unitary = 0.5 * np.einsum("ij,jk,ik->i", grad, K_u, grad)
        for row, values in enumerate((entropy, dissipative, unitary)):
            totals[row] += values.sum(), np.square(values).sum()

    means = totals[:, 0] / samples
    errors = np.sqrt(np.maximum(totals[:, 1] / samples - means ** 2, 0.0) / (samples - 1))
    return MonteCarloEstimate(samples, means[0], errors[0], means[1], errors[1], means[2], errors[2])


def dicke_point(p, N=1):
    """Mean field to budget for one coupling; failures land in ``error``."""
    start = time.perf_counter()
    mf = hp = cov = None
    try:
        mf = mean_field_fixed_point(p)
        hp = hp_coefficients(mf, p)
        A, D = drift_diffusion(hp, p)
        cov = solve_lyapunov(A, D)
        budget = gaussian_budget(cov, hp, p, mf, N)
    except FluxlabError as exc:
        logger.warning("Dicke point lambda=%g failed: %s", p.lam, exc)
        return DickeScanPoint(lam=p.lam, mean_field=mf, hp=hp, covariance=cov,
                              wall_time_s=time.perf_counter() - start, error=str(exc))
    return DickeScanPoint(
        lam=p.lam, mean_field=mf, hp=hp, covariance=cov, budget=budget,
        wall_time_s=time.perf_counter() - start,
        extras={"lambda_c": critical_coupling(p), "max_re_eig": float(np.max(np.linalg.eigvals(A).real))},
    )


def scan(p_base, lambda_grid, N=1, threads=1, on_record=None):
    """``dicke_point`` over a λ grid, sorted by λ."""
    jobs = [p_base.at(lam) for lam in lambda_grid]
    points = []
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        for point in pool.map(dicke_point, jobs, [N] * len(jobs)):
            points.append(point)
            sweep_point_computed.send(sender=scan, record=point, total=len(jobs))
            if on_record is not None:
                on_record(point)
    return sorted(points, key=lambda point: point.lam)


def _fit_side(lam, values, lambda_c, lo, hi, side):
    distance = np.abs(lam / lambda_c - 1.0)
    on_side = lam < lambda_c if side == "left" else lam > lambda_c
    keep = on_side & (distance >= lo) & (distance <= hi) & np.isfinite(values) & (values > 0)
    minimum = get_setting("DICKE", "MIN_FIT_POINTS")
    if keep.sum() < minimum:
        raise InsufficientPointsError(
            f"Only {int(keep.sum())} points on the {side} of lambda_c inside [{lo}, {hi}]; need {minimum}."
        )
    x = np.log10(np.abs(lambda_c - lam[keep]))
    y = np.log10(values[keep])
    (slope, intercept), cov = np.polyfit(x, y, 1, cov=True)
    return SideFit(float(slope), float(math.sqrt(max(cov[0, 0], 0.0))), float(intercept), int(keep.sum()))


def fit_divergence(lam, values, lambda_c, window=None, core=None, sides=("left", "right")):
    """Log-log slope of ``values`` against |λ_c - λ| on each side of λ_c."""
    lo, hi = get_setting("DICKE", "DIVERGENCE_WINDOW", window)
    if not 0 <= lo < hi:
        raise ValueError(f"Window must satisfy 0 <= lo < hi, got {(lo, hi)}.")
    lam = np.asarray(lam, dtype=float)
    values = np.asarray(values, dtype=float)
    notes = []
    if core is not None and lo < core:
        notes.append(f"window edge {lo:g} lies inside the gamma-rounded core ({core:.3g})")
        logger.warning("Divergence window starts at %g, inside the gamma core %.3g.", lo, core)
    fits = {side: _fit_side(lam, values, lambda_c, lo, hi, side) for side in sides}
    return DivergenceFit(lambda_c, (lo, hi), core, fits.get("left"), fits.get("right"), tuple(notes))


def divergence_scan(p_base, lambda_grid, window=None, N=1, threads=1):
    """Fit Π_d ∝ |λ_c - λ|^slope over a λ grid on both sides of λ_c."""
    points = [point for point in scan(p_base, lambda_grid, N, threads) if point.ok]
    lam = np.array([point.lam for point in points])
    pi_d = np.array([point.budget.Pi_d for point in points])
    return fit_divergence(lam, pi_d, critical_coupling(p_base), window, gamma_core(p_base))


def _unitary_production(p):
    point = dicke_point(p)
    if not point.ok:
        raise UnstableSystemError(f"No steady state at lambda={p.lam:g}: {point.error}")
    return point.budget.Pi_u


def kink_detector(p_base, lambda_grid=None, step=2e-4, points_per_side=5):
    """One-sided slopes of Π_u at λ_c and the continuity of Π_u across it.

    The default grid is λ_c(1 + k·step) for |k| ≤ points_per_side; a supplied
    grid must be uniform and contain λ_c.
    """
    lambda_c = critical_coupling(p_base)
    if lambda_grid is None:
        offsets = np.arange(-points_per_side, points_per_side + 1)
        lambda_grid = lambda_c * (1.0 + step * offsets)
        lambda_grid[points_per_side] = lambda_c
    lambda_grid = np.sort(np.asarray(lambda_grid, dtype=float))
    centre = int(np.argmin(np.abs(lambda_grid - lambda_c)))
    if not math.isclose(lambda_grid[centre], lambda_c, rel_tol=1e-12):
        raise ValueError("The kink grid must contain lambda_c.")
    if centre < 2 or centre > len(lambda_grid) - 3:
        raise InsufficientPointsError("Need at least two points on each side of lambda_c.")
    h = lambda_grid[centre + 1] - lambda_grid[centre]

    values = {lam: _unitary_production(p_base.at(lam)) for lam in lambda_grid}
    f = np.array([values[lam] for lam in lambda_grid])
    c = centre
    left_first = (f[c] - f[c - 1]) / h
    left_second = (3.0 * f[c] - 4.0 * f[c - 1] + f[c - 2]) / (2.0 * h)
    right_first = (f[c + 1] - f[c]) / h
    right_second = (-3.0 * f[c] + 4.0 * f[c + 1] - f[c + 2]) / (2.0 * h)
    left_error = abs(left_first - left_second)
    right_error = abs(right_first - right_second)

    # value at λ_c extrapolated linearly from each side
    from_left = 2.0 * f[c - 1] - f[c - 2]
    from_right = 2.0 * f[c + 1] - f[c + 2]
    jump = max(abs(from_left - f[c]), abs(from_right - f[c]))
    jump_bound = h * (abs(left_second) + abs(right_second)) + h * (left_error + right_error)
    report = KinkReport(
        lambda_c=lambda_c, step=h,
        left_slope=float(left_second), right_slope=float(right_second),
        left_error=float(left_error), right_error=float(right_error),
        jump=float(jump), jump_bound=float(jump_bound), values=values,
    )
    logger.info(
        "Pi_u slopes at lambda_c: left %.6g, right %.6g (errors %.2e, %.2e).",
        report.left_slope, report.right_slope, left_error, right_error,
    )
    return report
