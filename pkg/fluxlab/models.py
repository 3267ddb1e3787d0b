"""Value types shared by the numerical modules and the batch layer.

Nothing here is persisted; the types validate themselves in ``clean()`` the
way form-backed models do and are immutable once constructed.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

from django.core.exceptions import ValidationError

from .conf import get_setting
from .exceptions import NonFiniteParameterError

logger = logging.getLogger(__name__)


def _require_finite(owner, **values):
    for name, value in values.items():
        if not math.isfinite(value):
            raise NonFiniteParameterError(f"{owner}.{name} must be finite, got {value!r}.")


@dataclass(frozen=True)
class KerrParams:
    """Driven Kerr cavity: H0 = Δ a†a + (u/2N) a†a†aa, pump ε√N, loss 2κ."""

    delta: float
    u: float
    kappa: float
    eps: float = 0.0
    N: int = 1

    def __post_init__(self):
        self.clean()

    def clean(self):
        _require_finite("KerrParams", delta=self.delta, u=self.u, kappa=self.kappa, eps=self.eps)
        if self.kappa <= 0:
            raise ValidationError("Loss rate kappa must be positive.")
        if self.u <= 0:
            raise ValidationError("Nonlinearity u must be positive.")
        if self.eps < 0:
            raise ValidationError("Intensive drive eps cannot be negative.")
        if int(self.N) != self.N or self.N < 1:
            raise ValidationError("Scale parameter N must be a positive integer.")

    @property
    def drive(self):
        return self.eps * math.sqrt(self.N)

    def at(self, N=None, eps=None):
        return replace(
            self,
            N=self.N if N is None else int(N),
            eps=self.eps if eps is None else float(eps),
        )

    def __str__(self):
        return f"Kerr(Δ={self.delta}, u={self.u}, κ={self.kappa}, ε={self.eps}, N={self.N})"


@dataclass(frozen=True)
class DickeParams:
    """Open Dicke model with stabilising loss ``gamma`` on the spin mode."""

    omega0: float
    omega: float
    kappa: float
    lam: float = 0.0
    gamma: float = 1e-3

    def __post_init__(self):
        self.clean()

    def clean(self):
        _require_finite(
            "DickeParams", omega0=self.omega0, omega=self.omega,
            kappa=self.kappa, lam=self.lam, gamma=self.gamma,
        )
        if self.omega0 <= 0 or self.omega <= 0:
            raise ValidationError("Frequencies omega0 and omega must be positive.")
        if self.kappa < 0:
            raise ValidationError("Cavity loss kappa cannot be negative.")
        if self.lam < 0:
            raise ValidationError("Coupling lambda cannot be negative.")
        if self.gamma <= 0:
            raise ValidationError("Stabilising loss gamma must be positive.")
        ratio = get_setting("DICKE", "GAMMA_WARN_RATIO")
        if self.gamma > ratio * self.kappa:
            logger.warning(
                "gamma=%g exceeds %g*kappa=%g; the stabiliser will visibly round the transition.",
                self.gamma, ratio, ratio * self.kappa,
            )

    def at(self, lam):
        return replace(self, lam=float(lam))


@dataclass(frozen=True)
class EntropyBudget:
    """Entropy rates of one state: Π = Π_ext + Π_u + Π_d and Φ = Φ_ext + Φ_q."""

    S: float
    Phi_ext: float
    Phi_q: float
    Pi_u: float
    Pi_d: float
    alpha: complex
    N: int
    balance_tol: float = 1e-2
    Pi_u_imag: float = 0.0
    excluded_mass: float = 0.0

    def __post_init__(self):
        self.clean()

    def clean(self):
        if self.Pi_d < 0:
            raise ValidationError(f"Dissipative production must be non-negative, got {self.Pi_d}.")
        if self.Phi_ext < 0:
            raise ValidationError(f"Extensive flux must be non-negative, got {self.Phi_ext}.")

    @property
    def Pi_ext(self):
        # The extensive production and flux are one quantity.
        return self.Phi_ext

    @property
    def Phi(self):
        return self.Phi_ext + self.Phi_q

    @property
    def Pi(self):
        return self.Pi_ext + self.Pi_u + self.Pi_d

    @property
    def dSdt(self):
        return self.Pi - self.Phi

    @property
    def balance_residual(self):
        """Relative mismatch of Π_u + Π_d against Φ_q."""
        return abs(self.Pi_u + self.Pi_d - self.Phi_q) / max(self.Phi_q, 1e-12)

    @property
    def balance_ok(self):
        return self.balance_residual < self.balance_tol


@dataclass(frozen=True)
class DickeBudget(EntropyBudget):
    """Gaussian Dicke budget; headline terms are the cavity (a) channel."""

    Pi_d_b: float = 0.0
    Phi_q_b: float = 0.0

    @property
    def full_balance_residual(self):
        """Relative mismatch of Π_u + Π_d,a + Π_d,b against Φ_q,a + Φ_q,b."""
        flux = self.Phi_q + self.Phi_q_b
        return abs(self.Pi_u + self.Pi_d + self.Pi_d_b - flux) / max(flux, 1e-12)


@dataclass(frozen=True)
class BistabilityWindow:
    n_minus: float
    n_plus: float
    eps_minus: float
    eps_plus: float

    def __post_init__(self):
        self.clean()

    def clean(self):
        if not 0 < self.n_minus <= self.n_plus:
            raise ValidationError("Window requires 0 < n_minus <= n_plus.")
        if self.eps_minus <= 0 or self.eps_plus <= 0:
            raise ValidationError("Window edges must be positive.")

    @property
    def eps_low(self):
        return min(self.eps_minus, self.eps_plus)

    @property
    def eps_high(self):
        return max(self.eps_minus, self.eps_plus)

    @property
    def is_degenerate(self):
        return self.n_minus == self.n_plus

    def contains(self, eps):
        return self.eps_low < eps < self.eps_high


@dataclass(frozen=True)
class GridSpec:
    center: complex
    half_width: float
    points_per_axis: int


@dataclass(frozen=True)
class SweepRecord:
    """One (N, ε) point of a Kerr sweep; ``error`` is set when the point failed."""

    N: int
    eps: float
    budget: Optional[EntropyBudget] = None
    gap: float = math.nan
    n_mean: float = math.nan
    n_max_used: int = 0
    grid: Optional[GridSpec] = None
    residual: float = math.nan
    cutoff_drift: float = math.nan
    wall_time_s: float = 0.0
    error: Optional[str] = None

    @property
    def ok(self):
        return self.error is None


@dataclass(frozen=True)
class MeanFieldState:
    alpha: complex
    beta: complex
    w: float
    residual: float = 0.0

    def __post_init__(self):
        self.clean()

    def clean(self):
        if abs(self.w ** 2 + abs(self.beta) ** 2 - 0.25) > 1e-12:
            raise ValidationError("Mean-field spin must satisfy w² + |β|² = 1/4.")


@dataclass(frozen=True)
class HPCoefficients:
    beta_tilde_minus: float
    beta_tilde_plus: float
    omega0_tilde: float
    lambda_tilde: float
    zeta: float


@dataclass(frozen=True)
class DickeScanPoint:
    """One λ of a Dicke scan, with everything the pipeline produced for it."""

    lam: float
    mean_field: Optional[MeanFieldState] = None
    hp: Optional[HPCoefficients] = None
    covariance: Optional[object] = None
    budget: Optional[DickeBudget] = None
    wall_time_s: float = 0.0
    error: Optional[str] = None
    extras: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.error is None
