"""Kerr bistability: mean-field branches, the bistable window, ε-sweeps and collapse."""
import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from .conf import get_setting
from .exceptions import FluxlabError, InsufficientPointsError
from .liouvillian import converged_steady_state, liouvillian_gap, mean_photon_number
from .models import BistabilityWindow, SweepRecord
from .phase_space import covering_field, entropy_budget
from .signals import sweep_point_computed

logger = logging.getLogger(__name__)

COLLAPSE_COLUMNS = ("Pi_u", "Pi_d_over_N")


@dataclass(frozen=True, eq=False)
class CollapseResult:
    """Rescaled curves plus the spread between consecutive-N curves.

    ``metric`` is the spread between the two largest N (None when undefined);
    ``pair_spreads`` maps every consecutive (N₁, N₂) pair to its spread.
    """

    table: pd.DataFrame
    eps_c: float
    metric: Optional[float] = None
    pair_spreads: dict = field(default_factory=dict)

    @property
    def worst(self):
        defined = [value for value in self.pair_spreads.values() if value is not None]
        return max(defined) if defined else None


def mean_field_eps(p, n):
    """ε(n) = √(n[κ² + (Δ + n u)²]) on the intensive mean-field S-curve."""
    n = np.asarray(n, dtype=float)
    value = np.sqrt(n * (p.kappa ** 2 + (p.delta + n * p.u) ** 2))
    return float(value) if value.ndim == 0 else value


def bistability_window(p):
    """Turning points of the S-curve, or None when Δ ≥ 0 or Δ² < 3κ²."""
    discriminant = p.delta ** 2 - 3.0 * p.kappa ** 2
    if p.delta >= 0 or discriminant < -1e-12 * p.delta ** 2:
        return None
    root = math.sqrt(discriminant) if discriminant > 1e-12 * p.delta ** 2 else 0.0
    n_plus = (-2.0 * p.delta + root) / (3.0 * p.u)
    n_minus = (-2.0 * p.delta - root) / (3.0 * p.u)
    return BistabilityWindow(
        n_minus=n_minus,
        n_plus=n_plus,
        eps_minus=mean_field_eps(p, n_minus),
        eps_plus=mean_field_eps(p, n_plus),
    )


def mean_field_curve(p, eps):
    """Sorted real non-negative roots n of u²n³ + 2Δu n² + (Δ² + κ²) n - ε² = 0."""
    if eps < 0:
        raise ValueError(f"Drive must be non-negative, got {eps!r}.")
    if eps == 0:
        return [0.0]
    coefficients = [p.u ** 2, 2.0 * p.delta * p.u, p.delta ** 2 + p.kappa ** 2, -eps ** 2]
    cubic = np.poly1d(coefficients)
    slope = cubic.deriv()
    scale = max(1.0, eps ** 2)
    roots = []
    for root in np.roots(coefficients):
        if abs(root.imag) > 1e-6 * max(1.0, abs(root)):
            continue
        n = root.real
        for _ in range(50):
            derivative = slope(n)
            if derivative == 0:
                break
            step = cubic(n) / derivative
            n -= step
            if abs(step) < 1e-15 * max(1.0, abs(n)):
                break
        if n >= 0 and abs(cubic(n)) < 1e-10 * scale:
            roots.append(float(n))
    roots.sort()
    unique = []
    for n in roots:
        if not unique or n - unique[-1] > 1e-9 * max(1.0, n):
            unique.append(n)
    return unique


def turning_points_scan(p, n_upper=None, points=200_001):
    """Local extrema of ε(n) found by scanning a dense n grid; [(n, ε), ...]."""
    if n_upper is None:
        n_upper = 3.0 * max(abs(p.delta), p.kappa) / p.u + 1.0
    n = np.linspace(0.0, n_upper, points)
    eps = mean_field_eps(p, n)
    change = np.diff(np.sign(np.diff(eps)))
    extrema = np.flatnonzero(change != 0) + 1
    return [(float(n[i]), float(eps[i])) for i in extrema]


def _sweep_point(p, n_max=None, points_per_axis=None, balance_tol=None):
    start = time.perf_counter()
    try:
        solution = converged_steady_state(p, n_max)
        rho = solution.rho
        field = covering_field(rho, points_per_axis)
        budget = entropy_budget(rho, p, balance_tol=balance_tol, field=field)
        gap = liouvillian_gap(solution.liouvillian)
    except FluxlabError as exc:
        logger.warning("Sweep point %s failed: %s", p, exc)
        return SweepRecord(N=p.N, eps=p.eps, wall_time_s=time.perf_counter() - start, error=str(exc))
    return SweepRecord(
        N=p.N,
        eps=p.eps,
        budget=budget,
        gap=gap,
        n_mean=mean_photon_number(rho) / p.N,
        n_max_used=solution.n_max,
        grid=field.grid.spec,
        residual=solution.residual,
        cutoff_drift=solution.cutoff_drift,
        wall_time_s=time.perf_counter() - start,
    )


def sweep(p_base, N_list=None, eps_grid=(), threads=1, n_max=None, points_per_axis=None,
          balance_tol=None, on_record=None):
    """Budget, gap and photon number at every (N, ε); failures are recorded, not raised.

    ``on_record`` is called from the calling thread as points complete, in
    completion order; the returned list is sorted by (N, ε).
    """
    N_list = get_setting("KERR", "N_LIST", N_list)
    window = bistability_window(p_base)
    if window is not None:
        outside = [eps for eps in eps_grid
                   if not 0.5 * window.eps_low <= eps <= 1.5 * window.eps_high]
        if outside:
            logger.warning("%d drives lie outside [%.4g, %.4g].", len(outside),
                           0.5 * window.eps_low, 1.5 * window.eps_high)

    jobs = [p_base.at(N=N, eps=eps) for N, eps in itertools.product(N_list, eps_grid)]
    records = []
    with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
        futures = [pool.submit(_sweep_point, p, n_max, points_per_axis, balance_tol) for p in jobs]
        for future in as_completed(futures):
            record = future.result()
            records.append(record)
            sweep_point_computed.send(sender=sweep, record=record, total=len(jobs))
            if on_record is not None:
                on_record(record)
    return sorted(records, key=lambda r: (r.N, r.eps))


def records_frame(records):
    """SweepRecords (or an already loaded results table) as N, eps, gap, n_mean, Pi_u, Pi_d."""
    if isinstance(records, pd.DataFrame):
        frame = records.copy()
        if "n_mean" not in frame:
            frame["n_mean"] = np.nan
        return frame
    rows = [
        {
            "N": r.N, "eps": r.eps, "gap": r.gap, "n_mean": r.n_mean,
            "Pi_u": r.budget.Pi_u, "Pi_d": r.budget.Pi_d,
        }
        for r in records if r.ok
    ]
    return pd.DataFrame(rows, columns=["N", "eps", "gap", "n_mean", "Pi_u", "Pi_d"])


def estimate_eps_c(records, method="gap"):
    """ε_c at the largest available N: gap minimum, or the peak of d⟨n⟩/dε."""
    frame = records_frame(records).dropna(subset=["eps"])
    if frame.empty:
        raise InsufficientPointsError("No usable sweep points to locate eps_c.")
    largest = frame[frame["N"] == frame["N"].max()].sort_values("eps")
    eps = largest["eps"].to_numpy()
    if method == "gap":
        score = -largest["gap"].to_numpy()
    elif method == "n_mean_slope":
        if len(largest) < 3:
            raise InsufficientPointsError("Need at least three drives for the slope estimator.")
        score = np.gradient(largest["n_mean"].to_numpy(), eps)
    else:
        raise ValueError(f"Unknown eps_c estimator {method!r}.")
    if np.all(np.isnan(score)):
        raise InsufficientPointsError(f"Estimator {method!r} has no finite values.")
    i = int(np.nanargmax(score))
    if 0 < i < len(eps) - 1 and np.all(np.isfinite(score[i - 1:i + 2])):
        # vertex of the parabola through the three points around the extremum
        a, b, _ = np.polyfit(eps[i - 1:i + 2], score[i - 1:i + 2], 2)
        if a < 0:
            return float(np.clip(-b / (2.0 * a), eps[i - 1], eps[i + 1]))
    return float(eps[i])


def _pair_spread(left, right, column):
    lo = max(left["x"].min(), right["x"].min())
    hi = min(left["x"].max(), right["x"].max())
    if not hi > lo:
        return None
    xs = np.union1d(left["x"], right["x"])
    xs = xs[(xs >= lo) & (xs <= hi)]
    a = np.interp(xs, left["x"], left[column])
    b = np.interp(xs, right["x"], right[column])
    peak = max(left[column].abs().max(), right[column].abs().max())
    if peak == 0:
        return 0.0
    return float(np.max(np.abs(a - b)) / peak)


def collapse_transform(records, eps_c):
    """x = N(ε/ε_c - 1) against Π_u and Π_d/N, with the collapse-quality metric."""
    if not (math.isfinite(eps_c) and eps_c > 0):
        raise ValueError(f"eps_c must be positive, got {eps_c!r}.")
    frame = records_frame(records)
    table = pd.DataFrame({
        "x": frame["N"] * (frame["eps"] / eps_c - 1.0),
        "Pi_u": frame["Pi_u"],
        "Pi_d_over_N": frame["Pi_d"] / frame["N"],
        "N": frame["N"].astype(int),
    }).sort_values(["N", "x"], ignore_index=True)

    curves = {N: group for N, group in table.groupby("N")}
    sizes = sorted(curves)
    spreads = {}
    for small, large in zip(sizes, sizes[1:]):
        values = [_pair_spread(curves[small], curves[large], column) for column in COLLAPSE_COLUMNS]
        spreads[(small, large)] = None if None in values else max(values)
    metric = spreads[(sizes[-2], sizes[-1])] if len(sizes) >= 2 else None
    if metric is None:
        logger.warning("Collapse metric undefined (N values: %s).", sizes)
    return CollapseResult(table=table, eps_c=float(eps_c), metric=metric, pair_spreads=spreads)
