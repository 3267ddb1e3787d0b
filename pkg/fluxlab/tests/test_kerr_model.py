import math
from unittest import mock

import numpy as np
from django.test import SimpleTestCase, tag

from fluxlab.exceptions import EigensolverError, InsufficientPointsError
from fluxlab.kerr_model import (
    bistability_window,
    collapse_transform,
    estimate_eps_c,
    mean_field_curve,
    mean_field_eps,
    records_frame,
    sweep,
    turning_points_scan,
)
from fluxlab.liouvillian import converged_steady_state
from fluxlab.models import EntropyBudget, KerrParams, SweepRecord
from fluxlab.phase_space import entropy_budget
from fluxlab.signals import sweep_point_computed

KERR = KerrParams(delta=-2.0, u=1.0, kappa=0.5)


def synthetic_record(N, eps, Pi_u, Pi_d, gap=math.nan, n_mean=math.nan):
    budget = EntropyBudget(S=3.0, Phi_ext=0.0, Phi_q=Pi_u + Pi_d, Pi_u=Pi_u, Pi_d=Pi_d, alpha=0j, N=N)
    return SweepRecord(N=N, eps=eps, budget=budget, gap=gap, n_mean=n_mean)


def collapsing_records(eps_c, sizes=(10, 20), x=np.linspace(-3.0, 3.0, 31)):
    return [
        synthetic_record(N, eps_c * (1.0 + xi / N), math.exp(-xi ** 2), N * (1.0 + math.tanh(xi)))
        for N in sizes
        for xi in x
    ]


class BistabilityWindowTests(SimpleTestCase):
    def test_reference_window(self):
        window = bistability_window(KERR)
        self.assertAlmostEqual(window.n_plus, 1.9343, delta=1e-4)
        self.assertAlmostEqual(window.n_minus, 0.7324, delta=1e-4)
        self.assertAlmostEqual(window.eps_plus, 0.7014, delta=1e-4)
        self.assertAlmostEqual(window.eps_minus, 1.1662, delta=1e-4)
        self.assertGreater(window.eps_minus, window.eps_plus)
        self.assertTrue(window.contains(0.9))
        self.assertFalse(window.contains(1.3))

    def test_matches_dense_scan(self):
        window = bistability_window(KERR)
        extrema = turning_points_scan(KERR)
        self.assertEqual(len(extrema), 2)
        (n_low, eps_high), (n_high, eps_low) = extrema
        self.assertAlmostEqual(n_low, window.n_minus, delta=1e-3)
        self.assertAlmostEqual(n_high, window.n_plus, delta=1e-3)
        self.assertAlmostEqual(eps_high, window.eps_minus, delta=1e-4)
        self.assertAlmostEqual(eps_low, window.eps_plus, delta=1e-4)

    def test_no_window(self):
        self.assertIsNone(bistability_window(KerrParams(delta=-1.0, u=1.0, kappa=1.0)))
        self.assertIsNone(bistability_window(KerrParams(delta=2.0, u=1.0, kappa=0.5)))

    def test_degenerate_window(self):
        window = bistability_window(KerrParams(delta=-math.sqrt(3.0) * 0.5, u=1.0, kappa=0.5))
        self.assertTrue(window.is_degenerate)


class MeanFieldCurveTests(SimpleTestCase):
    def test_three_branches_inside_window(self):
        roots = mean_field_curve(KERR, 0.9)
        self.assertEqual(len(roots), 3)
        for n in roots:
            self.assertAlmostEqual(mean_field_eps(KERR, n), 0.9, places=9)

    def test_single_branch_outside_window(self):
        roots = mean_field_curve(KERR, 3.0)
        self.assertEqual(len(roots), 1)
        self.assertAlmostEqual(mean_field_eps(KERR, roots[0]), 3.0, places=9)

    def test_zero_drive(self):
        self.assertEqual(mean_field_curve(KERR, 0.0), [0.0])

    def test_negative_drive(self):
        with self.assertRaises(ValueError):
            mean_field_curve(KERR, -0.1)


class SweepTests(SimpleTestCase):
    def test_single_point_reproduces_budget(self):
        p = KERR.at(N=2, eps=0.9)
        records = sweep(KERR, [2], [0.9])
        self.assertEqual(len(records), 1)
        record = records[0]
        self.assertTrue(record.ok)
        rho = converged_steady_state(p).rho
        budget = entropy_budget(rho, p)
        self.assertAlmostEqual(record.budget.Pi_d, budget.Pi_d, places=10)
        self.assertAlmostEqual(record.budget.Pi_u, budget.Pi_u, places=10)
        self.assertAlmostEqual(record.budget.S, budget.S, places=10)
        self.assertGreater(record.gap, 0.0)
        self.assertGreaterEqual(record.n_max_used, 2)

    def test_failures_are_recorded(self):
        seen = []
        sweep_point_computed.connect(lambda sender, record, **kwargs: seen.append(record), weak=False,
                                     dispatch_uid="test_failures_are_recorded")
        self.addCleanup(sweep_point_computed.disconnect, dispatch_uid="test_failures_are_recorded")
        with mock.patch("fluxlab.kerr_model.converged_steady_state", side_effect=EigensolverError("no luck")):
            with self.assertLogs("fluxlab", "WARNING"):
                records = sweep(KERR, [1, 2], [0.8, 0.9], threads=2)
        self.assertEqual([(r.N, r.eps) for r in records], [(1, 0.8), (1, 0.9), (2, 0.8), (2, 0.9)])
        self.assertTrue(all(r.error == "no luck" for r in records))
        self.assertEqual(len(seen), 4)

    def test_on_record_sees_every_point(self):
        seen = []
        with mock.patch("fluxlab.kerr_model.converged_steady_state", side_effect=EigensolverError("x")):
            sweep(KERR, [3], [0.7, 0.8, 0.9], on_record=seen.append)
        self.assertEqual(sorted(r.eps for r in seen), [0.7, 0.8, 0.9])

    @tag("slow")
    def test_no_failures_across_the_transition(self):
        records = sweep(KERR, [10], np.linspace(0.65, 1.25, 10), threads=2)
        self.assertEqual([r.error for r in records if not r.ok], [])
        self.assertTrue(all(r.budget.balance_ok for r in records))

    @tag("slow")
    def test_reference_sweep_structure(self):
        records = sweep(KERR, [10, 20, 30], np.linspace(0.6, 1.3, 29), threads=2)
        self.assertTrue(all(r.ok for r in records))
        frame = records_frame(records)
        peaks, steepest = [], []
        for N, group in frame.groupby("N"):
            peak = group.loc[group["Pi_d"].idxmax(), "eps"]
            self.assertGreaterEqual(peak, 0.7014)
            self.assertLessEqual(peak, 1.1662)
            peaks.append((group["Pi_d"] / N).max())
            steepest.append(np.max(np.abs(np.gradient(group["Pi_u"], group["eps"]))))
        self.assertEqual(peaks, sorted(peaks))
        self.assertEqual(steepest, sorted(steepest))
        result = collapse_transform(records, estimate_eps_c(records))
        self.assertLess(result.metric, 0.1)


class CriticalDriveTests(SimpleTestCase):
    def test_gap_minimum(self):
        eps = np.linspace(0.8, 1.1, 31)
        records = [synthetic_record(10, e, 0.1, 1.0, gap=(e - 0.95) ** 2 + 0.01) for e in eps]
        self.assertAlmostEqual(estimate_eps_c(records), 0.95, places=9)

    def test_uses_largest_N(self):
        eps = np.linspace(0.8, 1.1, 31)
        records = [synthetic_record(10, e, 0.1, 1.0, gap=(e - 0.85) ** 2) for e in eps]
        records += [synthetic_record(20, e, 0.1, 1.0, gap=(e - 1.0) ** 2) for e in eps]
        self.assertAlmostEqual(estimate_eps_c(records), 1.0, places=9)

    def test_photon_number_slope(self):
        eps = np.linspace(0.8, 1.0, 21)
        records = [synthetic_record(10, e, 0.1, 1.0, n_mean=math.tanh((e - 0.9) / 0.02)) for e in eps]
        self.assertAlmostEqual(estimate_eps_c(records, method="n_mean_slope"), 0.9, delta=1e-3)

    def test_no_points(self):
        with self.assertRaises(InsufficientPointsError):
            estimate_eps_c([])

    def test_unknown_method(self):
        records = [synthetic_record(10, 0.9, 0.1, 1.0, gap=0.1)]
        with self.assertRaises(ValueError):
            estimate_eps_c(records, method="median")


class CollapseTests(SimpleTestCase):
    def test_scaling_curves_collapse(self):
        result = collapse_transform(collapsing_records(0.95), 0.95)
        self.assertLess(result.metric, 1e-9)
        self.assertEqual(list(result.pair_spreads), [(10, 20)])
        self.assertEqual(list(result.table.columns), ["x", "Pi_u", "Pi_d_over_N", "N"])

    def test_wrong_critical_drive_spreads_curves(self):
        records = collapsing_records(0.95)
        self.assertGreater(collapse_transform(records, 1.05 * 0.95).metric, 0.1)

    def test_metric_uses_largest_pair(self):
        records = collapsing_records(0.95, sizes=(10, 20))
        records += [synthetic_record(5, 0.95 * (1 + xi / 5), 0.0, 0.0) for xi in np.linspace(-3, 3, 31)]
        result = collapse_transform(records, 0.95)
        self.assertLess(result.metric, 1e-9)
        self.assertGreater(result.worst, 0.5)

    def test_single_size_is_undefined(self):
        with self.assertLogs("fluxlab.kerr_model", "WARNING"):
            result = collapse_transform(collapsing_records(0.95, sizes=(10,)), 0.95)
        self.assertIsNone(result.metric)

    def test_disjoint_ranges_are_undefined(self):
        records = [synthetic_record(10, 0.95 * (1 + xi / 10), 1.0, 1.0) for xi in np.linspace(-3, -1, 5)]
        records += [synthetic_record(20, 0.95 * (1 + xi / 20), 1.0, 1.0) for xi in np.linspace(1, 3, 5)]
        with self.assertLogs("fluxlab.kerr_model", "WARNING"):
            self.assertIsNone(collapse_transform(records, 0.95).metric)

    def test_rejects_bad_critical_drive(self):
        for eps_c in (0.0, -1.0, math.nan):
            with self.assertRaises(ValueError):
                collapse_transform(collapsing_records(0.95), eps_c)
