import copy
import math

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, override_settings, tag
from numpy.testing import assert_allclose
from scipy import sparse

from fluxlab.exceptions import (
    CutoffError,
    DegenerateSteadyStateError,
    InvalidDimensionError,
    StepSizeError,
)
from fluxlab.fock_algebra import (
    annihilation,
    coherent_density,
    expectation,
    fock_state,
    number_operator,
    trace_distance,
)
from fluxlab.liouvillian import (
    Superoperator,
    build_kerr_liouvillian,
    converged_steady_state,
    evolve,
    evolve_trajectory,
    liouvillian_gap,
    mean_photon_number,
    required_cutoff,
    steady_state,
)
from fluxlab.models import KerrParams


def cavity(E=1.0, kappa=0.5):
    return KerrParams(delta=0.0, u=1e-12, kappa=kappa, eps=E)


KERR = KerrParams(delta=-2.0, u=1.0, kappa=0.5)


class BuildTests(SimpleTestCase):
    def test_trace_preserving(self):
        L = build_kerr_liouvillian(KERR.at(N=3, eps=1.0), 20, check_cutoff=False)
        self.assertLess(L.trace_functional_residual(), 1e-12)
        self.assertEqual(L.dim, 400)

    def test_rejects_non_integer_cutoff(self):
        with self.assertRaises(InvalidDimensionError):
            build_kerr_liouvillian(KERR.at(eps=1.0), 12.5)

    def test_cutoff_rule_is_enforced(self):
        p = KERR.at(N=5, eps=1.0)
        self.assertGreater(required_cutoff(p), 10)
        with self.assertRaises(CutoffError):
            build_kerr_liouvillian(p, 10)

    def test_apply_accepts_arrays(self):
        L = build_kerr_liouvillian(cavity(), 12, check_cutoff=False)
        rho = fock_state(0, 12)
        assert_allclose(L.apply(rho), L.apply(rho.entries))


class SteadyStateTests(SimpleTestCase):
    def test_empty_cavity_is_coherent(self):
        for E, kappa in ((1.0, 0.5), (2.0, 1.0), (0.5, 0.25)):
            with self.subTest(E=E, kappa=kappa):
                solution = converged_steady_state(cavity(E, kappa))
                rho = solution.rho
                self.assertLess(trace_distance(rho, coherent_density(E / kappa, rho.dim)), 1e-8)
                self.assertAlmostEqual(expectation(rho, annihilation(rho.dim)), E / kappa, places=8)
                self.assertLess(solution.cutoff_drift, 1e-8)

    def test_residual_is_small(self):
        L = build_kerr_liouvillian(KERR.at(N=2, eps=0.9), 30)
        rho = steady_state(L)
        self.assertLess(np.linalg.norm(L.apply(rho)), 1e-10)
        self.assertAlmostEqual(np.trace(rho.entries).real, 1.0, places=12)

    def test_undriven_cavity_relaxes_to_vacuum(self):
        rho = steady_state(build_kerr_liouvillian(KERR, 10))
        self.assertAlmostEqual(rho.populations()[0], 1.0, places=10)
        self.assertAlmostEqual(mean_photon_number(rho), 0.0, places=10)

    def test_degenerate_null_space(self):
        n_max = 4
        hamiltonian = number_operator(n_max).tocsr()
        eye = sparse.identity(n_max, format="csr")
        matrix = -1j * (sparse.kron(eye, hamiltonian) - sparse.kron(hamiltonian.T, eye))
        with self.assertRaises(DegenerateSteadyStateError):
            steady_state(Superoperator(sparse.csr_matrix(matrix), n_max))


class GapTests(SimpleTestCase):
    def test_empty_cavity_gap_is_kappa(self):
        L = build_kerr_liouvillian(cavity(), 20, check_cutoff=False)
        self.assertAlmostEqual(liouvillian_gap(L), 0.5, delta=1e-4)

    def test_gap_is_non_negative(self):
        L = build_kerr_liouvillian(KERR.at(N=2, eps=0.9), 30)
        self.assertGreaterEqual(liouvillian_gap(L), 0.0)

    def test_sparse_search_matches_full_spectrum(self):
        L = build_kerr_liouvillian(KERR.at(N=2, eps=0.9), 30)
        self.assertGreater(L.dim, settings.WEHRLFLUX["LIOUVILLIAN"]["DENSE_EIG_LIMIT"])
        searched = liouvillian_gap(L)
        dense = copy.deepcopy(settings.WEHRLFLUX)
        dense["LIOUVILLIAN"]["DENSE_EIG_LIMIT"] = L.dim
        with override_settings(WEHRLFLUX=dense):
            full = liouvillian_gap(L)
        self.assertAlmostEqual(searched, full, delta=1e-6 * max(1.0, full))

    @tag("slow")
    def test_gap_closes_with_N_inside_window(self):
        gaps = []
        for N in (5, 15):
            solution = converged_steady_state(KERR.at(N=N, eps=0.9))
            gaps.append(liouvillian_gap(solution.liouvillian))
        self.assertLess(gaps[1], gaps[0])


class EvolutionTests(SimpleTestCase):
    def test_rejects_unstable_step(self):
        L = build_kerr_liouvillian(cavity(), 20, check_cutoff=False)
        with self.assertRaises(StepSizeError):
            evolve(fock_state(0, 20), L, 1.0, dt=1.0)

    def test_trajectory_keeps_trace(self):
        L = build_kerr_liouvillian(cavity(), 20, check_cutoff=False)
        states = evolve_trajectory(fock_state(0, 20), L, [0.0, 0.5, 1.0])
        self.assertEqual(len(states), 3)
        for rho in states:
            self.assertAlmostEqual(np.trace(rho.entries).real, 1.0, places=10)

    def test_unsorted_times(self):
        L = build_kerr_liouvillian(cavity(), 12, check_cutoff=False)
        with self.assertRaises(ValueError):
            evolve_trajectory(fock_state(0, 12), L, [1.0, 0.5])

    def test_cavity_relaxes_to_eigen_steady_state(self):
        L = build_kerr_liouvillian(cavity(), 30, check_cutoff=False)
        rho = evolve(fock_state(0, 30), L, 60.0)
        self.assertLess(trace_distance(rho, steady_state(L)), 1e-8)

    def test_photon_number_grows_quadratically_from_vacuum(self):
        p = KERR.at(N=2, eps=0.9)
        L = build_kerr_liouvillian(p, 30)
        h = 1e-3
        n_h, n_2h = (mean_photon_number(rho) for rho in evolve_trajectory(fock_state(0, 30), L, [h, 2 * h]))
        # n(0) = 0, so one-sided differences give n'(0) and n''(0)
        self.assertAlmostEqual((4.0 * n_h - n_2h) / (2 * h), 0.0, delta=1e-4)
        growth = 2.0 * (p.eps * math.sqrt(p.N)) ** 2
        self.assertAlmostEqual((n_2h - 2.0 * n_h) / h ** 2, growth, delta=1e-2 * growth)

    def test_small_trace_drift_is_renormalised(self):
        n_max = 4
        leak = sparse.csr_matrix(-1e-10 * sparse.identity(n_max ** 2))
        rho = evolve(fock_state(0, n_max), Superoperator(leak, n_max), 5.0)
        self.assertAlmostEqual(np.trace(rho.entries).real, 1.0, places=14)

    @tag("slow")
    def test_kerr_evolution_agrees_with_eigensolver(self):
        for eps in (0.5, 0.9, 1.5):
            with self.subTest(eps=eps):
                solution = converged_steady_state(KERR.at(N=5, eps=eps))
                L = solution.liouvillian
                t_final = 25.0 / liouvillian_gap(L)
                rho = evolve(fock_state(0, L.n_max), L, t_final)
                self.assertLess(trace_distance(rho, solution.rho), 1e-8)
