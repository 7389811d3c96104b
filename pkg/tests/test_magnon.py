"""
Unit tests for magnon rates and damped two-level dynamics (magnon.py)

The Monte Carlo test draws 10^6 samples and takes a few seconds.
"""
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
import math
import unittest
import numpy as np
from scipy.stats import norm
from src import frames
from src.errors import ParameterError
from src.magnon import (DensityMatrix2, DriveConfig, EnsembleSpread, LindbladParams, Sideband,
                        ab_initio_omega_mag, background_population, default_sidebands,
                        detuned_exchange_rate, ensemble_average_evolution, evolve_lindblad,
                        liouvillian, magnon_rabi_rate, monte_carlo_enhancement, rms_enhancement,
                        simulate_sideband_spectrum)
from src.species import default_registry

OMEGA_AS = 7.3150e6 * 6.10620


class TestEnhancement(unittest.TestCase):
    def test_closed_form(self):
        self.assertAlmostEqual(rms_enhancement(1e4), math.sqrt(2.5e4), places=12)
        with self.assertRaises(ParameterError):
            rms_enhancement(0.5)

    def test_monte_carlo_oracle(self):
        estimate = monte_carlo_enhancement(1e4, samples=10**6, seed=1)
        ratio = estimate.value / rms_enhancement(1e4)
        self.assertLess(abs(ratio - 1.0), 0.01)
        self.assertLess(abs(estimate.value - rms_enhancement(1e4)), 4.0 * estimate.stderr)

    def test_monte_carlo_is_deterministic_and_scales(self):
        a = monte_carlo_enhancement(100, samples=20000, seed=3)
        b = monte_carlo_enhancement(100, samples=20000, seed=3)
        self.assertEqual(a, b)
        c = monte_carlo_enhancement(100, samples=40000, seed=3)
        self.assertAlmostEqual(c.stderr / a.stderr, 1.0 / math.sqrt(2.0), delta=0.05)

    def test_monte_carlo_rejects_few_samples(self):
        with self.assertRaises(ParameterError):
            monte_carlo_enhancement(100, samples=10)


class TestRates(unittest.TestCase):
    def test_operating_point(self):
        rate = magnon_rabi_rate(0.28e6 * 0.207, 5.2e6, OMEGA_AS, 3.8e4)
        self.assertAlmostEqual(rate / 1.025e6, 1.0, delta=0.1)
        self.assertAlmostEqual(rate / 1e6, 1.0399, delta=1e-3)

    def test_tuning_law_through_frames(self):
        phi0 = math.asin(0.207)
        products = []
        for omega_e in (3e9, 4e9, 5e9, 6e9):
            frame = frames.make_frame(3e9, phi0, frames.overhauser_for_target(omega_e, 3e9, phi0))
            a_nc = frames.hyperfine_couplings(0.28e6, frame).a_nc
            products.append(magnon_rabi_rate(a_nc, 5.2e6, OMEGA_AS, 3.8e4) * frame.omega_e)
        for p in products[1:]:
            self.assertAlmostEqual(p / products[0], 1.0, places=12)

    def test_zero_larmor_frequency(self):
        with self.assertRaises(ParameterError):
            magnon_rabi_rate(1.0, 1.0, 0.0, 100)

    def test_detuned_rate_limits(self):
        enhancement = rms_enhancement(3.8e4)
        delta = OMEGA_AS
        weak = DriveConfig(omega_rabi=1e-3 * delta, two_photon_detuning=delta)
        resonant = magnon_rabi_rate(5e4, weak.omega_rabi, delta, 3.8e4)
        self.assertLess(abs(detuned_exchange_rate(5e4, weak, enhancement) / resonant - 1.0), 1e-5)
        self.assertEqual(detuned_exchange_rate(5e4, DriveConfig(0.0, delta), enhancement), 0.0)
        equal = DriveConfig(omega_rabi=delta, two_photon_detuning=delta)
        bare = 5e4 * delta / (2.0 * delta) * enhancement
        self.assertAlmostEqual(detuned_exchange_rate(5e4, equal, enhancement) / bare,
                               1.0 / math.sqrt(2.0), places=12)
        with self.assertRaises(ParameterError):
            detuned_exchange_rate(5e4, DriveConfig(1e6, 0.0), enhancement)

    def test_stueckelberg_angle(self):
        self.assertAlmostEqual(DriveConfig(1.0, 1.0).stueckelberg_theta, -math.pi / 8.0)
        self.assertAlmostEqual(DriveConfig(3.0, 4.0).effective_rabi, 5.0)

    def test_ab_initio_prediction(self):
        value, sigma = ab_initio_omega_mag(0.28e6, 0.07e6, 0.207, 5.2e6, 0.02e6, OMEGA_AS, 65.3e9 / (2 * math.pi))
        self.assertAlmostEqual(value / 1.025e6, 1.0, delta=0.1)
        self.assertTrue(0.0 < sigma < value)
        with self.assertRaises(ParameterError):
            ab_initio_omega_mag(0.28e6, 0.3e6, 0.207, 5.2e6, 0.0, OMEGA_AS, 1e10)


class TestLindblad(unittest.TestCase):
    def test_undamped_rabi_oscillation(self):
        params = LindbladParams(omega_mag=1.04e6)
        times = np.linspace(0.0, 10.0 / 1.04e6, 401)
        trace = evolve_lindblad(DensityMatrix2.ground(), params, times)
        self.assertLess(np.max(np.abs(trace.trace - 1.0)), 1e-9)
        expected = np.sin(np.pi * 1.04e6 * times) ** 2
        self.assertLess(np.max(np.abs(trace.excited_population - expected)), 1e-6)

    def test_undriven_flip_channel(self):
        params = LindbladParams(omega_mag=0.0, gamma1=3.4e5)
        times = np.linspace(0.0, 5e-6, 101)
        population = evolve_lindblad(DensityMatrix2.ground(), params, times).excited_population
        np.testing.assert_allclose(population, background_population(times, 3.4e5), rtol=0, atol=1e-6)

    def test_methods_agree(self):
        params = LindbladParams(omega_mag=1.1e6, delta_detuning=0.3e6, gamma1=3.4e5, Gamma=1.5e6)
        times = np.linspace(0.0, 3e-6, 61)
        rk = evolve_lindblad(DensityMatrix2.ground(), params, times, method='rk')
        fine = evolve_lindblad(DensityMatrix2.ground(), params, times, method='rk', rtol=1e-10, atol=1e-13)
        exact = evolve_lindblad(DensityMatrix2.ground(), params, times, method='expm')
        np.testing.assert_allclose(rk.excited_population, fine.excited_population, rtol=0, atol=1e-7)
        np.testing.assert_allclose(rk.excited_population, exact.excited_population, rtol=0, atol=1e-7)

    def test_states_stay_physical(self):
        params = LindbladParams(omega_mag=1.0e6, delta_detuning=0.5e6, gamma1=1e6, Gamma=3e6)
        trace = evolve_lindblad(DensityMatrix2.excited(), params, np.linspace(0, 4e-6, 41), method='expm')
        for rho in trace.density_matrices():
            self.assertGreater(rho.min_eigenvalue(), -1e-9)

    def test_repeated_times(self):
        params = LindbladParams(omega_mag=1.0e6)
        trace = evolve_lindblad(DensityMatrix2.ground(), params, [0.0, 2e-7, 2e-7, 5e-7])
        self.assertEqual(trace.states.shape, (4, 2, 2))
        self.assertEqual(trace.excited_population[1], trace.excited_population[2])

    def test_trace_kept_over_ten_periods(self):
        params = LindbladParams(omega_mag=1.04e6, delta_detuning=0.2e6, gamma1=3.4e5, Gamma=2e6)
        times = np.linspace(0.0, 10.0 / 1.04e6, 201)
        for method in ('rk', 'expm'):
            trace = evolve_lindblad(DensityMatrix2.ground(), params, times, method=method)
            self.assertLess(np.max(np.abs(trace.trace - 1.0)), 1e-10, method)

    def test_strong_dephasing_rises_monotonically(self):
        params = LindbladParams(omega_mag=1.0e6, Gamma=1e8)
        times = np.linspace(0.0, 20e-6, 201)
        population = evolve_lindblad(DensityMatrix2.ground(), params, times, method='expm').excited_population
        self.assertTrue(np.all(np.diff(population) >= -1e-12))
        self.assertGreater(population[-1], 0.1)
        self.assertLessEqual(population[-1], 0.5 + 1e-9)

    def test_liouvillian_preserves_trace(self):
        L = liouvillian(LindbladParams(omega_mag=1e6, delta_detuning=2e5, gamma1=1e5, Gamma=1e6))
        trace_row = np.array([1.0, 0.0, 0.0, 1.0])
        np.testing.assert_allclose(trace_row @ L, 0.0, atol=1e-6)

    def test_invalid_inputs(self):
        with self.assertRaises(ParameterError):
            LindbladParams(omega_mag=1e6, gamma1=-1.0)
        with self.assertRaises(ParameterError):
            evolve_lindblad(DensityMatrix2.ground(), LindbladParams(1e6), [1e-6, 0.0])
        with self.assertRaises(ParameterError):
            evolve_lindblad(DensityMatrix2.ground(), LindbladParams(1e6), [0.0], method='euler')
        with self.assertRaises(ParameterError):
            DensityMatrix2(np.array([[0.5, 0.0], [0.0, 0.6]]))


class TestEnsembleAverage(unittest.TestCase):
    def test_spread_weights(self):
        spread = EnsembleSpread.uniform(253e-9)
        self.assertEqual(spread.sigma_grid.size, 41)
        self.assertAlmostEqual(spread.weights.sum(), 1.0, places=12)
        np.testing.assert_allclose(spread.sigma_grid, -spread.sigma_grid[::-1])
        self.assertAlmostEqual(spread.overhauser_shifts[-1], 2.0 * math.sqrt(2.0) / (2 * math.pi * 253e-9))

    def test_weights_are_normalized_density(self):
        spread = EnsembleSpread.uniform(253e-9, 41)
        density = norm.pdf(spread.sigma_grid)
        np.testing.assert_allclose(spread.weights, density / density.sum(), rtol=1e-12, atol=0)
        self.assertAlmostEqual(spread.weights[0], spread.weights[-1], places=15)
        self.assertAlmostEqual(spread.weights[0] / spread.weights[20], math.exp(-2.0), places=12)

    def test_infinite_t2_star_collapses(self):
        params = LindbladParams(omega_mag=1.04e6, gamma1=3.4e5, Gamma=1e6)
        times = np.linspace(0.0, 2e-6, 21)
        averaged = ensemble_average_evolution(params, EnsembleSpread.uniform(math.inf), times)
        single = evolve_lindblad(DensityMatrix2.ground(), params, times).excited_population
        np.testing.assert_allclose(averaged, single, rtol=0, atol=1e-12)

    def test_grid_refinement(self):
        params = LindbladParams(omega_mag=1.04e6, gamma1=3.4e5, Gamma=1e6)
        times = np.linspace(0.0, 800e-9, 41)
        coarse = ensemble_average_evolution(params, EnsembleSpread.uniform(253e-9, 41), times, method='expm')
        fine = ensemble_average_evolution(params, EnsembleSpread.uniform(253e-9, 81), times, method='expm')
        np.testing.assert_allclose(coarse, fine, rtol=0, atol=2e-3)

    def test_finite_t2_star_reduces_contrast(self):
        params = LindbladParams(omega_mag=1.04e6)
        times = np.linspace(0.0, 800e-9, 81)
        bare = ensemble_average_evolution(params, EnsembleSpread.uniform(math.inf), times, method='expm')
        spread = ensemble_average_evolution(params, EnsembleSpread.uniform(253e-9), times, method='expm')
        self.assertGreater(np.max(bare), 0.95)
        self.assertLess(np.max(spread), np.max(bare) - 0.05)

    def test_rk_and_expm_averages_agree(self):
        params = LindbladParams(omega_mag=1.04e6, gamma1=3.4e5)
        spread = EnsembleSpread.uniform(253e-9, 5)
        times = np.linspace(0.0, 800e-9, 21)
        np.testing.assert_allclose(ensemble_average_evolution(params, spread, times, method='rk'),
                                   ensemble_average_evolution(params, spread, times, method='expm'),
                                   rtol=0, atol=1e-7)

    def test_even_grid_rejected(self):
        with self.assertRaises(ParameterError):
            EnsembleSpread.uniform(253e-9, 40)


class TestSidebandSpectrum(unittest.TestCase):
    def test_default_sidebands(self):
        sidebands = default_sidebands(default_registry(), 0.207, 3.8e4, 5.2e6)
        self.assertEqual([s.label for s in sidebands],
                         ['75As-', '75As+', '69Ga-', '69Ga+', '71Ga-', '71Ga+'])
        self.assertAlmostEqual(sidebands[1].center_hz, OMEGA_AS, delta=1.0)

    def test_map_composition(self):
        carrier = LindbladParams(omega_mag=5.2e6, gamma1=3.4e5)
        sideband = Sideband('75As+', OMEGA_AS, LindbladParams(omega_mag=1.04e6, gamma1=3.4e5))
        delta = np.array([-150e6, OMEGA_AS])
        times = np.linspace(0.0, 800e-9, 9)
        smap = simulate_sideband_spectrum(delta, times, carrier, [sideband])
        self.assertEqual(smap.population.shape, (2, 9))
        self.assertEqual(smap.warnings, [])
        background = background_population(times, 3.4e5)
        # far from every resonance only the background remains
        np.testing.assert_allclose(smap.population[0], background, atol=1e-12)
        single = EnsembleSpread.uniform(math.inf)
        resonant = ensemble_average_evolution(sideband.params, single, times, method='expm')
        carrier_tail = ensemble_average_evolution(carrier.detuned(OMEGA_AS), single, times, method='expm')
        np.testing.assert_allclose(smap.population[1], resonant + carrier_tail - background, atol=1e-9)
        self.assertEqual(smap.metadata()['resonances'][0]['label'], 'carrier')

    def test_larger_splitting_suppresses_sidebands(self):
        registry = default_registry()
        phi0 = math.asin(0.207)
        carrier = LindbladParams(omega_mag=5.2e6, gamma1=3.4e5)
        delta = np.array([0.0, -OMEGA_AS])
        times = np.linspace(0.0, 300e-9, 31)
        maps = []
        for omega_e in (3e9, 6e9):
            frame = frames.make_frame(3e9, phi0, frames.overhauser_for_target(omega_e, 3e9, phi0))
            sidebands = default_sidebands(registry, frame.sin_phi, 3.8e4, 5.2e6)
            maps.append(simulate_sideband_spectrum(delta, times, carrier, sidebands))
        low, high = maps
        np.testing.assert_allclose(low.population[0], high.population[0], rtol=0, atol=1e-12)
        self.assertLess(np.max(high.population[1]), 0.5 * np.max(low.population[1]))

    def test_overlap_warning(self):
        carrier = LindbladParams(omega_mag=5.2e6)
        close = Sideband('close', 10e6, LindbladParams(omega_mag=5.2e6))
        smap = simulate_sideband_spectrum([0.0], [0.0, 1e-7], carrier, [close])
        self.assertEqual(len(smap.warnings), 1)

    def test_empty_grid(self):
        with self.assertRaises(ParameterError):
            simulate_sideband_spectrum([], [0.0], LindbladParams(1e6), [])

if __name__ == "__main__":
    unittest.main()
