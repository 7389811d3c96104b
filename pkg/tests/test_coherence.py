"""
Unit tests for the filter-function visibility model and coherence fits (coherence.py)

The visibility round trip fits synthetic CP1 and CP2 traces at four electron
splittings; the remaining tests run in well under a second.
"""
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
import math
import unittest
import numpy as np
from src.coherence import (PulseSequence, VisibilityDataset, VisibilityModel, filter_value,
                           fit_echo_decay, fit_sinphi_scaling, fit_t2_scaling, fit_visibility,
                           noise_spectrum, visibility, visibility_fit_model, visibility_from_counts,
                           visibility_from_spectrum, visibility_spectrum)
from src.errors import DegenerateDataError, ParameterError
from src.species import default_registry

CP1, CP2 = PulseSequence.CP1, PulseSequence.CP2


def reference_model(**changes):
    params = dict(sin_phi=0.207, N_total=7.6e4, registry=default_registry())
    params.update(changes)
    return VisibilityModel(**params)


class TestFilterFunctions(unittest.TestCase):
    def test_closed_forms_at_random_points(self):
        rng = np.random.default_rng(11)
        x = rng.uniform(0.0, 20.0, 1000)
        x = x[np.abs(np.cos(np.pi * x)) > 1e-3]
        cp1 = 8.0 * np.sin(np.pi * x / 2.0) ** 4
        cp2 = cp1 * np.sin(2.0 * np.pi * x) ** 2 / np.cos(np.pi * x) ** 2
        np.testing.assert_allclose(filter_value(CP1, x), cp1, rtol=0, atol=1e-10)
        np.testing.assert_allclose(filter_value(CP2, x), cp2, rtol=1e-10, atol=1e-10)

    def test_cp2_continuous_across_half_integers(self):
        for k in range(10):
            x = k + 0.5
            centre = filter_value(CP2, x)
            self.assertTrue(math.isfinite(centre))
            for eps in (1e-8, -1e-8):
                self.assertLess(abs(filter_value(CP2, x + eps) - centre), 1e-4)

    def test_cp2_limit_value(self):
        # 32 sin^4(pi/4) sin^2(pi/2) = 8
        self.assertAlmostEqual(filter_value(CP2, 0.5), 8.0, places=12)

    def test_zero_time_and_revivals(self):
        self.assertEqual(filter_value(CP1, 0.0), 0.0)
        self.assertAlmostEqual(filter_value(CP1, 2.0), 0.0, places=20)
        self.assertAlmostEqual(filter_value(CP1, 1.0), 8.0, places=12)

    def test_negative_argument(self):
        with self.assertRaises(ParameterError):
            filter_value(CP1, -0.1)
        with self.assertRaises(ParameterError):
            PulseSequence.parse('CP3')


class TestVisibility(unittest.TestCase):
    def test_first_arsenic_dip(self):
        model = reference_model()
        t = 1.0 / model.registry.larmor_frequencies()['75As']
        self.assertAlmostEqual(visibility(t, model, CP1), 0.715, delta=0.005)

    def test_spectral_overlap_oracle(self):
        model = reference_model()
        t = np.linspace(0.0, 1e-6, 301)
        for seq in (CP1, CP2):
            closed = visibility(t, model, seq)
            oracle = visibility_from_spectrum(t, noise_spectrum(model), seq)
            np.testing.assert_allclose(oracle, closed, rtol=0, atol=1e-3)

    def test_dip_depth_monotonic(self):
        t = 1.0 / default_registry().larmor_frequencies()['75As']
        depths = [1.0 - visibility(t, reference_model(sin_phi=s), CP1) for s in (0.05, 0.1, 0.2, 0.3)]
        self.assertEqual(depths, sorted(depths))
        depths = [1.0 - visibility(t, reference_model(N_total=n), CP1) for n in (2e4, 5e4, 1e5)]
        self.assertEqual(depths, sorted(depths, reverse=True))

    def test_zero_tilt_is_perfectly_coherent(self):
        t = np.linspace(0.0, 1e-6, 50)
        np.testing.assert_allclose(visibility(t, reference_model(sin_phi=0.0), CP2), 1.0)

    def test_technical_parameters(self):
        model = reference_model(v0=0.9, tau_d=5e-6)
        t = 1.3e-6
        expected = 0.9 * visibility(t, model, CP1) * math.exp(-t / 5e-6)
        self.assertAlmostEqual(visibility_fit_model(t, model, CP1), expected, places=12)

    def test_polarization_deepens_dips(self):
        t = 1.0 / default_registry().larmor_frequencies()['75As']
        polarized = reference_model(polarization={'75As': 0.5})
        self.assertLess(visibility(t, polarized, CP1), visibility(t, reference_model(), CP1))
        with self.assertRaises(ParameterError):
            reference_model(polarization={'75As': 1.5})

    def test_noise_spectrum_lines(self):
        spectrum = noise_spectrum(reference_model())
        self.assertEqual(spectrum.names, ('75As', '69Ga', '71Ga'))
        self.assertTrue(np.all(np.diff(spectrum.frequencies) > 0))

    def test_counts_and_spectrum(self):
        np.testing.assert_allclose(visibility_from_counts([3, 1], [1, 3]), [0.5, -0.5])
        with self.assertRaises(ParameterError):
            visibility_from_counts([0], [0])
        t = np.linspace(0.0, 2e-6, 2001)
        freqs, amplitudes = visibility_spectrum(t, visibility(t, reference_model(), CP1))
        peak = freqs[np.argmax(amplitudes)]
        self.assertAlmostEqual(peak / 44.667e6, 1.0, delta=0.02)

    def test_invalid_model(self):
        with self.assertRaises(ParameterError):
            reference_model(sin_phi=1.5)
        with self.assertRaises(ParameterError):
            reference_model(N_total=0)
        with self.assertRaises(ParameterError):
            visibility(-1e-9, reference_model(), CP1)


class TestVisibilityFit(unittest.TestCase):
    def test_round_trip_four_splittings(self):
        registry = default_registry(6.0)
        rng = np.random.default_rng(2024)
        times = np.linspace(0.0, 2e-6, 600)
        truth = {w: 0.207 * 3.0e9 / w for w in (3.0e9, 4.0e9, 5.0e9, 6.0e9)}
        datasets = []
        for omega_e, sin_phi in truth.items():
            model = VisibilityModel(sin_phi=sin_phi, N_total=7.6e4, registry=registry,
                                    v0=0.95, b=1.0177, tau_d=20e-6)
            for seq in (CP1, CP2):
                values = visibility_fit_model(times, model, seq) + rng.normal(0.0, 0.01, times.size)
                datasets.append(VisibilityDataset(omega_e, seq, times, values,
                                                  sigma=np.full(times.size, 0.01)))
        fit = fit_visibility(datasets, registry, 7.6e4)
        self.assertAlmostEqual(fit.b / 1.0177, 1.0, delta=1e-3)
        for omega_e, (value, sigma) in fit.sin_phi().items():
            self.assertAlmostEqual(value / truth[omega_e], 1.0, delta=0.02)
            self.assertTrue(sigma > 0)
        scaling = fit_sinphi_scaling(sorted(truth), [fit.sin_phi()[w][0] for w in sorted(truth)], 3.0e9)
        self.assertAlmostEqual(scaling['sin_phi0'] / 0.207, 1.0, delta=0.01)

    def test_scale_changes_only_v0(self):
        registry = default_registry(6.0)
        times = np.linspace(0.0, 1e-6, 200)
        model = VisibilityModel(sin_phi=0.2, N_total=7.6e4, registry=registry, v0=0.9, b=1.01,
                                tau_d=10e-6)
        values = visibility_fit_model(times, model, CP1)
        init = {'sin_phi_0': 0.2, 'b': 1.01, 'v0_0': 0.9, 'tau_d_0': 10e-6}
        base = fit_visibility([VisibilityDataset(3e9, CP1, times, values)], registry, 7.6e4, init=init)
        scaled = fit_visibility([VisibilityDataset(3e9, CP1, times, 0.8 * values)], registry, 7.6e4,
                                init=init)
        self.assertAlmostEqual(scaled.result['v0_0'] / base.result['v0_0'], 0.8, places=5)
        self.assertAlmostEqual(scaled.result['sin_phi_0'], base.result['sin_phi_0'], places=6)
        self.assertAlmostEqual(scaled.b, base.b, places=7)

    def test_polarized_model_round_trip(self):
        registry = default_registry()
        times = np.linspace(0.0, 2e-6, 400)
        polarization = {'75As': 0.5}
        model = VisibilityModel(sin_phi=0.207, N_total=7.6e4, registry=registry, v0=0.95,
                                tau_d=20e-6, polarization=polarization)
        data = [VisibilityDataset(3e9, CP1, times, visibility_fit_model(times, model, CP1))]
        init = {'sin_phi_0': 0.2, 'b': 1.0, 'v0_0': 0.9, 'tau_d_0': 10e-6}
        fit = fit_visibility(data, registry, 7.6e4, init=init, polarization=polarization)
        self.assertAlmostEqual(fit.result['sin_phi_0'] / 0.207, 1.0, places=4)
        unpolarized = fit_visibility(data, registry, 7.6e4, init=init)
        self.assertGreater(unpolarized.result['sin_phi_0'], 1.05 * 0.207)

    def test_no_datasets(self):
        with self.assertRaises(ParameterError):
            fit_visibility([], default_registry(), 7.6e4)


class TestSinPhiScaling(unittest.TestCase):
    def test_noisy_round_trip(self):
        rng = np.random.default_rng(5)
        omega_e = np.array([3.0e9, 4.0e9, 5.0e9, 6.0e9])
        sin_phi = 0.207 * 3.0e9 / omega_e * (1.0 + rng.normal(0.0, 0.01, 4))
        result = fit_sinphi_scaling(omega_e, sin_phi, 3.0e9, sigma=0.01 * sin_phi)
        self.assertAlmostEqual(result['sin_phi0'] / 0.207, 1.0, delta=0.01)

    def test_single_splitting(self):
        with self.assertRaises(DegenerateDataError):
            fit_sinphi_scaling([3e9, 3e9], [0.2, 0.21], 3e9)


class TestEchoDecay(unittest.TestCase):
    def test_stretched_exponential_round_trip(self):
        rng = np.random.default_rng(7)
        tau = np.linspace(0.1e-6, 5e-6, 40)
        W = np.exp(-(tau / 1.93e-6) ** 2.4) + rng.normal(0.0, 0.01, tau.size)
        decay = fit_echo_decay(tau, W, sigma=np.full(tau.size, 0.01))
        self.assertLess(abs(decay.T2 - 1.93e-6), 3.0 * decay.T2_sigma)
        self.assertLess(abs(decay.alpha - 2.4), 3.0 * decay.alpha_sigma)

    def test_pure_exponential(self):
        tau = np.linspace(0.0, 6e-6, 30)
        decay = fit_echo_decay(tau, np.exp(-tau / 2e-6))
        self.assertAlmostEqual(decay.alpha, 1.0, places=5)
        self.assertAlmostEqual(decay.T2 / 2e-6, 1.0, places=5)
        self.assertAlmostEqual(decay(2e-6), math.exp(-1.0), places=5)

    def test_constant_input(self):
        with self.assertRaises(DegenerateDataError):
            fit_echo_decay(np.linspace(0, 1e-6, 10), np.ones(10))

    def test_zero_sigma_rejected(self):
        tau = np.linspace(0.0, 6e-6, 30)
        sigma = np.full(tau.size, 0.01)
        sigma[3] = 0.0
        with self.assertRaises(ParameterError):
            fit_echo_decay(tau, np.exp(-tau / 2e-6), sigma=sigma)
        with self.assertRaises(ParameterError):
            fit_t2_scaling([3e9, 4e9], [1.9e-6, 2.2e-6], 3e9, 2.28, sigma=[0.03e-6, 0.0])

    def test_too_few_points(self):
        with self.assertRaises(ParameterError):
            fit_echo_decay([0.0, 1e-6, 2e-6], [1.0, 0.5, 0.2])


class TestT2Scaling(unittest.TestCase):
    def test_measured_coherence_times(self):
        result = fit_t2_scaling([3e9, 4e9, 5e9, 6e9], [1.93e-6, 2.21e-6, 2.49e-6, 2.72e-6], 3e9, 2.28)
        self.assertLess(abs(result['coefficient'] - 0.95e-6), 2 * 0.03e-6)
        self.assertLess(abs(result['offset'] - 0.99e-6), 2 * 0.04e-6)
        self.assertAlmostEqual(result['coefficient'], 0.95059e-6, delta=2e-9)
        self.assertAlmostEqual(result['offset'], 0.98547e-6, delta=2e-9)

    def test_exact_law(self):
        omega_e = np.array([3e9, 4e9, 5e9, 6e9])
        T2 = 1.0e-6 * (omega_e / 3e9) ** (2.0 / 2.28) + 0.5e-6
        result = fit_t2_scaling(omega_e, T2, 3e9, 2.28)
        self.assertAlmostEqual(result['coefficient'] / 1.0e-6, 1.0, places=8)
        self.assertAlmostEqual(result['offset'] / 0.5e-6, 1.0, places=8)

    def test_single_splitting(self):
        with self.assertRaises(DegenerateDataError):
            fit_t2_scaling([3e9, 3e9], [1.9e-6, 2.0e-6], 3e9, 2.28)

if __name__ == "__main__":
    unittest.main()
