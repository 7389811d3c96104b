"""
Unit tests for the nuclear species registry (species.py)

These tests cover the default GaAs constants, Larmor frequencies and the JSON
override documents.
"""
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
import math
import tempfile
import unittest
from src.errors import ParameterError
from src.species import (DEFAULT_FIELD_T, NuclearSpecies, SpeciesRegistry, default_registry,
                         field_from_scale, larmor_frequency, load_registry, save_registry)


class TestDefaultRegistry(unittest.TestCase):
    def test_species_and_abundances(self):
        registry = default_registry()
        self.assertEqual(registry.names, ['75As', '69Ga', '71Ga'])
        self.assertEqual([s.abundance_c for s in registry], [1.0, 0.604, 0.396])
        self.assertEqual(registry.magnetic_field_B, DEFAULT_FIELD_T)

    def test_arsenic_hyperfine_constant_is_ordinary_frequency(self):
        arsenic = default_registry().get('75As')
        self.assertAlmostEqual(arsenic.hyperfine_A, 65.3e9 / (2.0 * math.pi), delta=1.0)
        self.assertAlmostEqual(arsenic.hyperfine_A / 1e9, 10.393, places=3)

    def test_larmor_frequencies_at_measured_field(self):
        larmor = default_registry().larmor_frequencies()
        self.assertAlmostEqual(larmor['75As'] / 1e6, 44.667, places=2)
        self.assertAlmostEqual(larmor['69Ga'] / 1e6, 62.575, places=2)
        self.assertAlmostEqual(larmor['71Ga'] / 1e6, 79.507, places=2)

    def test_field_scale(self):
        registry = default_registry(6.0)
        scaled = registry.larmor_frequencies(scale=1.0177)
        self.assertAlmostEqual(scaled['75As'], 7.3150e6 * 6.0 * 1.0177, delta=1e-3)
        self.assertAlmostEqual(field_from_scale(1.0177), 6.1062, places=9)

    def test_unknown_species(self):
        with self.assertRaises(ParameterError):
            default_registry().get('115In')


class TestValidation(unittest.TestCase):
    def test_zero_field(self):
        arsenic = default_registry().get('75As')
        with self.assertRaises(ParameterError):
            larmor_frequency(arsenic, 0.0)
        with self.assertRaises(ParameterError):
            default_registry(0.0)

    def test_bad_spin_and_abundance(self):
        with self.assertRaises(ParameterError):
            NuclearSpecies('X', 1.2, 1e9, 1e6, 0.5)
        with self.assertRaises(ParameterError):
            NuclearSpecies('X', 1.5, 1e9, 1e6, 1.5)

    def test_duplicate_names(self):
        arsenic = default_registry().get('75As')
        with self.assertRaises(ParameterError):
            SpeciesRegistry(species=(arsenic, arsenic))


class TestRegistryDocuments(unittest.TestCase):
    def test_save_and_load(self):
        registry = default_registry(6.0)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'registry.json')
            save_registry(registry, path)
            loaded = load_registry(path)
        self.assertEqual(loaded, registry)

    def test_override_one_constant(self):
        doc = default_registry().to_dict()
        doc['species'][0]['hyperfine_A_hz'] = 1.0e10
        registry = SpeciesRegistry.from_dict(doc)
        self.assertEqual(registry.get('75As').hyperfine_A, 1.0e10)

    def test_missing_keys(self):
        with self.assertRaises(ParameterError):
            SpeciesRegistry.from_dict({'species': [{'name': '75As'}]})
        with self.assertRaises(ParameterError):
            SpeciesRegistry.from_dict({'field_t': 6.0})

if __name__ == "__main__":
    unittest.main()
