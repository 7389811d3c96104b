"""
species.py: Nuclear Species Registry and Larmor Frequencies

This module is the single source of truth for per-isotope constants of the
GaAs nuclear bath: spin, hyperfine constant, gyromagnetic ratio and isotope
abundance, together with the external magnetic field they are evaluated at.

Frequency convention:
---------------------
All frequencies are ordinary frequencies in Hz. Hyperfine constants are stored
as ordinary frequencies (A_As = 65.3 GHz / 2pi = 10.39 GHz), which makes
N = A/a and the visibility and magnon-rate expressions consistent in one
convention. Gyromagnetic ratios are in Hz/T.

Features:
---------
- Default registry for 75As, 69Ga and 71Ga with abundances {1, 0.604, 0.396}
- Larmor frequency computation (gamma * B)
- JSON (de)serialization so any constant can be overridden per run

Functions:
----------
- default_registry(field_t):
    Returns the three default GaAs species at the given field.
- larmor_frequency(species, field_t):
    Returns gamma * B in Hz.
- field_from_scale(b, nominal_field_t):
    Field implied by a fitted field-scale factor b.
- load_registry(path) / save_registry(registry, path):
    JSON file round trip.

Usage:
------
    registry = default_registry()
    registry.larmor_frequencies()['75As']   # ~44.67 MHz
"""

import json
import logging
import math
from dataclasses import dataclass, replace

from .errors import ParameterError

logger = logging.getLogger(__name__)

# Field recovered from the global visibility fit (b = 1.0177 on a 6 T nominal field).
DEFAULT_FIELD_T = 6.10620

# (name, spin, hyperfine_A_hz, gyromagnetic_hz_per_t, abundance)
# 75As: 65.3e9 rad/s quoted hyperfine constant divided by 2pi.
# Ga: 36.9 ueV and 46.9 ueV literature constants divided by h.
DEFAULT_SPECIES = [
    ('75As', 1.5, 65.3e9 / (2.0 * math.pi), 7.3150e6, 1.0),
    ('69Ga', 1.5, 8.922e9, 10.2478e6, 0.604),
    ('71Ga', 1.5, 11.340e9, 13.0208e6, 0.396),
]

JSON_KEYS = ('name', 'spin', 'hyperfine_A_hz', 'gyromagnetic_hz_per_t', 'abundance')


@dataclass(frozen=True)
class NuclearSpecies:
    """
    Constants of one nuclear isotope.

    Attributes:
        name (str): Isotope identifier, e.g. '75As'.
        spin (float): Nuclear spin quantum number (half-integer).
        hyperfine_A (float): Hyperfine material constant, ordinary frequency (Hz).
        gyromagnetic_ratio (float): Gyromagnetic ratio (Hz/T).
        abundance_c (float): Isotope abundance on its sublattice, in [0, 1].
    """
    name: str
    spin: float
    hyperfine_A: float
    gyromagnetic_ratio: float
    abundance_c: float

    def __post_init__(self):
        if not self.name:
            raise ParameterError('species name must be non-empty')
        if self.spin <= 0 or abs(2.0 * self.spin - round(2.0 * self.spin)) > 1e-12:
            raise ParameterError(f'{self.name}: spin must be a positive half-integer, got {self.spin}')
        if self.hyperfine_A <= 0:
            raise ParameterError(f'{self.name}: hyperfine constant must be positive')
        if self.gyromagnetic_ratio < 0:
            raise ParameterError(f'{self.name}: gyromagnetic ratio must be non-negative')
        if not 0.0 <= self.abundance_c <= 1.0:
            raise ParameterError(f'{self.name}: abundance must lie in [0, 1]')

    def to_dict(self):
        return {
            'name': self.name,
            'spin': self.spin,
            'hyperfine_A_hz': self.hyperfine_A,
            'gyromagnetic_hz_per_t': self.gyromagnetic_ratio,
            'abundance': self.abundance_c,
        }

    @classmethod
    def from_dict(cls, doc):
        missing = [k for k in JSON_KEYS if k not in doc]
        if missing:
            raise ParameterError(f'species entry is missing keys: {missing}')
        return cls(
            name=str(doc['name']),
            spin=float(doc['spin']),
            hyperfine_A=float(doc['hyperfine_A_hz']),
            gyromagnetic_ratio=float(doc['gyromagnetic_hz_per_t']),
            abundance_c=float(doc['abundance']),
        )


def larmor_frequency(species, field_t):
    """
    Nuclear Larmor frequency gamma * B.

    Args:
        species (NuclearSpecies): Isotope.
        field_t (float): Magnetic field (T), strictly positive.
    Returns:
        float: Larmor frequency (Hz).
    Raises:
        ParameterError: If the field is not positive.
    """
    if not field_t > 0:
        raise ParameterError(f'magnetic field must be positive, got {field_t}')
    return species.gyromagnetic_ratio * field_t


@dataclass(frozen=True)
class SpeciesRegistry:
    """
    Ordered, immutable collection of nuclear species at a given field.

    Attributes:
        species (tuple of NuclearSpecies): Isotopes, in declaration order.
        magnetic_field_B (float): External magnetic field (T).
    """
    species: tuple
    magnetic_field_B: float = DEFAULT_FIELD_T

    def __post_init__(self):
        object.__setattr__(self, 'species', tuple(self.species))
        names = [s.name for s in self.species]
        if len(names) != len(set(names)):
            raise ParameterError(f'species names must be unique, got {names}')
        if not self.magnetic_field_B > 0:
            raise ParameterError(f'magnetic field must be positive, got {self.magnetic_field_B}')

    def __iter__(self):
        return iter(self.species)

    def __len__(self):
        return len(self.species)

    @property
    def names(self):
        return [s.name for s in self.species]

    def get(self, name):
        """
        Look up a species by name.

        Raises:
            ParameterError: If the name is unknown.
        """
        for s in self.species:
            if s.name == name:
                return s
        raise ParameterError(f'unknown species {name!r}; registry holds {self.names}')

    def larmor_frequencies(self, scale=1.0):
        """
        Larmor frequency of every species.

        Args:
            scale (float, optional): Multiplier applied to the field (fitted b).
        Returns:
            dict: name -> frequency (Hz), in registry order.
        """
        return {s.name: larmor_frequency(s, self.magnetic_field_B * scale) for s in self.species}

    def with_field(self, field_t):
        return replace(self, magnetic_field_B=field_t)

    def to_dict(self):
        return {
            'field_t': self.magnetic_field_B,
            'species': [s.to_dict() for s in self.species],
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, doc):
        entries = doc.get('species')
        if not entries:
            raise ParameterError('registry document holds no species')
        return cls(
            species=tuple(NuclearSpecies.from_dict(e) for e in entries),
            magnetic_field_B=float(doc.get('field_t', DEFAULT_FIELD_T)),
        )

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def default_registry(field_t=DEFAULT_FIELD_T):
    """
    The three GaAs species 75As, 69Ga and 71Ga.

    Args:
        field_t (float, optional): Magnetic field (T), default 6.10620 T.
    Returns:
        SpeciesRegistry: Registry with abundances (1, 0.604, 0.396) and spin 3/2.
    """
    return SpeciesRegistry(
        species=tuple(NuclearSpecies(*row) for row in DEFAULT_SPECIES),
        magnetic_field_B=field_t,
    )


def field_from_scale(b, nominal_field_t=6.0):
    """Magnetic field implied by a fitted field-scale factor b."""
    if not b > 0:
        raise ParameterError(f'field scale must be positive, got {b}')
    return b * nominal_field_t


def load_registry(path):
    """
    Read a registry override document.

    Args:
        path (str or Path): JSON file with keys field_t and species.
    Returns:
        SpeciesRegistry: Parsed registry.
    """
    with open(path, 'r', encoding='utf-8') as f:
        registry = SpeciesRegistry.from_json(f.read())
    logger.info('loaded species registry %s (%d species, B=%.6f T)',
                path, len(registry), registry.magnetic_field_B)
    return registry


def save_registry(registry, path):
    with open(path, 'w', encoding='utf-8') as f:
        f.write(registry.to_json())
