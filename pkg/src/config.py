"""
config.py: Run Configuration

A run is configured by one JSON document plus command-line overrides.

Precedence (lowest to highest):
    built-in defaults < CSMAG_OUTPUT_DIR (output directory only)
    < --config JSON file < command-line flags (--output-dir, --seed, --registry, --set key=value)

Config file layout:
    {"output_dir": "runs/a", "seed": 7, "registry": "gaas.json",
     "params": {"omega_rabi_hz": 5.2e6, "omega_e_hz": [3e9, 4e9]}}
"""

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError, ParameterError
from .species import DEFAULT_FIELD_T, default_registry, load_registry

logger = logging.getLogger(__name__)

ENV_OUTPUT_DIR = 'CSMAG_OUTPUT_DIR'
DEFAULT_OUTPUT_DIR = 'csmag_output'
CONFIG_KEYS = ('output_dir', 'seed', 'registry', 'params')

# Scenario defaults: one 75As-dominated GaAs dot at the measured operating point.
DEFAULT_PARAMS = {
    'species': '75As',
    'field_t': DEFAULT_FIELD_T,
    'a_hz': 0.28e6,
    'sigma_a_hz': 0.07e6,
    'sin_phi0': 0.207,
    'N_species': 3.8e4,
    'N_total': 7.6e4,
    'omega_rabi_hz': 5.2e6,
    'sigma_rabi_hz': 0.02e6,
    'omega_e0_hz': 3.0e9,
    'omega_e_hz': [3.0e9, 4.0e9, 5.0e9, 6.0e9],
    'sequences': ['CP1', 'CP2'],
    'v0': 1.0,
    'b': 1.0,
    'tau_d_s': float('inf'),
    't_max_s': 2.0e-6,
    'n_times': 801,
    'noise': 0.0,
    'delta_min_hz': -100.0e6,
    'delta_max_hz': 100.0e6,
    'n_delta': 401,
    'drive_time_max_s': 800.0e-9,
    'n_drive_times': 41,
    'omega_mag_hz': 1.04e6,
    'detuning_hz': 0.0,
    'gamma1_per_s': 3.4e5,
    'Gamma_per_s': 0.0,
    't2_star_s': 253.0e-9,
    'spread_points': 41,
    'method': 'expm',
    'alpha_bar': 2.28,
    'n_sigma': 2.0,
}


@dataclass
class RunConfig:
    """
    Fully resolved configuration of one command.

    Attributes:
        command (str): Top-level command (predict-omega-mag, simulate, fit, compare).
        subcommand (str): Scenario or fit kind, '' when not applicable.
        output_dir (Path): Directory receiving every output file.
        seed (int, optional): Random seed for synthetic noise.
        registry_path (Path, optional): Species registry override.
        params (dict): Scenario parameters (defaults merged with overrides).
        inputs (list of Path): Input data files.
        pdf (bool): Also write a PDF summary.
        reference (Path, optional): Reference CSV of the compare command.
    """
    command: str
    subcommand: str = ''
    output_dir: Path = Path(DEFAULT_OUTPUT_DIR)
    seed: int = None
    registry_path: Path = None
    params: dict = field(default_factory=lambda: dict(DEFAULT_PARAMS))
    inputs: list = field(default_factory=list)
    pdf: bool = False
    reference: Path = None

    def registry(self):
        """Species registry: the override file when given, else the defaults at field_t."""
        if self.registry_path is not None:
            return load_registry(self.registry_path)
        try:
            return default_registry(float(self.params['field_t']))
        except (TypeError, ValueError, ParameterError) as exc:
            raise ConfigError(f'invalid field_t: {exc}')

    def number(self, name):
        try:
            return float(self.params[name])
        except (TypeError, ValueError):
            raise ConfigError(f'parameter {name} must be a number, got {self.params[name]!r}')

    def integer(self, name):
        value = self.params[name]
        if isinstance(value, (int, float)) and not isinstance(value, bool) and float(value).is_integer():
            return int(value)
        raise ConfigError(f'parameter {name} must be an integer, got {value!r}')

    def numbers(self, name):
        value = self.params[name]
        values = value if isinstance(value, (list, tuple)) else [value]
        try:
            return [float(v) for v in values]
        except (TypeError, ValueError):
            raise ConfigError(f'parameter {name} must be a number or list of numbers')

    def validate(self):
        if self.seed is not None and (isinstance(self.seed, bool) or not isinstance(self.seed, int)):
            raise ConfigError(f'seed must be an integer, got {self.seed!r}')
        for path in [self.registry_path, self.reference] + list(self.inputs):
            if path is not None and not Path(path).exists():
                raise ConfigError(f'referenced path does not exist: {path}')
        self.output_dir.mkdir(parents=True, exist_ok=True)
        return self

    def to_dict(self):
        return {
            'command': self.command, 'subcommand': self.subcommand,
            'output_dir': str(self.output_dir), 'seed': self.seed,
            'registry': str(self.registry_path) if self.registry_path else None,
            'inputs': [str(p) for p in self.inputs], 'params': dict(self.params),
        }


def parse_assignment(text):
    """
    Parse a --set item 'key=value'; the value is read as JSON when possible.

    Raises:
        ConfigError: If the item has no '='.
    """
    if '=' not in text:
        raise ConfigError(f'--set expects key=value, got {text!r}')
    key, raw = text.split('=', 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _merge_params(params, overrides, origin):
    unknown = sorted(set(overrides) - set(DEFAULT_PARAMS))
    if unknown:
        raise ConfigError(f'unknown parameters in {origin}: {unknown}')
    params.update(overrides)


def load_config_file(path):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            doc = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f'config file {path} does not exist')
    except json.JSONDecodeError as exc:
        raise ConfigError(f'config file {path} is not valid JSON: {exc}')
    if not isinstance(doc, dict):
        raise ConfigError(f'config file {path} must hold a JSON object')
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f'unknown keys in config file {path}: {unknown}')
    return doc


def build_config(command, subcommand='', config_path=None, output_dir=None, seed=None,
                 registry=None, assignments=(), inputs=(), pdf=False, reference=None,
                 environ=None):
    """
    Resolve a RunConfig from defaults, environment, config file and flags.

    Args:
        command (str): Top-level command.
        subcommand (str, optional): Scenario or fit kind.
        config_path (str, optional): JSON config file.
        output_dir, seed, registry (optional): Flag values; None when not given.
        assignments (iterable of str, optional): --set key=value items.
        inputs (iterable of str, optional): Input files.
        pdf (bool, optional): PDF flag.
        reference (str, optional): Reference CSV for compare.
        environ (dict, optional): Environment (os.environ by default).
    Returns:
        RunConfig: Validated configuration.
    Raises:
        ConfigError: On unknown keys, bad values or missing paths.
    """
    environ = os.environ if environ is None else environ
    config = RunConfig(command=command, subcommand=subcommand or '')
    if environ.get(ENV_OUTPUT_DIR):
        config.output_dir = Path(environ[ENV_OUTPUT_DIR])
    if config_path:
        doc = load_config_file(config_path)
        if 'output_dir' in doc:
            config.output_dir = Path(doc['output_dir'])
        if 'seed' in doc:
            config.seed = doc['seed']
        if doc.get('registry'):
            config.registry_path = Path(doc['registry'])
        _merge_params(config.params, doc.get('params', {}), config_path)
    if output_dir is not None:
        config.output_dir = Path(output_dir)
    if seed is not None:
        config.seed = seed
    if registry is not None:
        config.registry_path = Path(registry)
    _merge_params(config.params, dict(parse_assignment(a) for a in assignments), '--set')
    config.inputs = [Path(p) for p in inputs]
    config.pdf = bool(pdf)
    if reference is not None:
        config.reference = Path(reference)
    logger.debug('resolved config: %s', config.to_dict())
    return config.validate()
