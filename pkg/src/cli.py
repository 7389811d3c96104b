"""
cli.py: Batch Command-Line Front-End

Ties the toolkit together: predict magnon rates, simulate visibility traces,
sideband maps and Rabi traces, fit measured (or synthetic) data and compare
fit results with reference values. Every command writes plot-ready CSV files
with a <stem>.meta.json sidecar and prints a tabulated summary.

Commands:
---------
- predict-omega-mag
    Omega_mag(omega_e) table from frames + magnon, plus a one-parameter
    Omega_mag0 * (omega_e0 / omega_e) scaling fit.
- simulate {visibility|sideband-map|rabi}
    Synthetic data; optional Gaussian noise (param noise) drawn from --seed.
- fit {knight|visibility|echo|magnon|background|rabi|gaussian|sinphi-scaling|t2-scaling} FILE...
    One FitResult JSON per fit plus residual CSVs; --pdf adds a PDF report.
- compare FILE... [--reference CSV]
    Fit JSON documents against reference values.

Common options: --config JSON, --output-dir DIR, --seed N, --registry JSON,
--set key=value (repeatable), -v/--verbose, -q/--quiet.

Exit codes: 0 success, 2 toolkit error, 1 unexpected error; failures print
{"error", "message", "details"} as JSON on stderr.

Usage:
------
    python -m src.cli predict-omega-mag --output-dir out
    python -m src.cli simulate visibility --set noise=0.01 --seed 3
    python -m src.cli fit visibility out/visibility_CP1_3GHz.csv out/visibility_CP2_3GHz.csv
"""

import argparse
import json
import logging
import math
import sys
import traceback
from dataclasses import dataclass, field

import numpy as np

from . import coherence, fitters, frames, magnon
from .config import build_config
from .datafiles import (read_columns, read_sideband_spectrum, read_time_series,
                        read_visibility_dataset, sigma_column, write_csv)
from .errors import ConfigError, ToolkitError
from .report_comparison import (DEFAULT_REFERENCE, collect_estimates, make_comparison_table,
                                read_reference_rows, save_comparison_pdf)
from .reports import (describe_fit, print_summary, save_fit_json, save_report_as_csv,
                      save_report_as_pdf, save_residuals_csv, write_metadata)

logger = logging.getLogger(__name__)

SIMULATIONS = ('visibility', 'sideband-map', 'rabi')
FITS = ('knight', 'visibility', 'echo', 'magnon', 'background', 'rabi', 'gaussian',
        'sinphi-scaling', 't2-scaling')


@dataclass
class Run:
    """State of one command: configuration, command line and PDF sections."""
    config: object
    command_line: str
    sections: list = field(default_factory=list)

    def __post_init__(self):
        self.rng = np.random.default_rng(self.config.seed)

    def path(self, name):
        return self.config.output_dir / name

    def write_table(self, name, header, rows, extra=None):
        path = self.path(name)
        write_csv(path, header, rows)
        write_metadata(path, self.command_line, self.config.to_dict(), extra)
        logger.info('wrote %s', path)
        return path

    def save_fit(self, name, result, title=None):
        path = self.path(f'{name}.json')
        save_fit_json(result, path)
        if getattr(result, 'residual', None) is not None:
            save_residuals_csv(result, self.path(f'{name}_residuals.csv'))
        write_metadata(path, self.command_line, self.config.to_dict(),
                       {'warnings': list(result.warnings)})
        rows = describe_fit(result)
        print_summary(title or name, rows)
        self.sections.append((title or name, rows))
        return path


def _grid(config, max_key, n_key, start=0.0):
    n = config.integer(n_key)
    if n < 1:
        raise ConfigError(f'{n_key} must be at least 1: empty grid')
    stop = config.number(max_key)
    if stop < start:
        raise ConfigError(f'{max_key} must not be below {start}')
    return np.linspace(start, stop, n)


def _add_noise(run, values):
    noise = run.config.number('noise')
    if noise <= 0:
        return values, None
    return values + run.rng.normal(0.0, noise, values.shape), np.full(values.shape, noise)


def _frame_at(config, omega_e):
    sin_phi0 = config.number('sin_phi0')
    omega_e0 = config.number('omega_e0_hz')
    phi0 = math.asin(sin_phi0)
    delta_oh = frames.overhauser_for_target(omega_e, omega_e0, phi0)
    return frames.make_frame(omega_e0, phi0, delta_oh)


# --- predict ---

def cmd_predict_omega_mag(run):
    """Omega_mag at every configured omega_e, with the ab initio uncertainty."""
    config = run.config
    registry = config.registry()
    species = registry.get(config.params['species'])
    omega_n = registry.larmor_frequencies()[species.name]
    a = config.number('a_hz')
    omega_rabi = config.number('omega_rabi_hz')
    N = config.number('N_species')
    omega_e0 = config.number('omega_e0_hz')

    rows = []
    for omega_e in config.numbers('omega_e_hz'):
        frame = _frame_at(config, omega_e)
        couplings = frames.hyperfine_couplings(a, frame)
        rate = magnon.magnon_rabi_rate(couplings.a_nc, omega_rabi, omega_n, N * species.abundance_c)
        center, sigma = magnon.ab_initio_omega_mag(
            a, config.number('sigma_a_hz'), frame.sin_phi, omega_rabi,
            config.number('sigma_rabi_hz'), omega_n, species.hyperfine_A, species.abundance_c)
        rate_sigma = abs(rate) * sigma / abs(center) if center else 0.0
        rows.append({'omega_e_hz': omega_e, 'delta_oh_hz': frame.delta_oh, 'sin_phi': frame.sin_phi,
                     'a_nc_hz': couplings.a_nc, 'omega_mag_hz': rate, 'omega_mag_sigma_hz': rate_sigma})

    header = list(rows[0].keys())
    run.write_table('omega_mag_prediction.csv', header, ([r[k] for k in header] for r in rows))
    print_summary(f'Magnon Rabi rate prediction ({species.name}, omega_n = {omega_n:.6g} Hz)', rows)

    omega_e = np.array([r['omega_e_hz'] for r in rows])
    if np.unique(omega_e).size < 2:
        logger.info('single omega_e: no scaling fit')
        return
    sigmas = np.array([r['omega_mag_sigma_hz'] for r in rows])
    fit = fitters.fit_inverse_scaling(omega_e, [r['omega_mag_hz'] for r in rows], omega_e0,
                                      sigma=sigmas if np.all(sigmas > 0) else None,
                                      name='omega_mag0', label='omega_mag scaling')
    run.save_fit('omega_mag_scaling', fit, 'Omega_mag = Omega_mag0 * omega_e0 / omega_e')


# --- simulate ---

def simulate_visibility(run):
    config = run.config
    registry = config.registry()
    times = _grid(config, 't_max_s', 'n_times')
    written = []
    for omega_e in config.numbers('omega_e_hz'):
        frame = _frame_at(config, omega_e)
        model = coherence.VisibilityModel(
            sin_phi=frame.sin_phi, N_total=config.number('N_total'), registry=registry,
            v0=config.number('v0'), b=config.number('b'), tau_d=config.number('tau_d_s'))
        for name in config.params['sequences']:
            seq = coherence.PulseSequence.parse(name)
            values, sigma = _add_noise(run, coherence.visibility_fit_model(times, model, seq))
            stem = f'visibility_{seq.value}_{omega_e / 1e9:g}GHz'
            if sigma is None:
                path = run.write_table(f'{stem}.csv', ['tau_s', 'visibility'], zip(times, values))
            else:
                path = run.write_table(f'{stem}.csv', ['tau_s', 'visibility', 'sigma'],
                                       zip(times, values, sigma))
            with open(path.with_suffix('.json'), 'w', encoding='utf-8') as f:
                json.dump({'sequence': seq.value, 'omega_e_hz': omega_e, 'label': stem}, f, indent=2)
                f.write('\n')
            written.append({'file': path.name, 'sin_phi': frame.sin_phi,
                            'min_visibility': float(np.min(values))})
    print_summary('Simulated visibility traces', written)


def simulate_sideband_map(run):
    config = run.config
    registry = config.registry()
    omega_e = config.numbers('omega_e_hz')[0]
    frame = _frame_at(config, omega_e)
    n_delta = config.integer('n_delta')
    if n_delta < 1:
        raise ConfigError('n_delta must be at least 1: empty detuning grid')
    delta = np.linspace(config.number('delta_min_hz'), config.number('delta_max_hz'), n_delta)
    times = _grid(config, 'drive_time_max_s', 'n_drive_times')
    spread = magnon.EnsembleSpread.uniform(config.number('t2_star_s'), config.integer('spread_points'))
    gamma1, Gamma = config.number('gamma1_per_s'), config.number('Gamma_per_s')
    omega_rabi = config.number('omega_rabi_hz')
    carrier = magnon.LindbladParams(omega_mag=omega_rabi, gamma1=gamma1, Gamma=Gamma)
    sidebands = magnon.default_sidebands(registry, frame.sin_phi, config.number('N_species'),
                                         omega_rabi, gamma1=gamma1, Gamma=Gamma)
    smap = magnon.simulate_sideband_spectrum(delta, times, carrier, sidebands, spread,
                                             method=config.params['method'])
    population, _ = _add_noise(run, smap.population)
    rows = ((d, t, population[i, k]) for i, d in enumerate(delta) for k, t in enumerate(times))
    run.write_table('sideband_map.csv', ['delta_hz', 'time_s', 'population'], rows,
                    extra={'map': smap.metadata()})
    print_summary(f'Resonances at omega_e = {omega_e:.6g} Hz (sin_phi = {frame.sin_phi:.6g})',
                  [{'label': r.label, 'center_hz': r.center_hz, 'omega_mag_hz': r.params.omega_mag}
                   for r in smap.resonances])


def simulate_rabi(run):
    config = run.config
    times = _grid(config, 'drive_time_max_s', 'n_drive_times')
    params = magnon.LindbladParams(
        omega_mag=config.number('omega_mag_hz'), delta_detuning=config.number('detuning_hz'),
        gamma1=config.number('gamma1_per_s'), Gamma=config.number('Gamma_per_s'))
    spread = magnon.EnsembleSpread.uniform(config.number('t2_star_s'), config.integer('spread_points'))
    population = magnon.ensemble_average_evolution(params, spread, times, method=config.params['method'])
    values, sigma = _add_noise(run, population)
    if sigma is None:
        run.write_table('rabi.csv', ['time_s', 'population'], zip(times, values))
    else:
        run.write_table('rabi.csv', ['time_s', 'population', 'sigma'], zip(times, values, sigma))
    print_summary('Simulated Rabi trace', [{'omega_mag_hz': params.omega_mag,
                                            'max_population': float(np.max(values))}])


SIMULATE = {'visibility': simulate_visibility, 'sideband-map': simulate_sideband_map,
            'rabi': simulate_rabi}


def cmd_simulate(run):
    SIMULATE[run.config.subcommand](run)


# --- fit ---

def _require_inputs(config, count=None, minimum=1):
    n = len(config.inputs)
    if count is not None and n != count:
        raise ConfigError(f'fit {config.subcommand} takes {count} input files, got {n}')
    if n < minimum:
        raise ConfigError(f'fit {config.subcommand} needs at least {minimum} input file(s)')


def fit_knight(run):
    config = run.config
    _require_inputs(config, count=4)
    species = config.registry().get(config.params['species'])
    spectra = [read_sideband_spectrum(p) for p in config.inputs]
    result = fitters.knight_shift_analysis(spectra, species.hyperfine_A)
    run.save_fit('knight', result, f'Knight shift ({species.name})')


def fit_visibility(run):
    config = run.config
    _require_inputs(config)
    datasets = [read_visibility_dataset(p) for p in config.inputs]
    fit = coherence.fit_visibility(datasets, config.registry(), config.number('N_total'))
    run.save_fit('visibility_fit', fit.result, 'Global visibility fit')
    sin_phi = fit.sin_phi()
    if len(sin_phi) >= 2:
        omega_e = sorted(sin_phi)
        scaling = coherence.fit_sinphi_scaling(
            omega_e, [sin_phi[w][0] for w in omega_e], config.number('omega_e0_hz'),
            sigma=[sin_phi[w][1] for w in omega_e])
        run.save_fit('sinphi_scaling', scaling, 'sin(phi) = sin(phi0) * omega_e0 / omega_e')


def fit_echo(run):
    config = run.config
    _require_inputs(config)
    for path in config.inputs:
        columns = read_columns(path, ('tau_s', 'visibility'), ('sigma',))
        decay = coherence.fit_echo_decay(columns['tau_s'], columns['visibility'],
                                         sigma=sigma_column(columns, path), label=f'echo {path.stem}')
        run.save_fit(f'echo_{path.stem}', decay.result, f'Stretched-exponential decay ({path.name})')


def fit_magnon(run):
    config = run.config
    _require_inputs(config, count=2)
    neg, pos = (read_time_series(p, 'population') for p in config.inputs)
    result = fitters.fit_magnon_rabi(neg, pos, config.number('gamma1_per_s'), config.number('t2_star_s'),
                                     spread_points=config.integer('spread_points'),
                                     method=config.params['method'])
    run.save_fit('magnon_rabi', result, 'Magnon Rabi fit (shared Gamma)')


def fit_background(run):
    config = run.config
    _require_inputs(config)
    series = [read_time_series(p, 'population') for p in config.inputs]
    result = fitters.fit_background_gamma1_global(series, label='background')
    run.save_fit('background', result, 'Background saturation 0.5(1 - exp(-2 gamma1 t)) + B')


def fit_rabi(run):
    config = run.config
    _require_inputs(config)
    for path in config.inputs:
        series = read_time_series(path, 'counts')
        result = fitters.fit_damped_sine(series.times, series.values, series.sigma,
                                         label=f'rabi {path.stem}')
        run.save_fit(f'rabi_{path.stem}', result, f'Damped sine ({path.name})')


def fit_gaussian(run):
    config = run.config
    _require_inputs(config)
    for path in config.inputs:
        columns = read_columns(path, ('x', 'y'), ('sigma',))
        result = fitters.fit_gaussian(columns['x'], columns['y'], sigma_column(columns, path),
                                      label=f'gaussian {path.stem}')
        run.save_fit(f'gaussian_{path.stem}', result, f'Gaussian peak ({path.name})')


def fit_sinphi_scaling(run):
    config = run.config
    _require_inputs(config, count=1)
    path = config.inputs[0]
    columns = read_columns(path, ('omega_e_hz', 'sin_phi'), ('sigma',))
    result = coherence.fit_sinphi_scaling(columns['omega_e_hz'], columns['sin_phi'],
                                          config.number('omega_e0_hz'), sigma=sigma_column(columns, path))
    run.save_fit('sinphi_scaling', result, 'sin(phi) = sin(phi0) * omega_e0 / omega_e')


def fit_t2_scaling(run):
    config = run.config
    _require_inputs(config, count=1)
    path = config.inputs[0]
    columns = read_columns(path, ('omega_e_hz', 'T2_s'), ('sigma',))
    result = coherence.fit_t2_scaling(columns['omega_e_hz'], columns['T2_s'],
                                      config.number('omega_e0_hz'), config.number('alpha_bar'),
                                      sigma=sigma_column(columns, path))
    run.save_fit('t2_scaling', result, 'T2 = coefficient * (omega_e/omega_e0)^(2/alpha) + offset')


FIT = {'knight': fit_knight, 'visibility': fit_visibility, 'echo': fit_echo, 'magnon': fit_magnon,
       'background': fit_background, 'rabi': fit_rabi, 'gaussian': fit_gaussian,
       'sinphi-scaling': fit_sinphi_scaling, 't2-scaling': fit_t2_scaling}


def cmd_fit(run):
    FIT[run.config.subcommand](run)
    if run.config.pdf and run.sections:
        save_report_as_pdf(run.sections, run.path('fit_report.pdf'), title=f'Fit report: {run.config.subcommand}')


# --- compare ---

def cmd_compare(run):
    config = run.config
    _require_inputs(config)
    reference = read_reference_rows(config.reference or DEFAULT_REFERENCE)
    table = make_comparison_table(collect_estimates(config.inputs), reference,
                                  n_sigma=config.number('n_sigma'))
    print_summary('Comparison with reference values', table)
    path = run.path('comparison.csv')
    save_report_as_csv(table, path)
    write_metadata(path, run.command_line, config.to_dict())
    if config.pdf:
        save_comparison_pdf(table, run.path('comparison.pdf'))


COMMANDS = {'predict-omega-mag': cmd_predict_omega_mag, 'simulate': cmd_simulate,
            'fit': cmd_fit, 'compare': cmd_compare}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', metavar='JSON', help='Run configuration document.')
    common.add_argument('--output-dir', metavar='DIR', help='Output directory (overrides config and CSMAG_OUTPUT_DIR).')
    common.add_argument('--seed', type=int, help='Random seed for synthetic noise.')
    common.add_argument('--registry', metavar='JSON', help='Species registry override.')
    common.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                        help='Override one scenario parameter (value parsed as JSON when possible).')
    common.add_argument('-v', '--verbose', action='store_true', help='Debug logging.')
    common.add_argument('-q', '--quiet', action='store_true', help='Warnings only.')

    parser = argparse.ArgumentParser(prog='csmag', description='Central-spin magnon toolkit.')
    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('predict-omega-mag', parents=[common], help='Predict Omega_mag versus omega_e.')
    simulate = sub.add_parser('simulate', parents=[common], help='Generate synthetic data.')
    simulate.add_argument('scenario', choices=SIMULATIONS)
    fit = sub.add_parser('fit', parents=[common], help='Fit data files.')
    fit.add_argument('kind', choices=FITS)
    fit.add_argument('inputs', nargs='+', metavar='FILE')
    fit.add_argument('--pdf', action='store_true', help='Also write fit_report.pdf.')
    compare = sub.add_parser('compare', parents=[common], help='Compare fit documents with reference values.')
    compare.add_argument('inputs', nargs='+', metavar='FILE')
    compare.add_argument('--reference', metavar='CSV', help='Reference CSV (quantity, value, sigma, unit).')
    compare.add_argument('--pdf', action='store_true', help='Also write comparison.pdf.')
    return parser


def _error_document(exc):
    details = exc.details() if isinstance(exc, ToolkitError) else {}
    return json.dumps({'error': type(exc).__name__, 'message': str(exc), 'details': details},
                      default=str)


def main(argv=None):
    """
    Run one command.

    Args:
        argv (list of str, optional): Arguments without the program name.
    Returns:
        int: Exit code (0 success, 2 toolkit error, 1 unexpected error).
    """
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    try:
        config = build_config(
            args.command, getattr(args, 'scenario', None) or getattr(args, 'kind', None),
            config_path=args.config, output_dir=args.output_dir, seed=args.seed,
            registry=args.registry, assignments=args.set, inputs=getattr(args, 'inputs', ()),
            pdf=getattr(args, 'pdf', False), reference=getattr(args, 'reference', None))
        COMMANDS[args.command](Run(config, ' '.join(['csmag'] + argv)))
    except ToolkitError as exc:
        logger.error('%s: %s', type(exc).__name__, exc)
        print(_error_document(exc), file=sys.stderr)
        return 2
    except Exception as exc:
        logger.debug(traceback.format_exc())
        print(_error_document(exc), file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
