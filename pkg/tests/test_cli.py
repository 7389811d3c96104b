"""
Unit tests for the batch command-line front-end (cli.py)

Each test runs main() against a temporary output directory; summaries printed
to stdout are captured and discarded.
"""
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))
import contextlib
import io
import json
import math
import tempfile
import unittest
from pathlib import Path
from src.cli import build_parser, main
from src.datafiles import read_columns


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


class TestCli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.out = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_predict_omega_mag(self):
        code, stdout, _ = run('predict-omega-mag', '--output-dir', str(self.out), '-q')
        self.assertEqual(code, 0)
        columns = read_columns(self.out / 'omega_mag_prediction.csv', ('omega_e_hz', 'omega_mag_hz'))
        self.assertAlmostEqual(columns['omega_mag_hz'][0] / 1.025e6, 1.0, delta=0.1)
        products = columns['omega_mag_hz'] * columns['omega_e_hz']
        self.assertAlmostEqual(products[-1] / products[0], 1.0, places=9)
        self.assertTrue((self.out / 'omega_mag_prediction.meta.json').exists())
        doc = json.loads((self.out / 'omega_mag_scaling.json').read_text(encoding='utf-8'))
        self.assertEqual(doc['parameters'][0]['parameter'], 'omega_mag0')
        self.assertIn('Magnon Rabi rate prediction', stdout)

    def test_simulate_and_fit_visibility(self):
        sets = ['--set', 'omega_e_hz=[3e9]', '--set', 'n_times=301', '--set', 'noise=0.01',
                '--set', 'tau_d_s=2e-5', '--set', 'v0=0.95']
        code, _, err = run('simulate', 'visibility', '--output-dir', str(self.out), '--seed', '4', '-q', *sets)
        self.assertEqual(code, 0, err)
        files = sorted(str(p) for p in self.out.glob('visibility_CP*_3GHz.csv'))
        self.assertEqual(len(files), 2)
        code, _, err = run('fit', 'visibility', *files, '--output-dir', str(self.out), '--pdf', '-q')
        self.assertEqual(code, 0, err)
        doc = json.loads((self.out / 'visibility_fit.json').read_text(encoding='utf-8'))
        estimates = {p['parameter']: p['estimate'] for p in doc['parameters']}
        self.assertAlmostEqual(estimates['sin_phi_0'] / 0.207, 1.0, delta=0.02)
        self.assertTrue((self.out / 'fit_report.pdf').exists())
        self.assertTrue((self.out / 'visibility_fit_residuals.csv').exists())

    def test_seeded_runs_are_identical(self):
        a, b = self.out / 'a', self.out / 'b'
        for target in (a, b):
            code, _, _ = run('simulate', 'rabi', '--output-dir', str(target), '--seed', '7', '-q',
                             '--set', 'noise=0.01', '--set', 'spread_points=5')
            self.assertEqual(code, 0)
        self.assertEqual((a / 'rabi.csv').read_bytes(), (b / 'rabi.csv').read_bytes())

    def test_fit_t2_scaling_and_compare(self):
        data = self.out / 't2.csv'
        data.write_text('omega_e_hz,T2_s\n3e9,1.93e-6\n4e9,2.21e-6\n5e9,2.49e-6\n6e9,2.72e-6\n',
                        encoding='utf-8')
        code, _, err = run('fit', 't2-scaling', str(data), '--output-dir', str(self.out), '-q')
        self.assertEqual(code, 0, err)
        code, _, err = run('compare', str(self.out / 't2_scaling.json'), '--output-dir', str(self.out), '-q')
        self.assertEqual(code, 0, err)
        columns = (self.out / 'comparison.csv').read_text(encoding='utf-8').splitlines()
        self.assertTrue(columns[0].startswith('Quantity,'))
        self.assertEqual(len(columns), 3)

    def test_fit_knight(self):
        for sideband, state, center in (('pos', 'up', 44.797e6), ('pos', 'down', 44.537e6),
                                        ('neg', 'up', -44.522e6), ('neg', 'down', -44.812e6)):
            path = self.out / f'{sideband}_{state}.csv'
            lines = ['detuning_hz,counts']
            for k in range(101):
                d = center - 0.5e6 + k * 1e4
                lines.append(f'{d!r},{5.0 + 100.0 * 2.718281828459045 ** (-0.5 * ((d - center) / 0.1e6) ** 2)!r}')
            path.write_text('\n'.join(lines) + '\n', encoding='utf-8')
            path.with_suffix('.json').write_text(json.dumps({'sideband': sideband, 'electron_state': state}),
                                                 encoding='utf-8')
        inputs = [str(p) for p in sorted(self.out.glob('*_*.csv'))]
        code, _, err = run('fit', 'knight', *inputs, '--output-dir', str(self.out), '-q')
        self.assertEqual(code, 0, err)
        doc = json.loads((self.out / 'knight.json').read_text(encoding='utf-8'))
        estimates = {p['parameter']: p['estimate'] for p in doc['parameters']}
        self.assertAlmostEqual(estimates['a_single_hz'], 0.275e6, delta=10.0)

    def read_json(self, name):
        return json.loads((self.out / name).read_text(encoding='utf-8'))

    def estimates(self, name):
        return {p['parameter']: p['estimate'] for p in self.read_json(name)['parameters']}

    def test_simulate_sideband_map(self):
        code, _, err = run('simulate', 'sideband-map', '--output-dir', str(self.out), '-q',
                           '--set', 'omega_e_hz=[3e9]', '--set', 'n_delta=21',
                           '--set', 'n_drive_times=5', '--set', 'spread_points=3')
        self.assertEqual(code, 0, err)
        columns = read_columns(self.out / 'sideband_map.csv', ('delta_hz', 'time_s', 'population'))
        self.assertEqual(columns['population'].size, 21 * 5)
        self.assertEqual(columns['delta_hz'][0], -100e6)
        meta = self.read_json('sideband_map.meta.json')
        for key in ('output', 'command', 'generated', 'parameters', 'versions', 'map'):
            self.assertIn(key, meta)
        self.assertEqual(meta['parameters']['params']['n_delta'], 21)
        labels = [r['label'] for r in meta['map']['resonances']]
        self.assertEqual(len(labels), 7)
        self.assertEqual(labels[0], 'carrier')
        self.assertIn('75As-', labels)
        self.assertIsInstance(meta['map']['warnings'], list)

    def test_simulate_and_fit_magnon(self):
        sets = ['--set', 'drive_time_max_s=2e-6', '--set', 'n_drive_times=41',
                '--set', 'spread_points=5', '-q', '--output-dir']
        for name, rate in (('neg', '0.95e6'), ('pos', '1.1e6')):
            code, _, err = run('simulate', 'rabi', '--set', f'omega_mag_hz={rate}', *sets, str(self.out / name))
            self.assertEqual(code, 0, err)
        inputs = [str(self.out / name / 'rabi.csv') for name in ('neg', 'pos')]
        code, stdout, err = run('fit', 'magnon', *inputs, '--output-dir', str(self.out),
                                '--set', 'spread_points=5')
        self.assertEqual(code, 0, err)
        estimates = self.estimates('magnon_rabi.json')
        self.assertAlmostEqual(estimates['omega_mag_neg'] / 0.95e6, 1.0, delta=0.05)
        self.assertAlmostEqual(estimates['omega_mag_pos'] / 1.1e6, 1.0, delta=0.05)
        self.assertIn('Gamma', estimates)
        self.assertIn('warnings', self.read_json('magnon_rabi.meta.json'))
        self.assertTrue((self.out / 'magnon_rabi_residuals.csv').exists())
        self.assertIn('Magnon Rabi fit', stdout)

    def test_simulate_and_fit_background(self):
        code, _, err = run('simulate', 'rabi', '--output-dir', str(self.out), '-q',
                           '--set', 'omega_mag_hz=0', '--set', 'drive_time_max_s=2e-6',
                           '--set', 'spread_points=3')
        self.assertEqual(code, 0, err)
        code, _, err = run('fit', 'background', str(self.out / 'rabi.csv'), '--output-dir', str(self.out), '-q')
        self.assertEqual(code, 0, err)
        estimates = self.estimates('background.json')
        self.assertAlmostEqual(estimates['gamma1'] / 3.4e5, 1.0, delta=0.01)
        self.assertAlmostEqual(estimates['B'], 0.0, delta=1e-3)
        meta = self.read_json('background.meta.json')
        self.assertEqual(meta['output'], 'background.json')
        self.assertEqual(meta['parameters']['params']['tau_d_s'], 'inf')

    def test_fit_echo(self):
        data = self.out / 'cp1.csv'
        lines = ['tau_s,visibility,sigma']
        for k in range(41):
            tau = k * 0.15e-6
            lines.append(f'{tau!r},{math.exp(-(tau / 2e-6) ** 1.5)!r},0.01')
        data.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        code, _, err = run('fit', 'echo', str(data), '--output-dir', str(self.out), '-q')
        self.assertEqual(code, 0, err)
        estimates = self.estimates('echo_cp1.json')
        self.assertAlmostEqual(estimates['T2'] / 2e-6, 1.0, places=4)
        self.assertAlmostEqual(estimates['alpha'], 1.5, places=3)
        self.assertEqual(self.read_json('echo_cp1.meta.json')['warnings'], [])

    def test_fit_rabi(self):
        data = self.out / 'trace.csv'
        lines = ['time_s,counts']
        for k in range(101):
            t = k * 20e-9
            lines.append(f'{t!r},{100.0 + 40.0 * math.exp(-t / 1e-6) * math.sin(2 * math.pi * 5.2e6 * t + 0.3)!r}')
        data.write_text('\n'.join(lines) + '\n', encoding='utf-8')
        code, _, err = run('fit', 'rabi', str(data), '--output-dir', str(self.out), '--pdf', '-q')
        self.assertEqual(code, 0, err)
        estimates = self.estimates('rabi_trace.json')
        self.assertAlmostEqual(estimates['frequency'] / 5.2e6, 1.0, places=4)
        self.assertAlmostEqual(estimates['decay'] / 1e-6, 1.0, places=3)
        self.assertAlmostEqual(estimates['amplitude'], 80.0, places=2)
        self.assertTrue((self.out / 'rabi_trace.meta.json').exists())
        self.assertTrue((self.out / 'fit_report.pdf').exists())

    def test_empty_time_grid(self):
        code, _, err = run('simulate', 'rabi', '--output-dir', str(self.out), '-q',
                           '--set', 'n_drive_times=0')
        self.assertEqual(code, 2)
        doc = json.loads(err.strip().splitlines()[-1])
        self.assertEqual(doc['error'], 'ConfigError')
        self.assertIn('empty grid', doc['message'])
        self.assertFalse((self.out / 'rabi.csv').exists())

    def test_toolkit_error_exit_code(self):
        code, _, err = run('fit', 'gaussian', str(self.out / 'missing.csv'), '--output-dir', str(self.out), '-q')
        self.assertEqual(code, 2)
        doc = json.loads(err.strip().splitlines()[-1])
        self.assertEqual(doc['error'], 'ConfigError')

    def test_schema_error_document(self):
        data = self.out / 'xy.csv'
        data.write_text('x,y\n0,1\n1,oops\n', encoding='utf-8')
        code, _, err = run('fit', 'gaussian', str(data), '--output-dir', str(self.out), '-q')
        self.assertEqual(code, 2)
        doc = json.loads(err.strip().splitlines()[-1])
        self.assertEqual(doc['error'], 'SchemaError')
        self.assertEqual(doc['details']['rows'], [3])

    def test_parser(self):
        args = build_parser().parse_args(['simulate', 'sideband-map', '--set', 'n_delta=11', '--seed', '2'])
        self.assertEqual(args.scenario, 'sideband-map')
        self.assertEqual(args.set, ['n_delta=11'])
        self.assertEqual(args.seed, 2)

if __name__ == "__main__":
    unittest.main()
