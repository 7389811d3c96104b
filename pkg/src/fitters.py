"""
fitters.py: Curve-Fitting Backbone and Spectroscopy Analysis Recipes

This module provides the weighted nonlinear least-squares engine shared by every
fit in the toolkit, plus the analysis recipes that turn spectra and time traces
into physical constants.

Features:
---------
- FitResult: estimates, 1-sigma uncertainties, residuals and diagnostics
- nlls_solve: coarse grid seeding, Nelder-Mead refinement and bounded
  least-squares polish (lmfit), covariance from the Gauss-Newton normal matrix
- Shared-parameter structure through ResidualBlock (local -> global names)
- Gaussian sideband peaks, time-locked sideband extraction, Knight shift
- Damped-sine Rabi calibration and counts-to-population conversion
- Background spin-flip rate (single and global) and staged magnon Rabi fit

Functions:
----------
- nlls_solve(residual, init, bounds, fixed, grid, ...):
    Solve a least-squares problem; residual is a callable or list of ResidualBlock.
- fit_gaussian(x, y, sigma, center):
    Gaussian peak plus constant background.
- extract_sideband_populations(spectrum):
    Amplitude and background per time step with the center locked.
- knight_shift_from_differences(diffs, sigmas, hyperfine_A) / knight_shift_analysis(spectra, hyperfine_A):
    Single-nucleus hyperfine constant and nuclei counts.
- fit_damped_sine(t, y, sigma):
    Rabi frequency and peak-to-peak amplitude.
- counts_to_population(counts, rabi_amplitude_counts):
    Linear rescaling of counts to spin-down population.
- fit_background_gamma1(t, p, sigma) / fit_background_gamma1_global(datasets):
    Spin-flip rate from the background saturation.
- fit_magnon_rabi(neg, pos, gamma1_fixed, t2_star):
    Per-sideband magnon Rabi rate with a shared dephasing rate.
- fit_inverse_scaling(x, y, x0, sigma):
    One-parameter y = y0 * x0 / x law.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import lmfit
import numpy as np

from . import magnon
from .errors import (DegenerateDataError, FitConvergenceError, FitError, ParameterError,
                     SingularFitError)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
NONFINITE_PENALTY = 1e10
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))


@dataclass
class FitResult:
    """
    Outcome of a least-squares fit.

    Attributes:
        names (list of str): Parameter names, in problem order.
        values (list of float): Estimates.
        errors (list of float): 1-sigma uncertainties (inf when undetermined).
        chisqr (float): Weighted residual sum of squares.
        success (bool): Convergence flag.
        nfev (int): Residual evaluations spent in all stages.
        ndata (int): Number of residuals.
        residual (numpy.ndarray): Weighted residual vector at the estimate.
        at_bound (dict): name -> 'lower'/'upper' for parameters pinned at a bound.
        flags (list of str): Diagnostic flags (e.g. 'degenerate').
        warnings (list of str): Human-readable diagnostics.
        derived (dict): name -> (value, sigma) for quantities derived after the fit.
        label (str): Free-form description of the fit.
    """
    names: list
    values: list
    errors: list
    chisqr: float
    success: bool
    nfev: int
    ndata: int
    residual: np.ndarray = None
    at_bound: dict = field(default_factory=dict)
    flags: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    derived: dict = field(default_factory=dict)
    label: str = ''

    def __getitem__(self, name):
        if name in self.derived:
            return self.derived[name][0]
        return self.values[self.names.index(name)]

    def __contains__(self, name):
        return name in self.names or name in self.derived

    def sigma(self, name):
        if name in self.derived:
            return self.derived[name][1]
        return self.errors[self.names.index(name)]

    @property
    def params(self):
        return dict(zip(self.names, self.values))

    @property
    def redchi(self):
        dof = self.ndata - self.nvarys
        return self.chisqr / dof if dof > 0 else float('nan')

    @property
    def nvarys(self):
        return len(self.names)

    def warn(self, message, flag=None):
        logger.warning('%s: %s', self.label or 'fit', message)
        self.warnings.append(message)
        if flag and flag not in self.flags:
            self.flags.append(flag)

    def add_derived(self, name, value, sigma):
        self.derived[name] = (float(value), float(sigma))

    def rows(self):
        """Parameter table rows (parameter, estimate, sigma) including derived quantities."""
        rows = [{'parameter': n, 'estimate': v, 'sigma': e,
                 'note': self.at_bound.get(n, '')}
                for n, v, e in zip(self.names, self.values, self.errors)]
        for name, (value, sigma) in self.derived.items():
            rows.append({'parameter': name, 'estimate': value, 'sigma': sigma, 'note': 'derived'})
        return rows

    def as_dict(self):
        return {
            'label': self.label,
            'parameters': [{'parameter': r['parameter'], 'estimate': _json_float(r['estimate']),
                            'sigma': _json_float(r['sigma'])} for r in self.rows()],
            'chisqr': _json_float(self.chisqr),
            'redchi': _json_float(self.redchi),
            'ndata': self.ndata,
            'nfev': self.nfev,
            'success': self.success,
            'at_bound': dict(self.at_bound),
            'flags': list(self.flags),
            'warnings': list(self.warnings),
        }


def _json_float(x):
    x = float(x)
    if math.isfinite(x):
        return x
    return str(x)


@dataclass(frozen=True)
class ResidualBlock:
    """
    One dataset of a global fit.

    Attributes:
        func (callable): local parameter dict -> weighted residual array.
        params (dict): local name -> global parameter name. Datasets that map
            a local name to the same global name share that parameter.
        label (str): Dataset label for diagnostics.
    """
    func: object
    params: dict
    label: str = ''

    def __call__(self, values):
        return np.asarray(self.func({local: values[g] for local, g in self.params.items()}),
                          dtype=float)


class _Objective:
    """Residual wrapper that counts evaluations and remembers the best point."""

    def __init__(self, residual, names, workers=None):
        self.names = names
        self.nfev = 0
        self.best_chisqr = math.inf
        self.best_values = None
        if callable(residual):
            self.blocks = None
            self.residual = residual
        else:
            self.blocks = list(residual)
            if not self.blocks:
                raise ParameterError('global fit needs at least one residual block')
            self.residual = None
        self.workers = workers

    def evaluate(self, values):
        if self.blocks is None:
            r = np.asarray(self.residual(values), dtype=float).ravel()
        elif self.workers and len(self.blocks) > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(lambda b: b(values).ravel(), self.blocks))
            r = np.concatenate(parts)
        else:
            r = np.concatenate([b(values).ravel() for b in self.blocks])
        self.nfev += 1
        r = np.where(np.isfinite(r), r, NONFINITE_PENALTY)
        chisqr = float(np.dot(r, r))
        if chisqr < self.best_chisqr:
            self.best_chisqr = chisqr
            self.best_values = dict(values)
        return r

    def __call__(self, params):
        return self.evaluate(params.valuesdict())


def _build_params(init, bounds, fixed):
    params = lmfit.Parameters()
    for name, value in init.items():
        lo, hi = bounds.get(name, (-np.inf, np.inf))
        lo = -np.inf if lo is None else lo
        hi = np.inf if hi is None else hi
        if lo >= hi:
            raise ParameterError(f'empty bound interval for {name}: [{lo}, {hi}]')
        value = float(min(max(value, lo), hi))
        params.add(name, value=value, min=lo, max=hi, vary=name not in fixed)
    return params


def _set_values(params, values):
    for name, value in values.items():
        if name in params:
            par = params[name]
            par.value = float(min(max(value, par.min), par.max))


def _grid_seed(objective, params, grid):
    """Coordinate-wise coarse grid search; keeps the best value of each gridded parameter."""
    current = params.valuesdict()
    r = objective.evaluate(current)
    best = float(np.dot(r, r))
    for name, candidates in grid.items():
        if name not in params or not params[name].vary:
            continue
        par = params[name]
        for value in candidates:
            if not par.min <= value <= par.max:
                continue
            trial = dict(current)
            trial[name] = float(value)
            r = objective.evaluate(trial)
            chisqr = float(np.dot(r, r))
            if chisqr < best:
                best = chisqr
                current = trial
    _set_values(params, current)


def _pinned(values, params, init):
    pinned = {}
    for name, par in params.items():
        if not par.vary:
            continue
        x = values[name]
        for side, bound in (('lower', par.min), ('upper', par.max)):
            if not np.isfinite(bound):
                continue
            scale = max(abs(x), abs(bound), abs(init.get(name, 0.0)), 1e-300)
            if abs(x - bound) <= 1e-6 * scale:
                pinned[name] = side
    return pinned


def _jacobian(objective, values, names, params):
    """Central-difference Jacobian of the residual vector, one-sided next to bounds."""
    base = dict(values)
    columns = []
    for name in names:
        x = base[name]
        par = params[name]
        h = 1e-6 * abs(x) if x != 0 else 1e-8
        up, down = x + h, x - h
        if up > par.max:
            up = x
        if down < par.min:
            down = x
        if up == down:
            columns.append(np.zeros_like(objective.evaluate(base)))
            continue
        plus = dict(base)
        plus[name] = up
        minus = dict(base)
        minus[name] = down
        columns.append((objective.evaluate(plus) - objective.evaluate(minus)) / (up - down))
    return np.column_stack(columns)


def _covariance(jac, scale):
    norms = np.linalg.norm(jac, axis=0)
    if np.any(norms == 0):
        return None
    jn = jac / norms
    normal = jn.T @ jn
    if np.linalg.cond(normal) > 1e14:
        return None
    inv = np.linalg.inv(normal)
    return scale * inv / np.outer(norms, norms)


def nlls_solve(residual, init, bounds=None, fixed=(), grid=None, simplex=True,
               max_nfev=None, tol=DEFAULT_TOL, workers=None, label=''):
    """
    Weighted nonlinear least squares with shared parameters.

    Stages: optional coordinate-wise coarse grid search, Nelder-Mead refinement,
    then a bounded trust-region least-squares polish. Uncertainties come from the
    inverse Gauss-Newton normal matrix at the solution, scaled by the residual
    variance chisqr / (ndata - nvarys).

    Args:
        residual (callable or list of ResidualBlock): values dict -> weighted
            residuals, or datasets whose residuals are concatenated in list order.
        init (dict): Initial value of every global parameter (insertion order kept).
        bounds (dict, optional): name -> (lower, upper); None means unbounded.
        fixed (iterable, optional): Names held at their initial value.
        grid (dict, optional): name -> candidate values for the coarse seed.
        simplex (bool, optional): Run the Nelder-Mead stage (default True).
        max_nfev (int, optional): Evaluation cap of the polish stage.
        tol (float, optional): xtol/ftol/gtol of the polish stage.
        workers (int, optional): Threads evaluating residual blocks; results are
            concatenated in block order regardless.
        label (str, optional): Label carried into the result and log messages.
    Returns:
        FitResult: Estimates and diagnostics (fixed parameters are not listed).
    Raises:
        ParameterError: If the residual is not finite at init or data are too few.
        FitConvergenceError: If the polish stage hits its cap.
        SingularFitError: If the normal matrix cannot be inverted.
    """
    bounds = dict(bounds or {})
    fixed = set(fixed)
    grid = dict(grid or {})
    init = {name: float(value) for name, value in init.items()}
    objective = _Objective(residual, list(init), workers=workers)

    r0 = np.asarray(
        objective.residual(init) if objective.blocks is None
        else np.concatenate([b(init).ravel() for b in objective.blocks]), dtype=float)
    if not np.all(np.isfinite(r0)):
        raise ParameterError(f'{label or "fit"}: residual is not finite at the initial point')

    params = _build_params(init, bounds, fixed)
    varying = [n for n in init if n not in fixed]
    if not varying:
        raise ParameterError(f'{label or "fit"}: no free parameters')
    if r0.size < len(varying):
        raise ParameterError(
            f'{label or "fit"}: {r0.size} residuals cannot determine {len(varying)} parameters')
    if max_nfev is None:
        max_nfev = 2000 * (len(varying) + 1)

    if grid:
        _grid_seed(objective, params, grid)

    minimizer = lmfit.Minimizer(objective, params, nan_policy='propagate')
    if simplex:
        minimizer.minimize(method='nelder', params=params,
                           max_nfev=200 * (len(varying) + 1))
        _set_values(params, objective.best_values)

    polish = minimizer.minimize(method='least_squares', params=params, max_nfev=max_nfev,
                                xtol=tol, ftol=tol, gtol=tol, x_scale='jac')
    values = polish.params.valuesdict()
    r = objective.evaluate(values)
    chisqr = float(np.dot(r, r))
    ndata = r.size
    at_bound = _pinned(values, params, init)

    result = FitResult(
        names=varying,
        values=[float(values[n]) for n in varying],
        errors=[math.inf] * len(varying),
        chisqr=chisqr,
        success=bool(polish.success),
        nfev=objective.nfev,
        ndata=ndata,
        residual=r,
        at_bound=at_bound,
        label=label,
    )
    if not polish.success:
        logger.warning('%s: polish stage stopped without converging (%s)',
                       label or 'fit', polish.message)
        raise FitConvergenceError(
            f'{label or "fit"} did not converge after {objective.nfev} evaluations: {polish.message}',
            result=result)

    dof = ndata - len(varying)
    scale = chisqr / dof if dof > 0 else 1.0
    jac = _jacobian(objective, values, varying, params)
    cov = _covariance(jac, scale)
    if cov is None and at_bound:
        free = [i for i, n in enumerate(varying) if n not in at_bound]
        sub = _covariance(jac[:, free], scale) if free else None
        if sub is not None:
            cov = np.full((len(varying), len(varying)), np.inf)
            cov[np.ix_(free, free)] = sub
    if cov is None:
        raise SingularFitError(f'{label or "fit"}: normal matrix is singular', result=result)
    result.errors = [float(math.sqrt(c)) if c >= 0 else math.inf for c in np.diag(cov)]
    result.nfev = objective.nfev
    for name, side in at_bound.items():
        result.warn(f'parameter {name} pinned at its {side} bound', flag='at_bound')
    logger.debug('%s: chisqr=%.6g after %d evaluations', label or 'fit', chisqr, objective.nfev)
    return result


def _weights(y, sigma):
    if sigma is None:
        return np.ones_like(y)
    sigma = np.asarray(sigma, dtype=float)
    if sigma.shape != y.shape or np.any(sigma <= 0):
        raise ParameterError('sigma must be positive and match the data shape')
    return 1.0 / sigma


def _arrays(x, y, minimum, label):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ParameterError(f'{label}: x and y must be 1-D arrays of equal length')
    if x.size < minimum:
        raise ParameterError(f'{label}: needs at least {minimum} samples, got {x.size}')
    return x, y


# --- Gaussian sideband peaks ---

def gaussian(x, center, width, amplitude, background):
    return background + amplitude * np.exp(-0.5 * ((x - center) / width) ** 2)


def _gaussian_guess(x, y):
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    background = float(np.median(ys))
    peak = int(np.argmax(ys))
    amplitude = float(ys[peak] - background)
    half = background + 0.5 * amplitude
    left = peak
    while left > 0 and ys[left] > half:
        left -= 1
    right = peak
    while right < ys.size - 1 and ys[right] > half:
        right += 1
    fwhm = xs[right] - xs[left]
    span = xs[-1] - xs[0]
    if not fwhm > 0:
        fwhm = span / 10.0
    return {'center': float(xs[peak]), 'width': float(fwhm / FWHM_PER_SIGMA),
            'amplitude': amplitude, 'background': background}


def _degenerate_gaussian(x, y, center, label):
    result = FitResult(
        names=['center', 'width', 'amplitude', 'background'],
        values=[float(center if center is not None else x[np.argmax(y)]),
                float((x.max() - x.min()) / 10.0), 0.0, float(np.median(y))],
        errors=[math.inf, math.inf, 0.0, 0.0],
        chisqr=0.0, success=False, nfev=0, ndata=x.size,
        residual=np.zeros_like(y), label=label)
    result.warn('flat data: no peak to fit', flag='degenerate')
    return result


def fit_gaussian(x, y, sigma=None, center=None, label='gaussian'):
    """
    Least-squares Gaussian peak with constant background.

    Model: background + amplitude * exp(-(x - center)^2 / (2 width^2)).
    Initial guesses: center at the maximum, width from the half-maximum
    crossings, background at the median.

    Args:
        x, y (array-like): Samples (at least 5).
        sigma (array-like, optional): Per-point 1-sigma weights.
        center (float, optional): Fix the center instead of fitting it.
    Returns:
        FitResult: Parameters center, width, amplitude, background. Flat data
        return a result flagged 'degenerate' with zero amplitude.
    Raises:
        FitConvergenceError: If the solver does not converge.
    """
    x, y = _arrays(x, y, 5, label)
    w = _weights(y, sigma)
    if np.ptp(y) == 0:
        return _degenerate_gaussian(x, y, center, label)
    guess = _gaussian_guess(x, y)
    if center is not None:
        guess['center'] = float(center)
    span = float(np.ptp(x))
    spacing = float(np.min(np.diff(np.unique(x)))) if np.unique(x).size > 1 else span

    def residual(p):
        return (gaussian(x, p['center'], p['width'], p['amplitude'], p['background']) - y) * w

    bounds = {'center': (x.min(), x.max()), 'width': (spacing / 10.0, 2.0 * span)}
    guess['width'] = min(max(guess['width'], spacing / 5.0), span)
    fixed = ('center',) if center is not None else ()
    try:
        result = nlls_solve(residual, guess, bounds=bounds, fixed=fixed, label=label)
    except SingularFitError as exc:
        result = exc.result
        result.errors = [math.inf] * len(result.names)
        result.warn('peak parameters undetermined', flag='degenerate')
        return result
    amp, amp_sigma = result['amplitude'], result.sigma('amplitude')
    if abs(amp) < 2.0 * amp_sigma:
        result.warn('amplitude consistent with zero', flag='amplitude_consistent_with_zero')
    return result


@dataclass(frozen=True)
class SidebandSpectrum:
    """
    Counts (or population) of one nuclear sideband.

    Attributes:
        detuning (numpy.ndarray): Strictly increasing detuning grid (Hz).
        values (numpy.ndarray): Shape (n_detuning,) or (n_detuning, n_time).
        electron_state (str): 'up' or 'down' initial electron state.
        sideband (str): 'neg' or 'pos'.
        times (numpy.ndarray, optional): Rabi drive times (s) for 2-D spectra.
    """
    detuning: np.ndarray
    values: np.ndarray
    electron_state: str = 'up'
    sideband: str = 'pos'
    times: np.ndarray = None

    def __post_init__(self):
        detuning = np.asarray(self.detuning, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if detuning.ndim != 1 or detuning.size < 2 or np.any(np.diff(detuning) <= 0):
            raise ParameterError('detuning grid must be strictly increasing')
        if values.shape[0] != detuning.size:
            raise ParameterError('values must have one row per detuning')
        if self.electron_state not in ('up', 'down'):
            raise ParameterError(f'electron_state must be up or down, got {self.electron_state!r}')
        if self.sideband not in ('neg', 'pos'):
            raise ParameterError(f'sideband must be neg or pos, got {self.sideband!r}')
        if np.any(values < 0):
            logger.warning('sideband spectrum holds negative counts')
        object.__setattr__(self, 'detuning', detuning)
        object.__setattr__(self, 'values', values)
        if self.times is not None:
            object.__setattr__(self, 'times', np.asarray(self.times, dtype=float))

    def summed(self):
        """Spectrum summed along the time axis."""
        return self.values if self.values.ndim == 1 else self.values.sum(axis=1)


@dataclass
class SidebandPopulations:
    """Time-resolved Gaussian amplitudes and backgrounds of one sideband."""
    center: float
    center_sigma: float
    times: np.ndarray
    amplitude: np.ndarray
    amplitude_sigma: np.ndarray
    background: np.ndarray
    background_sigma: np.ndarray


def extract_sideband_populations(spectrum):
    """
    Gaussian amplitude and background at every drive time, center locked.

    The center is fitted once on the time-summed spectrum and held fixed for
    the per-time fits.

    Args:
        spectrum (SidebandSpectrum): 2-D spectrum with times.
    Returns:
        SidebandPopulations: Per-time amplitude and background with 1-sigma.
    """
    if spectrum.values.ndim != 2 or spectrum.times is None:
        raise ParameterError('time-locked extraction needs a 2-D spectrum with times')
    summed = fit_gaussian(spectrum.detuning, spectrum.summed(), label='sideband (time-summed)')
    center = summed['center']
    amplitude, amplitude_sigma, background, background_sigma = [], [], [], []
    for k in range(spectrum.values.shape[1]):
        step = fit_gaussian(spectrum.detuning, spectrum.values[:, k], center=center,
                            label=f'sideband t[{k}]')
        amplitude.append(step['amplitude'])
        amplitude_sigma.append(step.sigma('amplitude'))
        background.append(step['background'])
        background_sigma.append(step.sigma('background'))
    return SidebandPopulations(
        center=center, center_sigma=summed.sigma('center'), times=spectrum.times,
        amplitude=np.array(amplitude), amplitude_sigma=np.array(amplitude_sigma),
        background=np.array(background), background_sigma=np.array(background_sigma))


# --- Knight shift ---

@dataclass
class KnightResult:
    """
    Knight-shift analysis outcome.

    Attributes:
        a_single (float): Single-nucleus hyperfine constant (Hz).
        a_sigma (float): 1-sigma of a_single (Hz).
        N_species (float): A / a, nuclei of the analyzed species.
        N_species_sigma (float): First-order propagated 1-sigma.
        N_total (float): 2 * N_species (one As per zincblende cell).
        N_total_sigma (float): 1-sigma of N_total.
        differences (dict): sideband -> (difference Hz, sigma Hz).
        warnings (list of str): Consistency diagnostics.
    """
    a_single: float
    a_sigma: float
    N_species: float
    N_species_sigma: float
    N_total: float
    N_total_sigma: float
    differences: dict
    warnings: list = field(default_factory=list)

    def rows(self):
        rows = [{'parameter': f'difference_{k}_hz', 'estimate': d, 'sigma': s, 'note': ''}
                for k, (d, s) in self.differences.items()]
        rows += [
            {'parameter': 'a_single_hz', 'estimate': self.a_single, 'sigma': self.a_sigma, 'note': ''},
            {'parameter': 'N_species', 'estimate': self.N_species, 'sigma': self.N_species_sigma,
             'note': 'A / a'},
            {'parameter': 'N_total', 'estimate': self.N_total, 'sigma': self.N_total_sigma,
             'note': '2 N_species'},
        ]
        return rows

    def as_dict(self):
        return {
            'label': 'knight shift',
            'parameters': [{'parameter': r['parameter'], 'estimate': _json_float(r['estimate']),
                            'sigma': _json_float(r['sigma'])} for r in self.rows()],
            'warnings': list(self.warnings),
        }


def knight_shift_from_differences(differences, hyperfine_A):
    """
    Single-nucleus hyperfine constant from up/down sideband center differences.

    The two differences share their calibration, so their uncertainties are
    combined as fully correlated: sigma_a is the mean of the two sigmas.

    Args:
        differences (dict): sideband -> (difference Hz, sigma Hz).
        hyperfine_A (float): Material hyperfine constant of the species (Hz).
    Returns:
        KnightResult: a, N_species = A / a and N_total = 2 N_species.
    """
    if not differences:
        raise ParameterError('no sideband differences supplied')
    warnings = []
    values = np.array([d for d, _ in differences.values()], dtype=float)
    sigmas = np.array([s for _, s in differences.values()], dtype=float)
    a = float(values.mean())
    a_sigma = float(sigmas.mean())
    if values.size == 2:
        gap = abs(values[0] - values[1])
        combined = math.hypot(sigmas[0], sigmas[1])
        if gap > 2.0 * combined:
            message = (f'sideband differences disagree: {values[0]:.4g} Hz vs {values[1]:.4g} Hz '
                       f'({gap / combined:.1f} sigma apart)')
            logger.warning(message)
            warnings.append(message)
    if a == 0:
        message = 'no Knight shift resolved (a = 0); nuclei counts undefined'
        logger.warning(message)
        warnings.append(message)
        n_species, n_sigma = math.inf, math.inf
    else:
        n_species = hyperfine_A / a
        n_sigma = n_species * a_sigma / abs(a)
    return KnightResult(
        a_single=a, a_sigma=a_sigma, N_species=n_species, N_species_sigma=n_sigma,
        N_total=2.0 * n_species, N_total_sigma=2.0 * n_sigma,
        differences=dict(differences), warnings=warnings)


def knight_shift_analysis(spectra, hyperfine_A):
    """
    Knight-shift chain on four sideband spectra ({neg, pos} x {up, down}).

    Each spectrum (time-summed when 2-D) is fitted with fit_gaussian; the
    up/down center difference of each sideband is |c_up - c_down|.

    Args:
        spectra (iterable of SidebandSpectrum): Exactly one per (sideband, state).
        hyperfine_A (float): Material hyperfine constant of the species (Hz).
    Returns:
        KnightResult: Hyperfine constant and nuclei counts.
    Raises:
        ParameterError: If a (sideband, state) combination is missing.
        FitError: If a peak fit fails or is degenerate.
    """
    centers = {}
    for spectrum in spectra:
        key = (spectrum.sideband, spectrum.electron_state)
        if key in centers:
            raise ParameterError(f'duplicate spectrum for {key}')
        fit = fit_gaussian(spectrum.detuning, spectrum.summed(),
                           label=f'knight {spectrum.sideband}/{spectrum.electron_state}')
        if 'degenerate' in fit.flags:
            raise FitError(f'no sideband peak found for {key}', result=fit)
        centers[key] = (fit['center'], fit.sigma('center'))
    differences = {}
    for sideband in ('neg', 'pos'):
        try:
            (c_up, s_up), (c_down, s_down) = centers[(sideband, 'up')], centers[(sideband, 'down')]
        except KeyError:
            raise ParameterError(f'missing up/down spectra for the {sideband} sideband')
        differences[sideband] = (abs(c_up - c_down), math.hypot(s_up, s_down))
    return knight_shift_from_differences(differences, hyperfine_A)


# --- Rabi calibration ---

def damped_sine(t, frequency, amplitude, decay, phase, offset):
    """offset + (amplitude / 2) exp(-t / decay) sin(2 pi f t + phase); amplitude is peak-to-peak."""
    return offset + 0.5 * amplitude * np.exp(-t / decay) * np.sin(2.0 * np.pi * frequency * t + phase)


def _dominant_frequency(t, y):
    order = np.argsort(t)
    t, y = t[order], y[order]
    dt = float(np.median(np.diff(t)))
    uniform = np.arange(t[0], t[-1] + 0.5 * dt, dt)
    resampled = np.interp(uniform, t, y - y.mean())
    n = 8 * uniform.size
    spectrum = np.abs(np.fft.rfft(resampled, n=n))
    freqs = np.fft.rfftfreq(n, d=dt)
    spectrum[0] = 0.0
    return float(freqs[int(np.argmax(spectrum))])


def fit_damped_sine(t, y, sigma=None, label='damped sine'):
    """
    Exponentially damped sine fit to a Rabi oscillation.

    The decay constant is bounded to [span/100, 1000 span]; an undamped trace
    runs into the upper cap and is flagged 'decay_at_cap' once decay reaches half of it.

    Args:
        t (array-like): Drive times (s), spanning at least one period.
        y (array-like): Counts or population.
        sigma (array-like, optional): Per-point 1-sigma.
    Returns:
        FitResult: frequency (Hz), amplitude (peak-to-peak), decay (s), phase, offset.
        Constant input returns a result flagged 'degenerate'.
    """
    t, y = _arrays(t, y, 6, label)
    w = _weights(y, sigma)
    span = float(np.ptp(t))
    if np.ptp(y) == 0:
        result = FitResult(
            names=['frequency', 'amplitude', 'decay', 'phase', 'offset'],
            values=[0.0, 0.0, 1e3 * span, 0.0, float(y[0])],
            errors=[math.inf, 0.0, math.inf, math.inf, 0.0],
            chisqr=0.0, success=False, nfev=0, ndata=y.size, residual=np.zeros_like(y), label=label)
        result.warn('zero-amplitude trace: no oscillation to fit', flag='degenerate')
        return result
    f0 = _dominant_frequency(t, y)
    if f0 * span < 1.0:
        logger.warning('%s: data span %.3g periods, frequency poorly constrained', label, f0 * span)
    init = {'frequency': f0, 'amplitude': float(np.ptp(y)), 'decay': span,
            'phase': 0.0, 'offset': float(np.mean(y))}
    bounds = {'frequency': (0.0, None), 'amplitude': (0.0, None),
              'decay': (span / 100.0, 1e3 * span)}
    grid = {'phase': np.linspace(-np.pi, np.pi, 16, endpoint=False),
            'frequency': f0 * np.linspace(0.8, 1.2, 41),
            'decay': span * np.logspace(-1, 2.5, 15)}

    def residual(p):
        return (damped_sine(t, p['frequency'], p['amplitude'], p['decay'],
                            p['phase'], p['offset']) - y) * w

    result = nlls_solve(residual, init, bounds=bounds, grid=grid, label=label)
    if result['decay'] >= 0.5 * bounds['decay'][1]:
        result.warn('no resolvable damping: decay returned at its cap', flag='decay_at_cap')
    if result['amplitude'] < 2.0 * result.sigma('amplitude'):
        result.warn('amplitude consistent with zero', flag='degenerate')
    return result


@dataclass
class PopulationSeries:
    """Spin-down population converted from counts."""
    values: np.ndarray
    out_of_range: np.ndarray

    @property
    def flagged(self):
        return bool(np.any(self.out_of_range))


def counts_to_population(counts, rabi_amplitude_counts):
    """
    Convert background-corrected counts to spin-down population.

    Args:
        counts (array-like): Sideband counts.
        rabi_amplitude_counts (float): Peak-to-peak Rabi amplitude in counts.
    Returns:
        PopulationSeries: Unclamped populations; points outside [-0.1, 1.1] flagged.
    Raises:
        ParameterError: If the amplitude is not positive.
    """
    if not rabi_amplitude_counts > 0:
        raise ParameterError(f'Rabi amplitude must be positive, got {rabi_amplitude_counts}')
    values = np.asarray(counts, dtype=float) / rabi_amplitude_counts
    out = (values < -0.1) | (values > 1.1)
    if np.any(out):
        logger.warning('%d populations fall outside [-0.1, 1.1]', int(out.sum()))
    return PopulationSeries(values=values, out_of_range=out)


# --- Damped two-level fits ---

@dataclass(frozen=True)
class TimeSeries:
    """Samples y(t) with optional 1-sigma."""
    times: np.ndarray
    values: np.ndarray
    sigma: np.ndarray = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ParameterError('times and values must be 1-D arrays of equal length')
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'values', values)
        if self.sigma is not None:
            object.__setattr__(self, 'sigma', np.asarray(self.sigma, dtype=float))

    @property
    def weights(self):
        return _weights(self.values, self.sigma)


def _gamma1_grid(span):
    return np.concatenate([[0.0], np.logspace(-3, 1.5, 28) / span])


def fit_background_gamma1(t, population, sigma=None, label='background'):
    """
    Spin-flip rate from the background saturation f(t) = 0.5(1 - exp(-2 gamma1 t)) + B.

    Args:
        t (array-like): Drive times (s), at least 4.
        population (array-like): Background population.
        sigma (array-like, optional): Per-point 1-sigma.
    Returns:
        FitResult: gamma1 (1/s, >= 0) and B.
    """
    t, y = _arrays(t, population, 4, label)
    return fit_background_gamma1_global([TimeSeries(t, y, sigma)], label=label)


def fit_background_gamma1_global(datasets, label='background (global)'):
    """
    Shared gamma1 with one offset B per dataset.

    Args:
        datasets (list of TimeSeries): Background traces, e.g. one per omega_e.
    Returns:
        FitResult: gamma1 plus B (single dataset) or B_0, B_1, ... (several).
    """
    datasets = list(datasets)
    if not datasets:
        raise ParameterError('no background datasets')
    single = len(datasets) == 1
    blocks = []
    init = {'gamma1': 0.0}
    span = max(float(np.ptp(d.times)) for d in datasets)
    if not span > 0:
        raise ParameterError('background times must span a nonzero interval')
    for k, data in enumerate(datasets):
        if data.times.size < 4:
            raise ParameterError('each background dataset needs at least 4 samples')
        offset = 'B' if single else f'B_{k}'
        init[offset] = float(data.values[np.argmin(data.times)])

        def residual(p, data=data):
            model = magnon.background_population(data.times, p['gamma1']) + p['B']
            return (model - data.values) * data.weights

        blocks.append(ResidualBlock(residual, {'gamma1': 'gamma1', 'B': offset}, label=offset))
    init['gamma1'] = 1.0 / span
    return nlls_solve(blocks, init, bounds={'gamma1': (0.0, None)},
                      grid={'gamma1': _gamma1_grid(span)}, label=label)


def fit_magnon_rabi(neg, pos, gamma1_fixed, t2_star, init=None, spread_points=41,
                    method='expm', label='magnon rabi'):
    """
    Staged magnon Rabi fit on the negative and positive sideband populations.

    The dephasing rate Gamma is shared by both sidebands, Omega_mag is free per
    sideband, gamma1 is fixed (from the background fit) and the Overhauser
    inhomogeneity enters through ensemble averaging over T2*.

    Args:
        neg, pos (TimeSeries): Spin-down population vs drive time (s).
        gamma1_fixed (float): Spin-flip rate (1/s).
        t2_star (float): Inhomogeneous dephasing time (s); inf disables averaging.
        init (dict, optional): Initial omega_mag_neg, omega_mag_pos (Hz), Gamma (1/s).
        spread_points (int, optional): Overhauser grid points on [-2, 2].
        method (str, optional): Propagation method of magnon.evolve_lindblad.
    Returns:
        FitResult: omega_mag_neg, omega_mag_pos, Gamma and derived omega_mag_mean.
    """
    spread = magnon.EnsembleSpread.uniform(t2_star, points=spread_points)
    span = max(float(np.ptp(neg.times)), float(np.ptp(pos.times)))
    if not span > 0:
        raise ParameterError('sideband traces must span a nonzero time interval')

    def block(series, rate_name):
        def residual(p):
            params = magnon.LindbladParams(omega_mag=p['omega_mag'], delta_detuning=0.0,
                                           gamma1=gamma1_fixed, Gamma=p['Gamma'])
            model = magnon.ensemble_average_evolution(params, spread, series.times, method=method)
            return (model - series.values) * series.weights
        return ResidualBlock(residual, {'omega_mag': rate_name, 'Gamma': 'Gamma'}, label=rate_name)

    start = {'omega_mag_neg': 1.0 / span, 'omega_mag_pos': 1.0 / span, 'Gamma': 1.0 / span}
    start.update(init or {})
    rate_grid = np.linspace(0.2, 6.0, 30) / span
    grid = {'omega_mag_neg': rate_grid, 'omega_mag_pos': rate_grid,
            'Gamma': np.concatenate([[0.0], np.logspace(-1, 1.5, 8) / span])}
    if init:
        grid = {}
    result = nlls_solve([block(neg, 'omega_mag_neg'), block(pos, 'omega_mag_pos')], start,
                        bounds={'omega_mag_neg': (0.0, None), 'omega_mag_pos': (0.0, None),
                                'Gamma': (0.0, None)},
                        grid=grid, label=label)
    mean = 0.5 * (result['omega_mag_neg'] + result['omega_mag_pos'])
    mean_sigma = 0.5 * math.hypot(result.sigma('omega_mag_neg'), result.sigma('omega_mag_pos'))
    result.add_derived('omega_mag_mean', mean, mean_sigma)
    return result


def fit_inverse_scaling(x, y, x0, sigma=None, name='y0', label='inverse scaling'):
    """
    One-parameter fit of y = y0 * (x0 / x).

    Args:
        x (array-like): Abscissae (e.g. omega_e, Hz), positive, at least 2 distinct.
        y (array-like): Ordinates (e.g. sin(phi)).
        x0 (float): Reference abscissa (e.g. omega_e0).
        sigma (array-like, optional): Per-point 1-sigma.
        name (str, optional): Name of the fitted parameter.
    Returns:
        FitResult: y0 with 1-sigma.
    Raises:
        DegenerateDataError: If all abscissae coincide.
    """
    x, y = _arrays(x, y, 2, label)
    if np.any(x <= 0) or not x0 > 0:
        raise ParameterError('abscissae and reference must be positive')
    if np.ptp(x) == 0:
        raise DegenerateDataError(f'{label}: all points share one abscissa')
    w = _weights(y, sigma)
    basis = x0 / x
    guess = float(np.sum(w * w * basis * y) / np.sum(w * w * basis * basis))

    def residual(p):
        return (p[name] * basis - y) * w

    return nlls_solve(residual, {name: guess}, simplex=False, label=label)
