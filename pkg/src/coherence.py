"""
coherence.py: Filter-Function Visibility Model and Echo Coherence Fits

The nuclear bath seen by the electron through the non-collinear hyperfine
coupling is a comb of lines at the nuclear Larmor frequencies. A Carr-Purcell
sequence filters that comb; the qubit visibility dips whenever the free
evolution time matches a Larmor period and revives at even multiples.

Features:
---------
- CP1 (Hahn echo) and CP2 filter functions, with the removable CP2
  singularities evaluated through the exact factored form
- Delta-comb noise spectrum with optional nuclear polarization term
- Closed-form visibility, the technical fit model (v0, b, tau_d) and a
  numerical spectral-overlap oracle with Gaussian-broadened lines
- Global visibility fit: sin(phi) per omega_e, b shared by all datasets
- Stretched-exponential echo (or Ramsey) decay fit and T2(omega_e) scaling law

Functions:
----------
- filter_value(seq, x):                         F_CP(x), x = frequency * time
- noise_spectrum(model):                        NoiseSpectrum comb
- visibility(t, model, seq):                    microscopic W(t)
- visibility_fit_model(t, model, seq):          v0 * W(t) * exp(-t / tau_d)
- visibility_from_spectrum(t, spectrum, seq):   spectral-overlap integral
- visibility_from_counts(cts_up, cts_down):     (up - down) / (up + down)
- visibility_spectrum(t, W):                    one-sided amplitude spectrum
- fit_visibility(datasets, registry, N_total):  global technical-parameter fit
- fit_sinphi_scaling(omega_e, sin_phi, omega_e0)
- fit_echo_decay(tau, W)
- fit_t2_scaling(omega_e, T2, omega_e0, alpha_bar)

Usage:
------
    model = VisibilityModel(sin_phi=0.207, N_total=7.6e4, registry=default_registry())
    W = visibility(t, model, PulseSequence.CP1)
"""

import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.integrate import trapezoid

from .errors import DegenerateDataError, ParameterError
from .fitters import FitResult, ResidualBlock, _weights, fit_inverse_scaling, nlls_solve

logger = logging.getLogger(__name__)

# Per-nucleus transverse fluctuation <Ix^2 + Iy^2> / 2 for an unpolarized spin-3/2, per 1/N.
COMB_PREFACTOR = 5.0 / 4.0
CP2_SINGULAR_COS = 1e-6


class PulseSequence(Enum):
    CP1 = 'CP1'
    CP2 = 'CP2'

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ParameterError(f'unknown pulse sequence {value!r}; expected CP1 or CP2')


def filter_value(seq, x):
    """
    Filter function of a Carr-Purcell sequence.

    F_CP1(x) = 8 sin^4(pi x / 2)
    F_CP2(x) = 8 sin^4(pi x / 2) sin^2(2 pi x) / cos^2(pi x)

    Near x = k + 1/2 the CP2 ratio is 0/0; there the identical form
    32 sin^4(pi x / 2) sin^2(pi x) is used.

    Args:
        seq (PulseSequence): CP1 or CP2.
        x (float or array-like): Ordinary frequency times time, x >= 0.
    Returns:
        float or numpy.ndarray: Filter value(s).
    Raises:
        ParameterError: If any x is negative.
    """
    seq = PulseSequence.parse(seq)
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ParameterError('filter argument must be non-negative')
    s4 = np.sin(0.5 * np.pi * x) ** 4
    if seq is PulseSequence.CP1:
        out = 8.0 * s4
    else:
        c = np.cos(np.pi * x)
        singular = np.abs(c) < CP2_SINGULAR_COS
        safe_c = np.where(singular, 1.0, c)
        closed = 8.0 * s4 * np.sin(2.0 * np.pi * x) ** 2 / safe_c ** 2
        limit = 32.0 * s4 * np.sin(np.pi * x) ** 2
        out = np.where(singular, limit, closed)
    return float(out) if scalar else out


@dataclass(frozen=True)
class VisibilityModel:
    """
    Microscopic and technical parameters of the visibility model.

    Attributes:
        sin_phi (float): Tilt of the electron quantization axis, in [0, 1].
        N_total (float): Total number of nuclei in the dot.
        registry (SpeciesRegistry): Nuclear species and field.
        v0 (float): Visibility scale, in (0, 1.2].
        b (float): Field-scale factor applied to every Larmor frequency.
        tau_d (float): Overall exponential decay constant (s); inf disables it.
        polarization (dict, optional): species name -> polarization in [-1, 1];
            adds the <Iz> term of the noise spectrum.
    """
    sin_phi: float
    N_total: float
    registry: object
    v0: float = 1.0
    b: float = 1.0
    tau_d: float = math.inf
    polarization: dict = None

    def __post_init__(self):
        if not 0.0 <= self.sin_phi <= 1.0:
            raise ParameterError(f'sin_phi must lie in [0, 1], got {self.sin_phi}')
        if not self.N_total > 0:
            raise ParameterError(f'N_total must be positive, got {self.N_total}')
        if not 0.0 < self.v0 <= 1.2:
            raise ParameterError(f'v0 must lie in (0, 1.2], got {self.v0}')
        if not self.b > 0:
            raise ParameterError(f'b must be positive, got {self.b}')
        if not self.tau_d > 0:
            raise ParameterError(f'tau_d must be positive, got {self.tau_d}')
        for name, p in (self.polarization or {}).items():
            self.registry.get(name)
            if not -1.0 <= p <= 1.0:
                raise ParameterError(f'polarization of {name} must lie in [-1, 1], got {p}')

    def with_technical(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class NoiseSpectrum:
    """
    Delta-comb noise spectrum.

    Attributes:
        names (tuple of str): Species of each line.
        frequencies (numpy.ndarray): Line frequencies (Hz), increasing.
        weights (numpy.ndarray): Line weights (Hz^2), non-negative.
    """
    names: tuple
    frequencies: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.weights) < 0):
            raise ParameterError('noise spectrum weights must be non-negative')

    def lines(self):
        return list(zip(self.names, self.frequencies.tolist(), self.weights.tolist()))

    def __len__(self):
        return len(self.names)


def noise_spectrum(model):
    """
    Nuclear noise spectrum as seen through the non-collinear coupling.

    One line per species at b * gamma_j * B with weight
    (5/4)(1/N)(A_j sin(phi))^2 c_j, multiplied by (1 + 3 P_j / 5) when a
    polarization P_j is given.

    Args:
        model (VisibilityModel): Model parameters.
    Returns:
        NoiseSpectrum: Lines ordered by frequency.
    """
    larmor = model.registry.larmor_frequencies(scale=model.b)
    polarization = model.polarization or {}
    rows = []
    for species in model.registry:
        weight = (COMB_PREFACTOR / model.N_total
                  * (species.hyperfine_A * model.sin_phi) ** 2 * species.abundance_c)
        weight *= 1.0 + 0.6 * polarization.get(species.name, 0.0)
        rows.append((larmor[species.name], species.name, weight))
    rows.sort()
    if any(f == 0 for f, _, _ in rows):
        raise ParameterError('zero Larmor frequency in the noise spectrum')
    return NoiseSpectrum(
        names=tuple(r[1] for r in rows),
        frequencies=np.array([r[0] for r in rows]),
        weights=np.array([r[2] for r in rows]),
    )


def _comb_exponent(t, spectrum, seq):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ParameterError('times must be non-negative')
    exponent = np.zeros_like(t)
    for nu, w in zip(spectrum.frequencies, spectrum.weights):
        exponent = exponent + w / nu ** 2 * filter_value(seq, nu * t)
    return exponent


def visibility(t, model, seq):
    """
    Microscopic visibility W(t) = exp(-sum_j w_j F(nu_j t) / nu_j^2).

    The technical scale v0 and decay tau_d are ignored; the field scale b is applied.

    Args:
        t (float or array-like): Free evolution time(s) (s), >= 0.
        model (VisibilityModel): Model parameters.
        seq (PulseSequence): CP1 or CP2.
    Returns:
        float or numpy.ndarray: Visibility in [0, 1].
    """
    scalar = np.ndim(t) == 0
    out = np.exp(-_comb_exponent(t, noise_spectrum(model), PulseSequence.parse(seq)))
    return float(out) if scalar else out


def visibility_fit_model(t, model, seq):
    """v0 * visibility(t) * exp(-t / tau_d)."""
    scalar = np.ndim(t) == 0
    t = np.asarray(t, dtype=float)
    out = model.v0 * visibility(t, model, seq) * np.exp(-t / model.tau_d)
    return float(out) if scalar else out


def visibility_from_spectrum(t, spectrum, seq, linewidth_hz=None, points=2001, span_sigmas=8.0):
    """
    Visibility from the spectral-overlap integral with Gaussian-broadened lines.

    Every comb line is replaced by a normalized Gaussian of standard deviation
    linewidth_hz (default 1e-4 of the line frequency) and
    exp(-integral S(nu) F(nu t) / nu^2 dnu) is evaluated by trapezoidal
    quadrature. Narrow lines reproduce the closed form; broad lines model
    quadrupolar broadening.

    Args:
        t (array-like): Times (s).
        spectrum (NoiseSpectrum): Comb to broaden.
        seq (PulseSequence): CP1 or CP2.
        linewidth_hz (float or sequence, optional): Gaussian sigma per line (Hz).
        points (int, optional): Quadrature points per line.
        span_sigmas (float, optional): Half-width of the quadrature window in sigmas.
    Returns:
        numpy.ndarray: Visibility at each time.
    """
    seq = PulseSequence.parse(seq)
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ParameterError('times must be non-negative')
    if linewidth_hz is None:
        widths = 1e-4 * spectrum.frequencies
    else:
        widths = np.broadcast_to(np.asarray(linewidth_hz, dtype=float), spectrum.frequencies.shape)
    if np.any(widths <= 0):
        raise ParameterError('linewidths must be positive')
    exponent = np.zeros_like(t)
    for nu0, w, sigma in zip(spectrum.frequencies, spectrum.weights, widths):
        lo = max(nu0 - span_sigmas * sigma, 1e-9 * nu0)
        nu = np.linspace(lo, nu0 + span_sigmas * sigma, points)
        density = np.exp(-0.5 * ((nu - nu0) / sigma) ** 2) / (sigma * math.sqrt(2.0 * math.pi))
        integrand = density / nu ** 2 * filter_value(seq, np.outer(t, nu))
        exponent += w * trapezoid(integrand, nu, axis=1)
    return np.exp(-exponent)


def visibility_from_counts(cts_up, cts_down):
    """
    Visibility (cts_up - cts_down) / (cts_up + cts_down) of a pair of readouts.

    Raises:
        ParameterError: If any pair sums to zero.
    """
    up = np.asarray(cts_up, dtype=float)
    down = np.asarray(cts_down, dtype=float)
    total = up + down
    if np.any(total == 0):
        raise ParameterError('readout counts sum to zero')
    return (up - down) / total


def visibility_spectrum(t, W):
    """
    One-sided amplitude spectrum of a uniformly sampled visibility trace.

    Args:
        t (array-like): Uniform time grid (s).
        W (array-like): Visibility samples.
    Returns:
        tuple: (frequencies Hz, amplitudes).
    """
    t = np.asarray(t, dtype=float)
    W = np.asarray(W, dtype=float)
    if t.size < 4 or t.shape != W.shape:
        raise ParameterError('visibility spectrum needs matching arrays of at least 4 samples')
    steps = np.diff(t)
    if not np.allclose(steps, steps[0], rtol=1e-6, atol=0.0):
        raise ParameterError('visibility spectrum needs a uniform time grid')
    amplitudes = 2.0 * np.abs(np.fft.rfft(W - W.mean())) / W.size
    return np.fft.rfftfreq(W.size, d=steps[0]), amplitudes


# --- Global visibility fit ---

@dataclass(frozen=True)
class VisibilityDataset:
    """
    One CP trace at one electron splitting.

    Attributes:
        omega_e (float): Electron splitting (Hz).
        sequence (PulseSequence): CP1 or CP2.
        times (numpy.ndarray): Free evolution times (s).
        values (numpy.ndarray): Measured visibility.
        sigma (numpy.ndarray, optional): Per-point 1-sigma.
        label (str): Dataset label.
    """
    omega_e: float
    sequence: PulseSequence
    times: np.ndarray
    values: np.ndarray
    sigma: np.ndarray = None
    label: str = ''

    def __post_init__(self):
        object.__setattr__(self, 'sequence', PulseSequence.parse(self.sequence))
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.ndim != 1 or times.shape != values.shape:
            raise ParameterError('visibility times and values must be 1-D arrays of equal length')
        if not self.omega_e > 0:
            raise ParameterError(f'omega_e must be positive, got {self.omega_e}')
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'values', values)
        if self.sigma is not None:
            sigma = np.asarray(self.sigma, dtype=float)
            if sigma.shape != values.shape or np.any(sigma <= 0):
                raise ParameterError('visibility sigma must be positive and match the data')
            object.__setattr__(self, 'sigma', sigma)


@dataclass
class VisibilityFit:
    """
    Global visibility fit outcome.

    Attributes:
        result (FitResult): All parameters (sin_phi_<k>, b, v0_<i>, tau_d_<i>).
        omega_e (list of float): Electron splitting of each sin_phi_<k>.
        datasets (list of str): Label of each v0_<i>/tau_d_<i>.
    """
    result: FitResult
    omega_e: list
    datasets: list = field(default_factory=list)

    def sin_phi(self):
        """omega_e -> (sin(phi), sigma)."""
        return {w: (self.result[f'sin_phi_{k}'], self.result.sigma(f'sin_phi_{k}'))
                for k, w in enumerate(self.omega_e)}

    @property
    def b(self):
        return self.result['b']


def fit_visibility(datasets, registry, N_total, init=None, workers=None, polarization=None):
    """
    Global fit of CP1/CP2 visibility traces.

    sin(phi) is shared by all traces at one omega_e, the field scale b by all
    traces, and v0 and tau_d are free per trace.

    Args:
        datasets (list of VisibilityDataset): Traces, at least one per omega_e.
        registry (SpeciesRegistry): Nuclear species at the nominal field.
        N_total (float): Total number of nuclei.
        init (dict, optional): Initial values by parameter name.
        workers (int, optional): Threads evaluating datasets.
        polarization (dict, optional): Fixed per-species polarization of the model.
    Returns:
        VisibilityFit: Estimates with 1-sigma.
    Raises:
        FitConvergenceError: On non-convergence, carrying the best-so-far result.
    """
    datasets = list(datasets)
    if not datasets:
        raise ParameterError('no visibility datasets')
    omega_e = sorted({d.omega_e for d in datasets})
    group = {w: k for k, w in enumerate(omega_e)}
    base = VisibilityModel(sin_phi=0.0, N_total=N_total, registry=registry, polarization=polarization)

    start = {f'sin_phi_{k}': 0.2 for k in range(len(omega_e))}
    start['b'] = 1.0
    blocks = []
    for i, data in enumerate(datasets):
        weights = _weights(data.values, data.sigma)
        head = data.values[np.argsort(data.times)[:3]]
        start[f'v0_{i}'] = float(min(max(np.max(head), 0.05), 1.2))
        start[f'tau_d_{i}'] = 1e-4

        def residual(p, data=data, weights=weights):
            model = base.with_technical(sin_phi=p['sin_phi'], b=p['b'], v0=p['v0'], tau_d=p['tau_d'])
            return (visibility_fit_model(data.times, model, data.sequence) - data.values) * weights

        mapping = {'sin_phi': f'sin_phi_{group[data.omega_e]}', 'b': 'b',
                   'v0': f'v0_{i}', 'tau_d': f'tau_d_{i}'}
        blocks.append(ResidualBlock(residual, mapping, label=data.label or f'dataset {i}'))

    start.update(init or {})
    bounds = {'b': (0.9, 1.1)}
    for k in range(len(omega_e)):
        bounds[f'sin_phi_{k}'] = (0.0, 1.0)
    for i in range(len(datasets)):
        bounds[f'v0_{i}'] = (1e-3, 1.2)
        bounds[f'tau_d_{i}'] = (1e-9, 1.0)
    grid = {'b': np.arange(0.98, 1.04 + 2.5e-4, 5e-4)}
    for k in range(len(omega_e)):
        grid[f'sin_phi_{k}'] = np.linspace(0.02, 0.6, 30)
    if init:
        grid = {}
    result = nlls_solve(blocks, start, bounds=bounds, grid=grid, workers=workers,
                        label='visibility (global)')
    logger.info('visibility fit: b = %.6f(%.1g), %d datasets at %d splittings',
                result['b'], result.sigma('b'), len(datasets), len(omega_e))
    return VisibilityFit(result=result, omega_e=omega_e,
                         datasets=[d.label or f'dataset {i}' for i, d in enumerate(datasets)])


def fit_sinphi_scaling(omega_e, sin_phi, omega_e0, sigma=None):
    """
    sin(phi0) from sin(phi) = sin(phi0) * omega_e0 / omega_e.

    Args:
        omega_e (array-like): Electron splittings (Hz), at least 2 distinct.
        sin_phi (array-like): Fitted sin(phi) at each splitting.
        omega_e0 (float): Bare splitting (Hz).
        sigma (array-like, optional): 1-sigma of each sin(phi).
    Returns:
        FitResult: Parameter sin_phi0.
    Raises:
        DegenerateDataError: If all splittings coincide.
    """
    return fit_inverse_scaling(omega_e, sin_phi, omega_e0, sigma=sigma, name='sin_phi0',
                               label='sin(phi) scaling')


@dataclass
class EchoDecay:
    """Stretched-exponential decay exp(-(tau / T2)^alpha) with 1-sigma."""
    T2: float
    alpha: float
    T2_sigma: float
    alpha_sigma: float
    result: FitResult = None

    def __post_init__(self):
        if not self.T2 > 0 or not self.alpha > 0:
            raise ParameterError('T2 and alpha must be positive')

    def __call__(self, tau):
        return np.exp(-(np.asarray(tau, dtype=float) / self.T2) ** self.alpha)


def _one_over_e_time(tau, W):
    order = np.argsort(tau)
    tau, W = tau[order], W[order]
    below = np.nonzero(W < math.exp(-1.0))[0]
    if below.size == 0:
        return 2.0 * float(tau[-1])
    k = int(below[0])
    if k == 0:
        return float(tau[0]) if tau[0] > 0 else float(tau[1])
    w0, w1 = W[k - 1], W[k]
    frac = (w0 - math.exp(-1.0)) / (w0 - w1) if w0 != w1 else 0.5
    return float(tau[k - 1] + frac * (tau[k] - tau[k - 1]))


def fit_echo_decay(tau, W, sigma=None, label='echo decay'):
    """
    Fit exp(-(tau / T2)^alpha) to a normalized echo (or Ramsey) decay.

    Initial T2 from the 1/e crossing, initial alpha = 2.

    Args:
        tau (array-like): Total free evolution times (s), at least 4.
        W (array-like): Normalized visibility.
        sigma (array-like, optional): Per-point 1-sigma.
    Returns:
        EchoDecay: T2, alpha with 1-sigma.
    Raises:
        DegenerateDataError: If the input is constant.
        FitConvergenceError: On non-convergence.
    """
    tau = np.asarray(tau, dtype=float)
    W = np.asarray(W, dtype=float)
    if tau.shape != W.shape or tau.ndim != 1 or tau.size < 4:
        raise ParameterError(f'{label}: needs at least 4 (tau, W) samples')
    if np.any(tau < 0):
        raise ParameterError(f'{label}: times must be non-negative')
    if np.ptp(W) == 0:
        raise DegenerateDataError(f'{label}: constant input carries no decay')
    weights = _weights(W, sigma)
    t_max = float(tau.max())
    T2 = _one_over_e_time(tau, W)

    def residual(p):
        return (np.exp(-(tau / p['T2']) ** p['alpha']) - W) * weights

    result = nlls_solve(residual, {'T2': T2, 'alpha': 2.0},
                        bounds={'T2': (t_max * 1e-3, t_max * 1e3), 'alpha': (0.1, 10.0)},
                        grid={'alpha': np.linspace(0.5, 4.0, 15)}, label=label)
    if result.at_bound.get('T2') == 'upper':
        result.warn('no resolvable decay: T2 returned at its cap', flag='degenerate')
    return EchoDecay(T2=result['T2'], alpha=result['alpha'], T2_sigma=result.sigma('T2'),
                     alpha_sigma=result.sigma('alpha'), result=result)


def fit_t2_scaling(omega_e, T2, omega_e0, alpha_bar, sigma=None):
    """
    Fit T2(omega_e) = coefficient * (omega_e / omega_e0)^(2 / alpha_bar) + offset.

    Args:
        omega_e (array-like): Electron splittings (Hz), at least 2 distinct.
        T2 (array-like): Echo coherence times (s).
        omega_e0 (float): Bare splitting (Hz).
        alpha_bar (float): Mean stretch exponent, positive.
        sigma (array-like, optional): 1-sigma of each T2.
    Returns:
        FitResult: coefficient (s) and offset (s).
    Raises:
        DegenerateDataError: If all splittings coincide.
    """
    omega_e = np.asarray(omega_e, dtype=float)
    T2 = np.asarray(T2, dtype=float)
    if omega_e.shape != T2.shape or omega_e.size < 2:
        raise ParameterError('T2 scaling needs at least 2 (omega_e, T2) points')
    if not alpha_bar > 0 or not omega_e0 > 0 or np.any(omega_e <= 0):
        raise ParameterError('alpha_bar, omega_e0 and omega_e must be positive')
    if np.ptp(omega_e) == 0:
        raise DegenerateDataError('T2 scaling: all points share one omega_e')
    x = (omega_e / omega_e0) ** (2.0 / alpha_bar)
    weights = _weights(T2, sigma)
    slope, intercept = np.polyfit(x, T2, 1)

    def residual(p):
        return (p['coefficient'] * x + p['offset'] - T2) * weights

    return nlls_solve(residual, {'coefficient': float(slope), 'offset': float(intercept)},
                      simplex=False, label='T2 scaling')
