"""
magnon.py: Magnon Rabi Rates and Damped Two-Level Dynamics

A driven electron exchanges a single collective nuclear excitation (a magnon)
with the bath through the non-collinear hyperfine coupling. The exchange rate
is the single-nucleus matrix element times the collective enhancement
sqrt(5N/2); its time-domain signature is a damped Rabi oscillation on the
nuclear sidebands of the electron spin resonance spectrum.

Features:
---------
- Closed-form and Monte Carlo collective enhancement
- Resonant and detuned (dressed-state) magnon exchange rates
- Lindblad master equation of a two-level system with spin-flip and
  dephasing channels, integrated by an adaptive Runge-Kutta method or by the
  exact propagator of the Liouvillian
- Averaging over the quasi-static Overhauser distribution set by T2*
- Two-dimensional (detuning x drive time) sideband spectrum maps

Functions:
----------
- rms_enhancement(N) / monte_carlo_enhancement(N, samples, seed)
- magnon_rabi_rate(a_nc, omega_rabi, omega_n, N_species)
- detuned_exchange_rate(a_nc, drive, enhancement)
- evolve_lindblad(rho0, params, times, method)
- background_population(t, gamma1)
- ensemble_average_evolution(params, spread, times, method)
- simulate_sideband_spectrum(delta_grid, times, carrier, sidebands, spread)
- default_sidebands(registry, sin_phi, N_species, omega_rabi, ...)
- ab_initio_omega_mag(a, sigma_a, sin_phi, omega_rabi, sigma_rabi, omega_n, hyperfine_A)

Conventions:
------------
Rates and frequencies are ordinary (Hz, 1/s). The Hamiltonian
H0 = pi [[Delta, Omega_mag], [Omega_mag, -Delta]] (rad/s) makes the undamped
resonant oscillation period exactly 1 / Omega_mag. Basis order is
(ground, excited) = (|up, I_z>, |down, I_z +- 1>).
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import expm
from scipy.stats import norm

from .errors import IntegrationError, ParameterError

logger = logging.getLogger(__name__)

# 3.4e-4 per ns
DEFAULT_GAMMA1 = 3.4e5
DEFAULT_SPREAD_POINTS = 41
SPREAD_LIMIT = 2.0
RESONANCE_WINDOW = 20.0
OVERLAP_LINEWIDTHS = 5.0

METHODS = ('rk', 'expm')

_S_PLUS = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)
_S_MINUS = _S_PLUS.T.copy()
_S_Z = np.diag([0.5, -0.5]).astype(complex)
_EYE = np.eye(2, dtype=complex)


@dataclass(frozen=True)
class DensityMatrix2:
    """
    Two-level density matrix in the (ground, excited) basis.

    Attributes:
        matrix (numpy.ndarray): 2x2 complex Hermitian, unit trace, positive.
    """
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (2, 2):
            raise ParameterError('density matrix must be 2x2')
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ParameterError('density matrix must be Hermitian')
        if abs(np.trace(m) - 1.0) > 1e-9:
            raise ParameterError(f'density matrix trace must be 1, got {np.trace(m).real:.12g}')
        if np.min(np.linalg.eigvalsh(m)) < -1e-9:
            raise ParameterError('density matrix must be positive semidefinite')
        object.__setattr__(self, 'matrix', m)

    @classmethod
    def ground(cls):
        return cls(np.array([[1.0, 0.0], [0.0, 0.0]], dtype=complex))

    @classmethod
    def excited(cls):
        return cls(np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex))

    @property
    def excited_population(self):
        return float(self.matrix[1, 1].real)

    @property
    def trace(self):
        return complex(np.trace(self.matrix))

    def min_eigenvalue(self):
        return float(np.min(np.linalg.eigvalsh(self.matrix)))


@dataclass(frozen=True)
class LindbladParams:
    """
    Damped two-level parameters.

    Attributes:
        omega_mag (float): Exchange Rabi rate (Hz).
        delta_detuning (float): Drive offset from resonance (Hz).
        gamma1 (float): Spin-flip rate (1/s), >= 0.
        Gamma (float): Dephasing rate (1/s), >= 0.
    """
    omega_mag: float
    delta_detuning: float = 0.0
    gamma1: float = 0.0
    Gamma: float = 0.0

    def __post_init__(self):
        if self.gamma1 < 0 or self.Gamma < 0:
            raise ParameterError('gamma1 and Gamma must be non-negative')

    def detuned(self, extra):
        return replace(self, delta_detuning=self.delta_detuning + extra)


@dataclass(frozen=True)
class DriveConfig:
    """
    Bare electron drive.

    Attributes:
        omega_rabi (float): Electron Rabi frequency Omega (Hz).
        two_photon_detuning (float): Detuning delta (Hz).
    """
    omega_rabi: float
    two_photon_detuning: float

    @property
    def stueckelberg_theta(self):
        """Mixing angle with tan(2 theta) = -Omega / delta."""
        return 0.5 * math.atan2(-self.omega_rabi, self.two_photon_detuning)

    @property
    def effective_rabi(self):
        return math.hypot(self.two_photon_detuning, self.omega_rabi)


@dataclass(frozen=True)
class EnsembleSpread:
    """
    Quasi-static Overhauser distribution sampled on a symmetric sigma grid.

    Attributes:
        t2_star (float): Inhomogeneous dephasing time (s); inf means no spread.
        sigma_grid (numpy.ndarray): Dimensionless offsets in [-2, 2].
        weights (numpy.ndarray): Normalized quadrature weights.
    """
    t2_star: float
    sigma_grid: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if not self.t2_star > 0:
            raise ParameterError(f't2_star must be positive, got {self.t2_star}')
        grid = np.asarray(self.sigma_grid, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if grid.shape != weights.shape or grid.ndim != 1 or grid.size == 0:
            raise ParameterError('sigma grid and weights must be 1-D arrays of equal length')
        if not np.allclose(grid, -grid[::-1], atol=1e-12):
            raise ParameterError('sigma grid must be symmetric about 0')
        if abs(weights.sum() - 1.0) > 1e-12 or np.any(weights < 0):
            raise ParameterError('spread weights must be non-negative and sum to 1')
        object.__setattr__(self, 'sigma_grid', grid)
        object.__setattr__(self, 'weights', weights)

    @classmethod
    def uniform(cls, t2_star, points=DEFAULT_SPREAD_POINTS):
        """
        Uniform grid on [-2, 2] weighted by the standard normal density.

        Weights are the density at each grid point, normalized to sum to 1.
        An infinite T2* collapses the grid to the single point 0.
        """
        if math.isinf(t2_star):
            return cls(t2_star=t2_star, sigma_grid=np.zeros(1), weights=np.ones(1))
        if points < 3 or points % 2 == 0:
            raise ParameterError(f'spread grid needs an odd number >= 3 of points, got {points}')
        grid = np.linspace(-SPREAD_LIMIT, SPREAD_LIMIT, points)
        weights = norm.pdf(grid)
        weights = weights / weights.sum()
        return cls(t2_star=t2_star, sigma_grid=grid, weights=weights)

    @property
    def overhauser_shifts(self):
        """Delta_oh = sigma * sqrt(2) / (2 pi T2*) (Hz) at each grid point."""
        if math.isinf(self.t2_star):
            return np.zeros_like(self.sigma_grid)
        return self.sigma_grid * math.sqrt(2.0) / (2.0 * math.pi * self.t2_star)

    @property
    def linewidth(self):
        if math.isinf(self.t2_star):
            return 0.0
        return 2.0 * math.sqrt(2.0) / (2.0 * math.pi * self.t2_star)


# --- Rates ---

def rms_enhancement(N):
    """
    Collective enhancement sqrt(<I^2 - M^2>) = sqrt(5N/2) for N spin-3/2 nuclei.

    Raises:
        ParameterError: If N < 1.
    """
    if not N >= 1:
        raise ParameterError(f'N must be at least 1, got {N}')
    return math.sqrt(2.5 * N)


@dataclass(frozen=True)
class EnhancementEstimate:
    """Monte Carlo estimate of the collective enhancement with its standard error."""
    value: float
    stderr: float
    samples: int


def monte_carlo_enhancement(N, samples=10**6, seed=None):
    """
    Monte Carlo estimate of sqrt(<I^2 - M^2>).

    The total angular momentum I of N unpolarized spin-3/2 nuclei follows the
    chi distribution with three degrees of freedom and sigma^2 = 5N/4 (drawn
    as the norm of three Gaussians); the projection M is uniform on [-I, I].

    Args:
        N (float): Number of nuclei, >= 1.
        samples (int, optional): Draws, at least 1000.
        seed (int, optional): Seed of numpy's default generator.
    Returns:
        EnhancementEstimate: Estimate and delta-method standard error.
    """
    if not N >= 1:
        raise ParameterError(f'N must be at least 1, got {N}')
    if samples < 1000:
        raise ParameterError(f'Monte Carlo needs at least 1000 samples, got {samples}')
    rng = np.random.default_rng(seed)
    sigma = math.sqrt(1.25 * N)
    I = sigma * np.linalg.norm(rng.standard_normal((samples, 3)), axis=1)
    M = rng.uniform(-1.0, 1.0, samples) * I
    q = I * I - M * M
    mean = float(q.mean())
    value = math.sqrt(mean)
    stderr = float(q.std(ddof=1)) / math.sqrt(samples) / (2.0 * value)
    return EnhancementEstimate(value=value, stderr=stderr, samples=samples)


def magnon_rabi_rate(a_nc, omega_rabi, omega_n, N_species):
    """
    Resonant magnon exchange rate a_nc * Omega / (2 omega_n) * sqrt(5 N / 2).

    Args:
        a_nc (float): Non-collinear single-nucleus coupling (Hz).
        omega_rabi (float): Electron Rabi frequency (Hz).
        omega_n (float): Nuclear Larmor frequency (Hz), nonzero.
        N_species (float): Nuclei of the species.
    Returns:
        float: Omega_mag (Hz).
    Raises:
        ParameterError: If omega_n = 0.
    """
    if omega_n == 0:
        raise ParameterError('nuclear Larmor frequency must be nonzero')
    return a_nc * omega_rabi / (2.0 * omega_n) * rms_enhancement(N_species)


def detuned_exchange_rate(a_nc, drive, enhancement):
    """
    Dressed-state exchange rate 2 (1 + Omega^2/delta^2)^(-1/2) a_nc Omega / (4 delta) * enhancement.

    Reduces to magnon_rabi_rate with omega_n = delta when Omega << delta.

    Raises:
        ParameterError: If delta = 0.
    """
    delta = drive.two_photon_detuning
    if delta == 0:
        raise ParameterError('two-photon detuning must be nonzero for the dressed-state rate')
    ratio = drive.omega_rabi / delta
    return abs(2.0 / math.sqrt(1.0 + ratio * ratio) * a_nc * drive.omega_rabi / (4.0 * delta)
               * enhancement)


def ab_initio_omega_mag(a, sigma_a, sin_phi, omega_rabi, sigma_rabi, omega_n, hyperfine_A,
                        abundance=1.0):
    """
    Predicted Omega_mag with uncertainty.

    The value is evaluated at a - sigma_a, a and a + sigma_a, each time with
    N = abundance * A / a; the spread of the three values is combined in
    quadrature with the Rabi-frequency contribution Omega_mag * sigma_rabi / Omega.

    Returns:
        tuple: (Omega_mag Hz, sigma Hz).
    """
    if not a > 0 or sigma_a < 0 or not sigma_a < a:
        raise ParameterError('need a > 0 and 0 <= sigma_a < a')
    values = []
    for a_k in (a - sigma_a, a, a + sigma_a):
        N = abundance * hyperfine_A / a_k
        values.append(magnon_rabi_rate(a_k * sin_phi, omega_rabi, omega_n, N))
    center = values[1]
    spread = float(np.std(values, ddof=1))
    rabi_part = abs(center) * sigma_rabi / omega_rabi if omega_rabi else 0.0
    return center, math.hypot(spread, rabi_part)


# --- Master equation ---

def _dissipator(c):
    cd_c = c.conj().T @ c
    return np.kron(c, c.conj()) - 0.5 * (np.kron(cd_c, _EYE) + np.kron(_EYE, cd_c.T))


def liouvillian(params):
    """
    4x4 Liouvillian acting on the row-major vectorized density matrix.

    Args:
        params (LindbladParams): Rates (Hz, 1/s).
    Returns:
        numpy.ndarray: Complex superoperator (1/s).
    """
    d, w = params.delta_detuning, params.omega_mag
    H = np.pi * np.array([[d, w], [w, -d]], dtype=complex)
    L = -1j * (np.kron(H, _EYE) - np.kron(_EYE, H.T))
    L = L + params.gamma1 * (_dissipator(_S_PLUS) + _dissipator(_S_MINUS))
    L = L + params.Gamma * _dissipator(_S_Z)
    return L


def _check_times(times):
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1 or times.size == 0:
        raise ParameterError('time grid must be a non-empty 1-D array')
    if np.any(times < 0):
        raise ParameterError('times must be non-negative')
    if np.any(np.diff(times) < 0):
        raise ParameterError('times must be nondecreasing')
    return times


def _propagate_expm(L, y0, times):
    """Exact propagation; L may carry leading batch axes."""
    L = np.asarray(L)
    generators = L[..., None, :, :] * times[:, None, None]
    return expm(generators) @ y0


def _propagate_rk(L, y0, times, rtol, atol):
    unique, inverse = np.unique(times, return_inverse=True)
    t_end = float(unique[-1])
    if t_end == 0.0:
        return np.repeat(y0[None, :], times.size, axis=0)
    sol = solve_ivp(lambda t, y: L @ y, (0.0, t_end), y0, method='DOP853',
                    t_eval=unique, rtol=rtol, atol=atol)
    if sol.status == -1 or not sol.success:
        failed_at = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(f'master-equation integration failed at t = {failed_at:.6g} s: '
                               f'{sol.message}', time=failed_at)
    return sol.y.T[inverse]


@dataclass
class LindbladTrace:
    """Density matrices at the requested times, shape (n_times, 2, 2)."""
    times: np.ndarray
    states: np.ndarray

    @property
    def excited_population(self):
        return self.states[:, 1, 1].real.copy()

    @property
    def trace(self):
        return np.trace(self.states, axis1=1, axis2=2)

    def density_matrices(self):
        return [DensityMatrix2(s) for s in self.states]


def evolve_lindblad(rho0, params, times, method='rk', rtol=1e-9, atol=1e-12):
    """
    Integrate the two-level master equation
    drho/dt = -i[H0, rho] + D[sqrt(gamma1) S+]rho + D[sqrt(gamma1) S-]rho + D[sqrt(Gamma) Sz]rho.

    Args:
        rho0 (DensityMatrix2): State at t = 0.
        params (LindbladParams): Hamiltonian and rates.
        times (array-like): Nondecreasing output times (s), >= 0.
        method (str, optional): 'rk' (adaptive DOP853) or 'expm' (exact propagator).
        rtol, atol (float, optional): Integrator tolerances for 'rk'.
    Returns:
        LindbladTrace: States at the requested times.
    Raises:
        IntegrationError: If the integrator fails; carries the failure time.
    """
    if method not in METHODS:
        raise ParameterError(f'unknown propagation method {method!r}; expected one of {METHODS}')
    times = _check_times(times)
    L = liouvillian(params)
    y0 = rho0.matrix.reshape(4)
    if method == 'expm':
        y = _propagate_expm(L, y0, times)
    else:
        y = _propagate_rk(L, y0, times, rtol, atol)
    return LindbladTrace(times=times, states=y.reshape(-1, 2, 2))


def background_population(t, gamma1):
    """Excited population 0.5(1 - exp(-2 gamma1 t)) of an undriven flip channel."""
    return 0.5 * (1.0 - np.exp(-2.0 * gamma1 * np.asarray(t, dtype=float)))


def ensemble_average_evolution(params, spread, times, method='rk', rho0=None):
    """
    Excited population averaged over the Overhauser distribution.

    Each grid point evolves with detuning Delta + Delta_oh(sigma); the traces
    are summed with the spread weights in grid order.

    Args:
        params (LindbladParams): Base parameters.
        spread (EnsembleSpread): Overhauser distribution.
        times (array-like): Output times (s).
        method (str, optional): 'rk' or 'expm'.
        rho0 (DensityMatrix2, optional): Initial state, ground by default.
    Returns:
        numpy.ndarray: Averaged excited population.
    """
    rho0 = rho0 or DensityMatrix2.ground()
    times = _check_times(times)
    shifts = spread.overhauser_shifts
    if method == 'expm':
        Ls = np.stack([liouvillian(params.detuned(s)) for s in shifts])
        y = _propagate_expm(Ls, rho0.matrix.reshape(4), times)
        populations = y[..., 3].real
        return np.tensordot(spread.weights, populations, axes=1)
    average = np.zeros_like(times)
    for weight, shift in zip(spread.weights, shifts):
        trace = evolve_lindblad(rho0, params.detuned(shift), times, method=method)
        average += weight * trace.excited_population
    return average


# --- Sideband spectra ---

@dataclass(frozen=True)
class Sideband:
    """
    One resonance of the electron spin resonance spectrum.

    Attributes:
        label (str): e.g. 'carrier', '75As-', '75As+'.
        center_hz (float): Resonance position on the detuning axis (Hz).
        params (LindbladParams): Exchange rate and damping at that resonance.
    """
    label: str
    center_hz: float
    params: LindbladParams


def default_sidebands(registry, sin_phi, N_species, omega_rabi, gamma1=DEFAULT_GAMMA1,
                      Gamma=0.0, field_scale=1.0):
    """
    Negative and positive sidebands of every species in a registry.

    Couplings are uniform across the dot: species j has N_species * c_j nuclei
    with single-nucleus constant a_j = A_j / N_species, so a_nc_j = a_j sin(phi).

    Args:
        registry (SpeciesRegistry): Species and field.
        sin_phi (float): Tilt of the electron quantization axis.
        N_species (float): Nuclei per sublattice.
        omega_rabi (float): Electron Rabi frequency (Hz).
        gamma1 (float, optional): Spin-flip rate (1/s).
        Gamma (float, optional): Dephasing rate (1/s).
        field_scale (float, optional): Scale applied to the Larmor frequencies.
    Returns:
        list of Sideband: Ordered by species, negative before positive.
    """
    if not N_species >= 1:
        raise ParameterError(f'N_species must be at least 1, got {N_species}')
    larmor = registry.larmor_frequencies(scale=field_scale)
    sidebands = []
    for species in registry:
        omega_n = larmor[species.name]
        a_nc = species.hyperfine_A / N_species * sin_phi
        rate = magnon_rabi_rate(a_nc, omega_rabi, omega_n, N_species * species.abundance_c)
        params = LindbladParams(omega_mag=rate, gamma1=gamma1, Gamma=Gamma)
        sidebands.append(Sideband(f'{species.name}-', -omega_n, params))
        sidebands.append(Sideband(f'{species.name}+', omega_n, params))
    return sidebands


def resonance_linewidth(params, spread):
    return max(params.omega_mag, spread.linewidth, params.Gamma / (2.0 * math.pi))


@dataclass
class SpectrumMap:
    """
    Spin-down population on a (detuning x time) grid.

    Attributes:
        delta (numpy.ndarray): Detuning grid (Hz).
        times (numpy.ndarray): Drive times (s).
        population (numpy.ndarray): Shape (n_delta, n_times).
        resonances (list of Sideband): Carrier first, then sidebands.
        warnings (list of str): Overlap diagnostics.
    """
    delta: np.ndarray
    times: np.ndarray
    population: np.ndarray
    resonances: list
    warnings: list = field(default_factory=list)

    def metadata(self):
        return {
            'resonances': [{'label': r.label, 'center_hz': r.center_hz,
                            'omega_mag_hz': r.params.omega_mag, 'gamma1_per_s': r.params.gamma1,
                            'Gamma_per_s': r.params.Gamma} for r in self.resonances],
            'warnings': list(self.warnings),
        }


def simulate_sideband_spectrum(delta_grid, times, carrier, sidebands, spread=None, method='expm'):
    """
    Compose the carrier and sideband responses into a 2-D spectrum map.

    Every resonance is an independent damped two-level system centered at its
    detuning; its excess over the undriven background is added to the
    background 0.5(1 - exp(-2 gamma1 t)) of the carrier. A resonance is only
    evaluated within 20 linewidths of its center.

    Args:
        delta_grid (array-like): Drive detunings (Hz), non-empty.
        times (array-like): Drive times (s), non-empty.
        carrier (LindbladParams): Bare electron resonance at detuning 0.
        sidebands (list of Sideband): Nuclear sidebands.
        spread (EnsembleSpread, optional): Overhauser distribution (none by default).
        method (str, optional): Propagation method.
    Returns:
        SpectrumMap: Population map with overlap warnings.
    """
    delta_grid = np.atleast_1d(np.asarray(delta_grid, dtype=float))
    if delta_grid.ndim != 1 or delta_grid.size == 0:
        raise ParameterError('detuning grid must be non-empty')
    times = _check_times(times)
    spread = spread or EnsembleSpread.uniform(math.inf)
    resonances = [Sideband('carrier', 0.0, carrier)] + list(sidebands)

    warnings = []
    ordered = sorted(resonances, key=lambda r: r.center_hz)
    for left, right in zip(ordered, ordered[1:]):
        width = max(resonance_linewidth(left.params, spread), resonance_linewidth(right.params, spread))
        if right.center_hz - left.center_hz < OVERLAP_LINEWIDTHS * width:
            message = (f'resonances {left.label} and {right.label} overlap: spacing '
                       f'{right.center_hz - left.center_hz:.4g} Hz < {OVERLAP_LINEWIDTHS:g} linewidths')
            logger.warning(message)
            warnings.append(message)

    background = background_population(times, carrier.gamma1)
    population = np.tile(background, (delta_grid.size, 1))
    for resonance in resonances:
        window = RESONANCE_WINDOW * resonance_linewidth(resonance.params, spread)
        near = np.nonzero(np.abs(delta_grid - resonance.center_hz) <= window)[0]
        own_background = background_population(times, resonance.params.gamma1)
        for k in near:
            params = resonance.params.detuned(delta_grid[k] - resonance.center_hz)
            response = ensemble_average_evolution(params, spread, times, method=method)
            population[k] += response - own_background
        logger.debug('%s: evaluated %d detunings', resonance.label, near.size)
    return SpectrumMap(delta=delta_grid, times=times, population=population,
                       resonances=resonances, warnings=warnings)
