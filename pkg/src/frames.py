"""
frames.py: Electron Quantization-Axis Geometry

The electron g-tensor is anisotropic in the [110]/[-110] basis, so the electron
quantization axis is tilted from the external field by phi0. A mean-field
Overhauser shift delta_oh along the field pulls the axis back towards the
field: the tilt angle phi shrinks and with it the non-collinear hyperfine
constant a_nc = a sin(phi).

All closed forms are exact; the small-angle form omega_e ~ omega_e0 + delta_oh
is never used internally.

Functions:
----------
- anisotropy_angle(g):            phi0 = arctan((g110 - g_m110)/(g110 + g_m110))
- gtensor_from_sin_phi0(s, g):    principal g-values reproducing a given sin(phi0)
- make_frame(omega_e0, phi0, d):  FrameGeometry with omega_e, sin(phi), cos(phi)
- nc_scaling(omega_e0, omega_e):  a_nc / a_nc0 = omega_e0 / omega_e
- overhauser_for_target(...):     delta_oh that yields a requested omega_e
- hyperfine_couplings(a, frame):  collinear / non-collinear split of a
- quadrupolar_nc_estimate(...):   a * B_Q / omega_n comparison scale
"""

import math
from dataclasses import asdict, dataclass, field

from .errors import FrameError, ParameterError


@dataclass(frozen=True)
class GTensor:
    """Principal electron g-values along [110] and [-110]."""
    g110: float
    g_m110: float

    def __post_init__(self):
        if self.g110 + self.g_m110 == 0:
            raise FrameError('g110 + g_m110 = 0: anisotropy angle undefined')


@dataclass(frozen=True)
class FrameGeometry:
    """
    Electron frame for one Overhauser shift.

    Attributes:
        omega_e0 (float): Bare Zeeman splitting (Hz).
        phi0 (float): Anisotropy angle (rad).
        delta_oh (float): Mean-field Overhauser shift (Hz), may be negative.
        omega_e (float): Overhauser-shifted splitting (Hz).
        sin_phi, cos_phi (float): Tilt of the quantization axis from the field.
    """
    omega_e0: float
    phi0: float
    delta_oh: float
    omega_e: float = field(init=False)
    sin_phi: float = field(init=False)
    cos_phi: float = field(init=False)

    def __post_init__(self):
        if not self.omega_e0 > 0:
            raise ParameterError(f'omega_e0 must be positive, got {self.omega_e0}')
        parallel = self.omega_e0 * math.cos(self.phi0) + self.delta_oh
        transverse = self.omega_e0 * math.sin(self.phi0)
        omega_e = math.sqrt(parallel * parallel + transverse * transverse)
        if omega_e == 0:
            raise FrameError('Overhauser shift cancels the Zeeman splitting (omega_e = 0)')
        object.__setattr__(self, 'omega_e', omega_e)
        object.__setattr__(self, 'sin_phi', transverse / omega_e)
        object.__setattr__(self, 'cos_phi', parallel / omega_e)

    @property
    def phi(self):
        return math.atan2(self.sin_phi, self.cos_phi)

    def to_dict(self):
        doc = asdict(self)
        doc['phi'] = self.phi
        return doc


@dataclass(frozen=True)
class HyperfineCouplings:
    """Single-nucleus hyperfine constant split along and across the electron axis (Hz)."""
    a: float
    a_nc: float
    a_col: float


def anisotropy_angle(g):
    """
    Tilt of the electron quantization axis from the external field.

    Args:
        g (GTensor): Principal g-values.
    Returns:
        float: phi0 (rad).
    Raises:
        FrameError: If g110 + g_m110 = 0.
    """
    denominator = g.g110 + g.g_m110
    if denominator == 0:
        raise FrameError('g110 + g_m110 = 0: anisotropy angle undefined')
    return math.atan((g.g110 - g.g_m110) / denominator)


def gtensor_from_sin_phi0(sin_phi0, g_mean):
    """
    Principal g-values with mean g_mean that reproduce sin(phi0).

    Only sin(phi0) is measured, so the split between g110 and g_m110 is
    reconstructed from an assumed mean g-factor.

    Args:
        sin_phi0 (float): Measured sine of the anisotropy angle, |sin_phi0| < 1.
        g_mean (float): (g110 + g_m110) / 2, nonzero.
    Returns:
        GTensor: Principal values.
    """
    if not -1.0 < sin_phi0 < 1.0:
        raise ParameterError(f'sin_phi0 must lie in (-1, 1), got {sin_phi0}')
    if g_mean == 0:
        raise FrameError('mean g-factor must be nonzero')
    tan_phi0 = math.tan(math.asin(sin_phi0))
    return GTensor(g110=g_mean * (1.0 + tan_phi0), g_m110=g_mean * (1.0 - tan_phi0))


def make_frame(omega_e0, phi0, delta_oh=0.0):
    """
    Build the Overhauser-shifted electron frame.

    Args:
        omega_e0 (float): Bare Zeeman splitting (Hz), positive.
        phi0 (float): Anisotropy angle (rad).
        delta_oh (float, optional): Overhauser shift (Hz).
    Returns:
        FrameGeometry: Derived splitting and tilt.
    Raises:
        ParameterError: If omega_e0 <= 0.
        FrameError: If the splitting vanishes.
    """
    return FrameGeometry(omega_e0=omega_e0, phi0=phi0, delta_oh=delta_oh)


def nc_scaling(omega_e0, omega_e):
    """
    Ratio a_nc / a_nc0 = sin(phi)/sin(phi0) = omega_e0 / omega_e.

    Raises:
        ParameterError: If either splitting is not positive.
    """
    if not omega_e > 0:
        raise ParameterError(f'omega_e must be positive, got {omega_e}')
    if not omega_e0 > 0:
        raise ParameterError(f'omega_e0 must be positive, got {omega_e0}')
    return omega_e0 / omega_e


def overhauser_for_target(omega_e_target, omega_e0, phi0, aligned=True):
    """
    Overhauser shift that produces a requested electron splitting.

    Inverts make_frame: omega_e^2 = (omega_e0 cos(phi0) + d)^2 + (omega_e0 sin(phi0))^2.

    Args:
        omega_e_target (float): Requested omega_e (Hz).
        omega_e0 (float): Bare Zeeman splitting (Hz).
        phi0 (float): Anisotropy angle (rad).
        aligned (bool, optional): Root with the parallel component along the
            field (default). False selects the anti-polarized root.
    Returns:
        float: delta_oh (Hz).
    Raises:
        ParameterError: If the target lies below omega_e0 * |sin(phi0)|.
    """
    if not omega_e0 > 0:
        raise ParameterError(f'omega_e0 must be positive, got {omega_e0}')
    transverse = omega_e0 * math.sin(phi0)
    if omega_e_target < abs(transverse):
        raise ParameterError(
            f'omega_e = {omega_e_target:.6g} Hz is unreachable: minimum is {abs(transverse):.6g} Hz')
    parallel = math.sqrt(omega_e_target * omega_e_target - transverse * transverse)
    if not aligned:
        parallel = -parallel
    return parallel - omega_e0 * math.cos(phi0)


def hyperfine_couplings(a, frame):
    """Split the single-nucleus constant a into a sin(phi) and a cos(phi) for a frame."""
    return HyperfineCouplings(a=a, a_nc=a * frame.sin_phi, a_col=a * frame.cos_phi)


def quadrupolar_nc_estimate(a, quadrupolar_shift, omega_n):
    """
    Non-collinear coupling mediated by nuclear quadrupolar tilt, a * B_Q / omega_n.

    Args:
        a (float): Single-nucleus hyperfine constant (Hz).
        quadrupolar_shift (float): Nuclear quadrupolar shift B_Q (Hz).
        omega_n (float): Nuclear Larmor frequency (Hz), positive.
    Returns:
        float: a_nc^Q (Hz).
    """
    if not omega_n > 0:
        raise ParameterError(f'omega_n must be positive, got {omega_n}')
    return a * quadrupolar_shift / omega_n
