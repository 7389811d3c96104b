"""
exampleUse.py: Example usage of the central-spin magnon toolkit

This script predicts the magnon Rabi rate of 75As at the measured operating
point, evaluates the CP1 visibility at the first 75As Larmor period and
integrates one damped magnon Rabi oscillation.
"""

import math
import sys
import os
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src import coherence, frames, magnon
from src.species import default_registry

if __name__ == "__main__":
    registry = default_registry()
    arsenic = registry.get('75As')
    omega_n = registry.larmor_frequencies()['75As']

    # Operating point: a = 0.28 MHz, sin(phi) = 0.207 at omega_e = 3 GHz
    frame = frames.make_frame(3.0e9, math.asin(0.207))
    couplings = frames.hyperfine_couplings(0.28e6, frame)
    rate = magnon.magnon_rabi_rate(couplings.a_nc, 5.2e6, omega_n, arsenic.hyperfine_A / 0.28e6)
    print(f"Omega_mag = {rate / 1e6:.4f} MHz (75As Larmor {omega_n / 1e6:.3f} MHz)")

    model = coherence.VisibilityModel(sin_phi=frame.sin_phi, N_total=7.6e4, registry=registry)
    W = coherence.visibility(1.0 / omega_n, model, coherence.PulseSequence.CP1)
    print(f"CP1 visibility at t = 1/omega_As: {W:.4f}")

    params = magnon.LindbladParams(omega_mag=rate, gamma1=magnon.DEFAULT_GAMMA1, Gamma=2.0e5)
    times = [0.0, 0.25 / rate, 0.5 / rate, 1.0 / rate]
    trace = magnon.evolve_lindblad(magnon.DensityMatrix2.ground(), params, times)
    for t, p in zip(times, trace.excited_population):
        print(f"t = {t * 1e9:8.2f} ns  P(down) = {p:.4f}")
