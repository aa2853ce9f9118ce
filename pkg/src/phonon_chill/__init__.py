"""Laser cooling of a hot oscillator through a dissipative few-level system.

Displacement-resolved cooling and heating rates from the periodically driven
qudit dynamics (matrix continued fractions with time-domain oracles), and the
oscillator's equilibrium and transient phonon statistics from a radial
drift-diffusion equation for the Glauber P function.
"""

from .levels import (
    BlochSystem,
    LevelSystem,
    OscillatorSpec,
    QuditSpec,
    ReducedBloch,
    bloch_to_density,
    build_bloch_matrices,
    build_level_system,
    build_reduced,
    effective_two_level,
    reduce_trace,
    solve_static_steady,
    solve_steady_displacement,
)

__version__ = "0.1.0"
