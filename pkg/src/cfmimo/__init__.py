"""Cell-free massive MIMO uplink simulator.

Channel synthesis over jointly-correlated Rayleigh fading, MMSE channel
estimation under pilot sharing, two-layer decoding (per-AP combining plus
statistics-based fusion), exact closed-form spectral-efficiency
expressions for MR combining, and iteratively weighted-MMSE optimization
of the uplink data precoders.
"""

__version__ = "0.1.0"

from .harness import SystemConfig, run_drop, sweep  # noqa: E402,F401
