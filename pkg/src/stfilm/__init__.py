"""Split-step simulation of the stochastic thin-film equation with absorption."""
__version__ = "0.1.0"

from .basis import NoiseSpectrum, SpectralBasis, build_basis, build_noise_spectrum
from .det_solver import DetParams, det_evolve, det_step
from .errors import ConfigError, SolverError
from .field import Field
from .rng import RngLease, WienerIncrements
from .splitting import concatenate, make_schedule, run_split
from .stoch_solver import LipschitzCoefficient, StochParams, stoch_evolve, stoch_step

