"""flip: particle-based powder flow lab, calibration, and weighing RL."""

from .params import Bounds, SimParams, init_bounds
from .solver import ParticleSystem, SimConfig

__version__ = "0.1.0"

__all__ = [
    "Bounds",
    "ParticleSystem",
    "SimConfig",
    "SimParams",
    "init_bounds",
    "__version__",
]
