"""Glauber dynamics with Kac interaction and quenched random field.

Simulation (event-driven kinetic Monte Carlo, exact thinning), mesoscopic
nonlocal PDE solvers, path-cost functionals with closed-form Legendre
transforms, tilted dynamics with likelihood-ratio weights, and control
synthesis for rare-event estimates.
"""

__version__ = "0.1.0"

from .errors import BoxViolation, ConfigError, MarginViolation
from .model import (
    DiscreteKernel,
    DisorderField,
    KernelSpec,
    ModelParams,
    SpinConfig,
    block_average,
    build_kernel,
    ergodic_defect,
    sample_disorder,
    sample_spins,
)

__all__ = [
    "BoxViolation",
    "ConfigError",
    "MarginViolation",
    "DiscreteKernel",
    "DisorderField",
    "KernelSpec",
    "ModelParams",
    "SpinConfig",
    "block_average",
    "build_kernel",
    "ergodic_defect",
    "sample_disorder",
    "sample_spins",
    "__version__",
]
