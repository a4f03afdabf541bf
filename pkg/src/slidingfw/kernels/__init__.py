from .base import AtomMatrix, ConfigurationError, DomainError, Kernel, Kernel1D
from .gaussian import Gaussian1D
from .laplace import ContinuousLaplace, SampledLaplace
from .microscopy import (
    Astigmatism,
    DoubleHelix,
    MaTirf,
    Optics,
    PixelatedGaussian3D,
    astig_sigmas,
    helix_offsets,
    pixel_integrals,
    tirf_angles_and_depths,
)

__all__ = [
    "AtomMatrix", "ConfigurationError", "DomainError", "Kernel", "Kernel1D",
    "Gaussian1D", "ContinuousLaplace", "SampledLaplace", "Astigmatism",
    "DoubleHelix", "MaTirf", "Optics", "PixelatedGaussian3D", "astig_sigmas",
    "helix_offsets", "pixel_integrals", "tirf_angles_and_depths",
]
